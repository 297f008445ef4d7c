#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qcd/config.hpp"
#include "qcd/csv.hpp"
#include "qcd/error.hpp"

namespace qcd {

inline std::filesystem::path write_results_csv(const ResultTable& table,
                                               const std::filesystem::path& dir,
                                               const std::string& stem) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (stem + "_results.csv");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_csv(table, out);
  return path;
}

inline std::filesystem::path write_metadata(const ExperimentPlan& plan,
                                            const ResultTable& table,
                                            double wall_seconds,
                                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (plan.experiment + "_metadata.json");
  Json meta{{"experiment", plan.experiment},
            {"config", plan.echo},
            {"config_hash", table.config_hash},
            {"seed", table.seed},
            {"rows", table.rows.size()},
            {"wall_time_seconds", wall_seconds},
            {"toolkit_version", "0.1.0"},
            {"compiler", __VERSION__}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << meta.dump(2) << '\n';
  return path;
}

namespace detail {

struct PlotPanel {
  std::string experiment_id;
  std::string xlabel;
  std::string ylabel;
  bool logx = false;
  std::string image;
};

inline std::vector<PlotPanel> plot_panels(const std::string& experiment) {
  if (experiment == "fig1a")
    return {{"fig1a", "change point", "average detection delay", false, "fig1a.png"}};
  if (experiment == "fig1b")
    return {{"fig1b", "target average run length", "delay at change point 1", true,
             "fig1b.png"}};
  if (experiment == "fig2")
    return {{"fig2", "post-change support size", "average detection delay", false,
             "fig2.png"}};
  if (experiment == "fdr")
    return {{"fdr_alpha", "target level", "error rate at the horizon", false,
             "fdr_alpha.png"},
            {"fdr_time", "evaluation tick", "error rate", false, "fdr_time.png"}};
  return {{"custom", "change point", "average detection delay", false, "custom.png"}};
}

}  // namespace detail

// Emits a standalone python script that reads only the CSV next to it.
// The script is a disposable artifact: deleting it loses nothing.
inline std::filesystem::path write_plot_script(const std::string& experiment,
                                               const std::string& csv_name,
                                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (experiment + "_plot.py");
  std::string panels = "[";
  for (const auto& p : detail::plot_panels(experiment)) {
    panels += "(\"" + p.experiment_id + "\", \"" + p.xlabel + "\", \"" + p.ylabel +
              "\", " + (p.logx ? "True" : "False") + ", \"" + p.image + "\"), ";
  }
  panels += "]";

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "#!/usr/bin/env python3\n"
         "\"\"\"Plots the rows of "
      << csv_name
      << ". Generated file; regenerate rather than edit.\"\"\"\n"
         "import collections\n"
         "import csv\n"
         "\n"
         "import matplotlib\n"
         "matplotlib.use(\"Agg\")\n"
         "import matplotlib.pyplot as plt\n"
         "\n"
         "CSV = \""
      << csv_name
      << "\"\n"
         "PANELS = "
      << panels
      << "\n"
         "\n"
         "rows = []\n"
         "with open(CSV, newline=\"\") as f:\n"
         "    rows = list(csv.DictReader(f))\n"
         "\n"
         "def series(experiment_id):\n"
         "    out = collections.defaultdict(lambda: ([], [], []))\n"
         "    for r in rows:\n"
         "        if r[\"experiment\"] != experiment_id:\n"
         "            continue\n"
         "        xs, ys, es = out[r[\"detector\"]]\n"
         "        xs.append(float(r[\"scenario_parameter\"]))\n"
         "        ys.append(float(r[\"estimate\"]))\n"
         "        es.append(float(r[\"std_error\"]))\n"
         "    return out\n"
         "\n"
         "for experiment_id, xlabel, ylabel, logx, image in PANELS:\n"
         "    fig, ax = plt.subplots(figsize=(7.0, 4.5))\n"
         "    for name, (xs, ys, es) in sorted(series(experiment_id).items()):\n"
         "        order = sorted(range(len(xs)), key=lambda i: xs[i])\n"
         "        xs = [xs[i] for i in order]\n"
         "        ys = [ys[i] for i in order]\n"
         "        es = [2.0 * es[i] for i in order]\n"
         "        ax.errorbar(xs, ys, yerr=es, marker=\"o\", capsize=3, label=name)\n"
         "    if experiment_id == \"fdr_alpha\":\n"
         "        lim = max((v for xs, _, _ in series(experiment_id).values()\n"
         "                   for v in xs), default=1.0)\n"
         "        ax.plot([0.0, lim], [0.0, lim], \"k--\", alpha=0.5,\n"
         "                label=\"target level\")\n"
         "    if logx:\n"
         "        ax.set_xscale(\"log\")\n"
         "    ax.set_xlabel(xlabel)\n"
         "    ax.set_ylabel(ylabel)\n"
         "    ax.grid(True, alpha=0.3)\n"
         "    ax.legend()\n"
         "    fig.tight_layout()\n"
         "    fig.savefig(image, dpi=150)\n"
         "    print(\"wrote\", image)\n";
  return path;
}

}  // namespace qcd
