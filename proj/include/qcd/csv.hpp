#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace qcd {

// One estimate with its provenance. scenario_parameter is whatever the
// experiment sweeps: a change point, a target run length, a sparsity
// level, a confidence level, or an evaluation tick.
struct ResultRow {
  std::string experiment;
  std::string detector;
  double scenario_parameter = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t replications = 0;
  double threshold = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

namespace detail {

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline void write_csv(const ResultTable& table, std::ostream& out) {
  out << "experiment,detector,scenario_parameter,estimate,std_error,replications,"
         "threshold,seed,config_hash\n";
  const std::string seed = std::to_string(table.seed);
  const std::string hash = detail::csv_quote(table.config_hash);
  for (const auto& r : table.rows) {
    out << detail::csv_quote(r.experiment) << ',' << detail::csv_quote(r.detector)
        << ',' << format_double(r.scenario_parameter) << ','
        << format_double(r.estimate) << ',' << format_double(r.std_error) << ','
        << r.replications << ',' << format_double(r.threshold) << ',' << seed << ','
        << hash << '\n';
  }
}

inline std::string csv_to_string(const ResultTable& table) {
  std::string out;
  out.reserve(128 + table.rows.size() * 120);
  struct Sink : std::streambuf {
    std::string* s;
    explicit Sink(std::string* str) : s(str) {}
    std::streamsize xsputn(const char* p, std::streamsize n) override {
      s->append(p, static_cast<std::size_t>(n));
      return n;
    }
    int overflow(int c) override {
      s->push_back(static_cast<char>(c));
      return c;
    }
  } sink(&out);
  std::ostream os(&sink);
  write_csv(table, os);
  return out;
}

}  // namespace qcd
