#pragma once

// MetricRecord: every outcome measure for one (kind, gamma, seed, epoch)
// checkpoint, plus the CSV table that collects them.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sernn/checkpoint.hpp"
#include "sernn/constraints.hpp"
#include "sernn/error.hpp"
#include "sernn/metrics.hpp"

namespace sernn {

struct MetricRecord {
  RegularizerKind kind = RegularizerKind::BaselineL1;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  int epoch = 0;
  double accuracy = 0.0;
  double q = 0.0;
  double h_w = 0.0;
  double h_c = 0.0;
  double h_lambda = 0.0;
  double lambda_max = 0.0;
  double total_weight = 0.0;
  double sym_index = 0.0;
  double imag_fraction = 0.0;
  double dist_corr_r = 0.0;
  double dist_corr_p = 1.0;

  auto key() const { return std::make_tuple(static_cast<int>(kind), gamma, seed, epoch); }
  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

// Numeric field accessor by CSV column name (for group statistics).
inline double metric_value(const MetricRecord& r, std::string_view metric) {
  if (metric == "accuracy") return r.accuracy;
  if (metric == "Q") return r.q;
  if (metric == "H_W") return r.h_w;
  if (metric == "H_C") return r.h_c;
  if (metric == "H_lambda") return r.h_lambda;
  if (metric == "lambda_max") return r.lambda_max;
  if (metric == "total_weight") return r.total_weight;
  if (metric == "sym_index") return r.sym_index;
  if (metric == "imag_fraction") return r.imag_fraction;
  if (metric == "dist_corr_r") return r.dist_corr_r;
  if (metric == "dist_corr_p") return r.dist_corr_p;
  throw InvalidArgument("unknown metric '" + std::string(metric) + "'");
}

// All measures of a recurrent weight matrix. Degenerate inputs get neutral
// values (Q = 0 with one community, zero entropies, r = 0 with p = 1) so
// that every record stays finite.
inline MetricRecord analyze_weights(const Matrix& w, const DistanceLattice& lattice, double eps = 1e-6) {
  MetricRecord r;
  const bool all_zero = !(metrics::total_weight(w) > 0.0);
  r.total_weight = metrics::total_weight(w);
  if (!all_zero) {
    r.h_w = metrics::shannon_entropy(w);
    r.sym_index = metrics::symmetry_index(w);
  }
  r.h_c = metrics::shannon_entropy(communicability(w, eps));
  const ComplexSpectrum spec = eigenvalues(w);
  r.h_lambda = metrics::spectral_entropy(spec);
  r.lambda_max = metrics::leading_eigenvalue(spec);
  r.imag_fraction = metrics::imag_fraction(spec);
  try {
    r.q = metrics::modularity_q(w).q;
  } catch (const DegenerateInput&) {
    r.q = 0.0;
  }
  try {
    const auto c = metrics::distance_weight_correlation(w, lattice);
    r.dist_corr_r = c.r;
    r.dist_corr_p = c.p;
  } catch (const DegenerateInput&) {
    r.dist_corr_r = 0.0;
    r.dist_corr_p = 1.0;
  }
  return r;
}

inline MetricRecord analyze_checkpoint(const NetworkCheckpoint& c, const DistanceLattice& lattice) {
  const Matrix w = c.recurrent_weights();
  if (static_cast<std::size_t>(w.rows()) != lattice.size()) {
    throw InvalidArgument("analyze_checkpoint: checkpoint does not match the lattice");
  }
  MetricRecord r = analyze_weights(w, lattice);
  r.kind = c.kind;
  r.gamma = c.gamma;
  r.seed = c.seed;
  r.epoch = c.epoch;
  r.accuracy = c.accuracy;
  return r;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "kind,gamma,seed,epoch,accuracy,Q,H_W,H_C,H_lambda,lambda_max,total_weight,sym_index,imag_fraction,"
    "dist_corr_r,dist_corr_p";

inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string to_csv_row(const MetricRecord& r) {
  std::string s(kind_name(r.kind));
  for (const std::string& f :
       {format_g9(r.gamma), std::to_string(r.seed), std::to_string(r.epoch), format_g9(r.accuracy), format_g9(r.q),
        format_g9(r.h_w), format_g9(r.h_c), format_g9(r.h_lambda), format_g9(r.lambda_max), format_g9(r.total_weight),
        format_g9(r.sym_index), format_g9(r.imag_fraction), format_g9(r.dist_corr_r), format_g9(r.dist_corr_p)}) {
    s += ',';
    s += f;
  }
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline MetricRecord from_csv_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 15) throw FormatError("metrics row has " + std::to_string(f.size()) + " fields, expected 15");
  try {
    MetricRecord r;
    r.kind = parse_kind(f[0]);
    r.gamma = std::stod(f[1]);
    r.seed = std::stoull(f[2]);
    r.epoch = std::stoi(f[3]);
    double* targets[] = {&r.accuracy, &r.q, &r.h_w, &r.h_c, &r.h_lambda, &r.lambda_max,
                         &r.total_weight, &r.sym_index, &r.imag_fraction, &r.dist_corr_r, &r.dist_corr_p};
    for (std::size_t i = 0; i < 11; ++i) *targets[i] = std::stod(f[4 + i]);
    return r;
  } catch (const std::logic_error& e) {
    throw FormatError("bad metrics row '" + line + "': " + e.what());
  }
}

// Records keyed by (kind, gamma, seed, epoch): duplicates collapse (last wins).
class MetricsTable {
 public:
  MetricsTable() = default;
  explicit MetricsTable(std::vector<MetricRecord> records) {
    for (const auto& r : records) insert(r);
  }

  // Values are normalized to their 9-significant-digit CSV form on entry, so
  // an in-memory table equals its reloaded copy.
  void insert(const MetricRecord& record) {
    MetricRecord r = from_csv_row(to_csv_row(record));
    auto key = r.key();
    rows_[key] = std::move(r);
  }

  std::vector<MetricRecord> records() const {
    std::vector<MetricRecord> out;
    out.reserve(rows_.size());
    for (const auto& [k, r] : rows_) out.push_back(r);
    return out;
  }

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  std::string to_csv() const {
    std::string s = kMetricsHeader;
    s += '\n';
    for (const auto& [k, r] : rows_) {
      s += to_csv_row(r);
      s += '\n';
    }
    return s;
  }

  void save(const fs::path& path) const { detail::write_text(path, to_csv()); }

  static MetricsTable parse(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metrics table: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) throw FormatError("metrics table: unexpected header");
    MetricsTable t;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      t.insert(from_csv_row(line));
    }
    return t;
  }

  static MetricsTable load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return parse(in);
  }

 private:
  std::map<std::tuple<int, double, std::uint64_t, int>, MetricRecord> rows_;
};

}  // namespace sernn
