#pragma once

// Regularization sweeps: gamma calibration, the resumable run queue, figure
// extracts and group statistics over a MetricsTable.
//
// Sweep directory layout:
//   <out>/sweep.json                 resolved configuration (grids included)
//   <out>/calibration_<kind>.json    probe outcomes, when gamma_max was calibrated
//   <out>/runs/run_<kind>_<gamma>_<seed>/{epoch_<k>/, run.json, records.csv}
//   <out>/metrics.csv                every record, sorted by key
//   <out>/attrition.csv              one status row per run

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sernn/checkpoint.hpp"
#include "sernn/constraints.hpp"
#include "sernn/error.hpp"
#include "sernn/metrics_table.hpp"
#include "sernn/numerics.hpp"
#include "sernn/training.hpp"

namespace sernn {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SweepConfig {
  std::vector<RegularizerKind> kinds = {RegularizerKind::BaselineL1, RegularizerKind::SpaceComm};
  std::map<RegularizerKind, std::vector<double>> gammas;  // explicit grid per kind
  std::map<RegularizerKind, double> gamma_max;            // linear grid 0..gamma_max
  int gamma_count = 10;
  int seeds = 10;
  std::uint64_t base_seed = 1;
  int parallelism = 0;  // 0: SERNN_THREADS or the number of logical cores
  int probe_seeds = 3;
  int max_doublings = 30;
  std::optional<double> filter_threshold;  // overrides the task default
  TrainConfig train;                       // kind, gamma and seed are set per run

  double threshold() const { return filter_threshold.value_or(sernn::filter_threshold(train.task)); }
  bool passes(double accuracy) const { return accuracy > threshold(); }

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> out;
    for (int i = 0; i < seeds; ++i) out.push_back(base_seed + static_cast<std::uint64_t>(i));
    return out;
  }

  void validate() const {
    if (kinds.empty()) throw InvalidArgument("sweep: no kinds selected");
    if (seeds < 1) throw InvalidArgument("sweep: seeds must be >= 1");
    if (gamma_count < 1) throw InvalidArgument("sweep: gamma_count must be >= 1");
    if (probe_seeds < 3) throw InvalidArgument("sweep: calibration needs at least 3 probe seeds");
    if (max_doublings < 0) throw InvalidArgument("sweep: max_doublings must be >= 0");
    for (const auto& [k, grid] : gammas) {
      if (grid.empty()) throw InvalidArgument("sweep: empty gamma grid for " + std::string(kind_name(k)));
      for (double g : grid)
        if (!(g >= 0.0) || !std::isfinite(g)) throw InvalidArgument("sweep: gammas must be finite and >= 0");
    }
    for (const auto& [k, g] : gamma_max)
      if (!(g >= 0.0) || !std::isfinite(g)) throw InvalidArgument("sweep: gamma_max must be finite and >= 0");
    TrainConfig probe = train;
    probe.gamma = 0.0;
    probe.validate();
  }
};

// k / (count - 1) * gamma_max for k = 0 .. count - 1.
inline std::vector<double> linear_grid(double gamma_max, int count) {
  if (count < 1) throw InvalidArgument("linear_grid: count must be >= 1");
  if (count == 1) return {gamma_max};
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(gamma_max * static_cast<double>(k) / static_cast<double>(count - 1));
  return out;
}

namespace detail {

inline const std::set<std::string>& sweep_keys() {
  static const std::set<std::string> keys = {
      "kinds",      "gammas",        "gamma_max",        "gamma_count", "seeds", "base_seed",
      "task",       "epochs",        "parallelism",      "probe_seeds", "max_doublings",
      "filter_threshold", "train"};
  return keys;
}

inline const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys = {
      "lr",        "batch",     "trials_per_epoch", "eval_trials", "dt_ms", "max_steps", "data_seed",
      "shd_train", "shd_test",  "synthetic_train_per_class", "synthetic_test_per_class", "lattice"};
  return keys;
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw FormatError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
std::map<RegularizerKind, T> per_kind(const nlohmann::json& j, const std::vector<RegularizerKind>& kinds) {
  std::map<RegularizerKind, T> out;
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) out[parse_kind(key)] = value.template get<T>();
  } else {
    for (auto k : kinds) out[k] = j.template get<T>();
  }
  return out;
}

}  // namespace detail

inline SweepConfig parse_sweep_config(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("sweep config must be a JSON object");
  SweepConfig c;
  try {
    detail::reject_unknown(j, detail::sweep_keys(), "sweep config");
    if (j.contains("kinds")) {
      const auto& k = j.at("kinds");
      if (k.is_string() && k.get<std::string>() == "all") {
        c.kinds.assign(kAllKinds.begin(), kAllKinds.end());
      } else {
        c.kinds.clear();
        for (const auto& name : k) c.kinds.push_back(parse_kind(name.get<std::string>()));
      }
    }
    if (j.contains("task")) c.train.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("gammas")) c.gammas = detail::per_kind<std::vector<double>>(j.at("gammas"), c.kinds);
    if (j.contains("gamma_max")) c.gamma_max = detail::per_kind<double>(j.at("gamma_max"), c.kinds);
    c.gamma_count = j.value("gamma_count", c.gamma_count);
    c.seeds = j.value("seeds", c.seeds);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.probe_seeds = j.value("probe_seeds", c.probe_seeds);
    c.max_doublings = j.value("max_doublings", c.max_doublings);
    if (j.contains("epochs")) c.train.epochs = j.at("epochs").get<int>();
    if (j.contains("filter_threshold")) c.filter_threshold = j.at("filter_threshold").get<double>();
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, detail::train_keys(), "sweep config 'train'");
      c.train.lr = t.value("lr", c.train.lr);
      if (t.contains("batch")) c.train.batch_size = t.at("batch").get<int>();
      c.train.trials_per_epoch = t.value("trials_per_epoch", c.train.trials_per_epoch);
      c.train.eval_trials = t.value("eval_trials", c.train.eval_trials);
      if (t.contains("dt_ms")) c.train.dt_ms = t.at("dt_ms").get<double>();
      if (t.contains("max_steps")) c.train.max_steps = t.at("max_steps").get<int>();
      c.train.data_seed = t.value("data_seed", c.train.data_seed);
      c.train.shd_train = t.value("shd_train", c.train.shd_train);
      c.train.shd_test = t.value("shd_test", c.train.shd_test);
      c.train.synthetic_train_per_class = t.value("synthetic_train_per_class", c.train.synthetic_train_per_class);
      c.train.synthetic_test_per_class = t.value("synthetic_test_per_class", c.train.synthetic_test_per_class);
      if (t.contains("lattice")) {
        const auto& l = t.at("lattice");
        c.train.lattice = {l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(), l.at(2).get<std::size_t>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("sweep config: ") + e.what());
  }
  c.validate();
  return c;
}

inline SweepConfig load_sweep_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_sweep_config(j);
}

inline nlohmann::ordered_json sweep_config_json(const SweepConfig& c) {
  nlohmann::ordered_json j;
  auto kinds = nlohmann::ordered_json::array();
  for (auto k : c.kinds) kinds.push_back(kind_name(k));
  j["kinds"] = kinds;
  j["task"] = task_name(c.train.task);
  if (!c.gammas.empty()) {
    nlohmann::ordered_json g;
    for (const auto& [k, grid] : c.gammas) g[std::string(kind_name(k))] = grid;
    j["gammas"] = g;
  }
  if (!c.gamma_max.empty()) {
    nlohmann::ordered_json g;
    for (const auto& [k, v] : c.gamma_max) g[std::string(kind_name(k))] = v;
    j["gamma_max"] = g;
  }
  j["gamma_count"] = c.gamma_count;
  j["seeds"] = c.seeds;
  j["base_seed"] = c.base_seed;
  j["epochs"] = c.train.resolved_epochs();
  j["parallelism"] = c.parallelism;
  j["probe_seeds"] = c.probe_seeds;
  j["max_doublings"] = c.max_doublings;
  if (c.filter_threshold) j["filter_threshold"] = *c.filter_threshold;
  nlohmann::ordered_json t;
  t["lr"] = c.train.lr;
  t["batch"] = c.train.resolved_batch();
  if (c.train.task == Task::Inference) {
    t["trials_per_epoch"] = c.train.trials_per_epoch;
    t["eval_trials"] = c.train.eval_trials;
  } else {
    t["dt_ms"] = c.train.resolved_dt();
    t["max_steps"] = c.train.resolved_steps();
    if (c.train.task == Task::SyntheticSpikes) {
      t["data_seed"] = c.train.data_seed;
      t["synthetic_train_per_class"] = c.train.synthetic_train_per_class;
      t["synthetic_test_per_class"] = c.train.synthetic_test_per_class;
    } else {
      t["shd_train"] = c.train.shd_train;
      t["shd_test"] = c.train.shd_test;
    }
  }
  t["lattice"] = {c.train.lattice.nx, c.train.lattice.ny, c.train.lattice.nz};
  j["train"] = t;
  return j;
}

// Worker count: the requested width (0 = logical cores), capped by
// SERNN_THREADS when that is set to a positive integer.
inline int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SERNN_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) n = std::min<int>(n, static_cast<int>(cap));
  }
  return std::max(1, n);
}

// Runs job(i) for i in [0, count) on `width` threads. The first exception
// is rethrown after all workers stop.
template <typename Job>
void parallel_for(std::size_t count, int width, Job&& job) {
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(width, static_cast<int>(count))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct CalibrationProbe {
  double gamma = 0.0;
  int passed = 0;
  int total = 0;
  std::vector<double> accuracies;
};

struct Calibration {
  RegularizerKind kind = RegularizerKind::SpaceComm;
  double gamma_max = 0.0;
  std::vector<CalibrationProbe> probes;
};

inline nlohmann::ordered_json calibration_json(const Calibration& c) {
  nlohmann::ordered_json j;
  j["kind"] = kind_name(c.kind);
  j["gamma_max"] = c.gamma_max;
  auto probes = nlohmann::ordered_json::array();
  for (const auto& p : c.probes) {
    probes.push_back({{"gamma", p.gamma}, {"passed", p.passed}, {"total", p.total}, {"accuracies", p.accuracies}});
  }
  j["probes"] = probes;
  return j;
}

// Geometric probe gamma = 1e-6 * 2^k, k = 0 .. max_doublings, stopping at the
// first gamma where fewer than half of the probe seeds pass the filter.
// gamma_max is the last gamma where at least half passed.
inline Calibration calibrate_gamma_max(RegularizerKind kind, const SweepConfig& cfg,
                                       std::shared_ptr<const SpikeTaskData> data = nullptr) {
  cfg.validate();
  if (is_spiking(cfg.train.task) && !data) data = load_spike_task(cfg.train);
  Calibration out;
  out.kind = kind;
  const int width = worker_count(cfg.parallelism);
  std::optional<double> last_ok;
  for (int k = 0; k <= cfg.max_doublings; ++k) {
    CalibrationProbe probe;
    probe.gamma = 1e-6 * std::ldexp(1.0, k);
    probe.total = cfg.probe_seeds;
    probe.accuracies.assign(static_cast<std::size_t>(cfg.probe_seeds), 0.0);
    parallel_for(static_cast<std::size_t>(cfg.probe_seeds), width, [&](std::size_t i) {
      TrainConfig t = cfg.train;
      t.kind = kind;
      t.gamma = probe.gamma;
      t.seed = cfg.base_seed + i;
      const TrainResult r = train(t, TrainOutput{std::nullopt, false}, data);
      probe.accuracies[i] = r.status == RunStatus::Ok && !r.checkpoints.empty() ? r.final().accuracy : 0.0;
    });
    for (double a : probe.accuracies) probe.passed += cfg.passes(a) ? 1 : 0;
    out.probes.push_back(probe);
    if (2 * probe.passed < probe.total) break;
    last_ok = probe.gamma;
  }
  if (!last_ok) {
    std::ostringstream msg;
    msg << "calibration for " << kind_name(kind) << ": no probed gamma trains (gamma "
        << format_gamma(out.probes.front().gamma) << " accuracies:";
    for (double a : out.probes.front().accuracies) msg << ' ' << format_g9(a);
    msg << "; filter threshold " << format_g9(cfg.threshold()) << ")";
    throw ConvergenceFailure(msg.str());
  }
  out.gamma_max = *last_ok;
  return out;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct RunOutcome {
  RegularizerKind kind = RegularizerKind::SpaceComm;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::string status;  // ok | diverged | failed
  std::string message;
  int final_epoch = -1;
  double final_accuracy = 0.0;
  bool passes_filter = false;
};

struct SweepResult {
  MetricsTable table;
  std::vector<RunOutcome> runs;
  std::map<RegularizerKind, std::vector<double>> grids;
  std::vector<Calibration> calibrations;
};

namespace detail {

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

inline std::vector<MetricRecord> analyze_run_dir(const fs::path& run_dir) {
  std::vector<MetricRecord> out;
  std::optional<DistanceLattice> lattice;
  for (const auto& dir : epoch_dirs(run_dir)) {
    const NetworkCheckpoint c = read_checkpoint(dir);
    if (!lattice || !(lattice->dims.nx == c.dims.lattice.nx && lattice->dims.ny == c.dims.lattice.ny &&
                      lattice->dims.nz == c.dims.lattice.nz)) {
      lattice = build_lattice(c.dims.lattice);
    }
    out.push_back(analyze_checkpoint(c, *lattice));
  }
  return out;
}

inline std::string records_csv(const std::vector<MetricRecord>& records) {
  return MetricsTable(records).to_csv();
}

inline RunOutcome outcome_from_status(const fs::path& run_json, const SweepConfig& cfg) {
  const auto j = nlohmann::json::parse(read_text(run_json));
  RunOutcome o;
  o.kind = parse_kind(j.at("kind").get<std::string>());
  o.gamma = j.at("gamma").get<double>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.status = j.at("status").get<std::string>();
  o.message = j.value("message", "");
  o.final_epoch = j.at("epochs_completed").get<int>();
  o.final_accuracy = j.at("final_accuracy").get<double>();
  o.passes_filter = o.status == "ok" && cfg.passes(o.final_accuracy);
  return o;
}

inline std::string attrition_csv(const std::vector<RunOutcome>& runs) {
  std::string s = "kind,gamma,seed,status,final_epoch,final_accuracy,passes_filter\n";
  for (const auto& r : runs) {
    s += std::string(kind_name(r.kind)) + "," + format_g9(r.gamma) + "," + std::to_string(r.seed) + "," + r.status +
         "," + std::to_string(r.final_epoch) + "," + format_g9(r.final_accuracy) + "," +
         (r.passes_filter ? "1" : "0") + "\n";
  }
  return s;
}

}  // namespace detail

// Trains every (kind, gamma, seed) cell, analyzes every epoch checkpoint and
// writes the sweep tree under `out`. A run whose records.csv exists is not
// retrained; one with run.json but no records is re-analyzed from disk.
// Results do not depend on the worker count.
inline SweepResult run_sweep(const SweepConfig& cfg, const fs::path& out) {
  cfg.validate();
  SweepResult result;
  fs::create_directories(out / "runs");
  std::shared_ptr<const SpikeTaskData> data;
  if (is_spiking(cfg.train.task)) data = load_spike_task(cfg.train);

  SweepConfig resolved = cfg;
  for (auto kind : cfg.kinds) {
    if (auto it = cfg.gammas.find(kind); it != cfg.gammas.end()) {
      result.grids[kind] = it->second;
    } else if (auto gm = cfg.gamma_max.find(kind); gm != cfg.gamma_max.end()) {
      result.grids[kind] = linear_grid(gm->second, cfg.gamma_count);
    } else {
      const fs::path cache = out / ("calibration_" + std::string(kind_name(kind)) + ".json");
      double gmax = 0.0;
      if (fs::exists(cache)) {
        gmax = nlohmann::json::parse(detail::read_text(cache)).at("gamma_max").get<double>();
      } else {
        Calibration cal = calibrate_gamma_max(kind, cfg, data);
        detail::write_text_atomic(cache, calibration_json(cal).dump(2) + "\n");
        gmax = cal.gamma_max;
        result.calibrations.push_back(std::move(cal));
      }
      result.grids[kind] = linear_grid(gmax, cfg.gamma_count);
    }
    resolved.gammas[kind] = result.grids[kind];
  }
  detail::write_text(out / "sweep.json", sweep_config_json(resolved).dump(2) + "\n");

  struct Cell {
    RegularizerKind kind;
    double gamma;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto kind : cfg.kinds)
    for (double g : result.grids[kind])
      for (auto s : cfg.seed_list()) cells.push_back({kind, g, s});

  std::vector<std::vector<MetricRecord>> records(cells.size());
  std::vector<RunOutcome> outcomes(cells.size());
  parallel_for(cells.size(), worker_count(cfg.parallelism), [&](std::size_t i) {
    const Cell& cell = cells[i];
    const fs::path run_dir = out / "runs" / run_dir_name(cell.kind, cell.gamma, cell.seed);
    RunOutcome& o = outcomes[i];
    o.kind = cell.kind;
    o.gamma = cell.gamma;
    o.seed = cell.seed;
    try {
      if (fs::exists(run_dir / "records.csv") && fs::exists(run_dir / "run.json")) {
        records[i] = MetricsTable::load(run_dir / "records.csv").records();
        o = detail::outcome_from_status(run_dir / "run.json", cfg);
        return;
      }
      if (!fs::exists(run_dir / "run.json")) {
        fs::remove_all(run_dir);
        TrainConfig t = cfg.train;
        t.kind = cell.kind;
        t.gamma = cell.gamma;
        t.seed = cell.seed;
        const TrainResult r = train(t, TrainOutput{out / "runs", true}, data);
        std::optional<DistanceLattice> lattice;
        for (const auto& c : r.checkpoints) {
          if (!lattice) lattice = build_lattice(c.dims.lattice);
          records[i].push_back(analyze_checkpoint(c, *lattice));
        }
      } else {
        records[i] = detail::analyze_run_dir(run_dir);
      }
      detail::write_text_atomic(run_dir / "records.csv", detail::records_csv(records[i]));
      o = detail::outcome_from_status(run_dir / "run.json", cfg);
    } catch (const std::exception& e) {
      o.status = "failed";
      o.message = e.what();
      records[i].clear();
    }
  });

  for (const auto& rs : records)
    for (const auto& r : rs) result.table.insert(r);
  result.runs = outcomes;
  result.table.save(out / "metrics.csv");
  detail::write_text(out / "attrition.csv", detail::attrition_csv(outcomes));
  return result;
}

// Backfills records for every run directory under `runs` (or `runs/runs`).
inline MetricsTable analyze_runs(const fs::path& runs, int parallelism = 0) {
  fs::path root = runs;
  if (fs::is_directory(runs / "runs")) root = runs / "runs";
  if (!fs::is_directory(root)) throw InvalidArgument("no run directory at " + runs.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("run_", 0) == 0) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<std::vector<MetricRecord>> records(dirs.size());
  parallel_for(dirs.size(), worker_count(parallelism),
               [&](std::size_t i) { records[i] = detail::analyze_run_dir(dirs[i]); });
  MetricsTable table;
  for (const auto& rs : records)
    for (const auto& r : rs) table.insert(r);
  return table;
}

// ---------------------------------------------------------------------------
// Selections over a table
// ---------------------------------------------------------------------------

// Which records enter a group analysis. A network is admitted when its
// final-epoch accuracy exceeds the threshold; `min_grid_fraction` keeps grid
// positions k with k >= fraction * n among the kind's sorted distinct gammas.
struct Selection {
  double threshold = 0.9;
  double min_grid_fraction = 0.0;
  std::optional<int> epoch;  // unset: each network's final epoch
};

inline Selection selection_for(Task task) { return Selection{filter_threshold(task), 0.0, std::nullopt}; }

inline std::vector<double> kind_grid(const MetricsTable& table, RegularizerKind kind) {
  std::set<double> g;
  for (const auto& r : table.records())
    if (r.kind == kind) g.insert(r.gamma);
  return {g.begin(), g.end()};
}

struct NetworkKey {
  RegularizerKind kind;
  double gamma;
  std::uint64_t seed;
  auto operator<=>(const NetworkKey&) const = default;
};

// All records of admitted networks, grouped per network and ordered by epoch.
inline std::map<NetworkKey, std::vector<MetricRecord>> admitted_networks(const MetricsTable& table,
                                                                         RegularizerKind kind,
                                                                         const Selection& sel) {
  std::map<NetworkKey, std::vector<MetricRecord>> nets;
  for (const auto& r : table.records())
    if (r.kind == kind) nets[{r.kind, r.gamma, r.seed}].push_back(r);
  const auto grid = kind_grid(table, kind);
  const auto n = static_cast<double>(grid.size());
  std::map<NetworkKey, std::vector<MetricRecord>> out;
  for (auto& [key, recs] : nets) {
    const auto pos = static_cast<double>(std::lower_bound(grid.begin(), grid.end(), key.gamma) - grid.begin());
    if (pos < sel.min_grid_fraction * n) continue;
    if (!(recs.back().accuracy > sel.threshold)) continue;
    out.emplace(key, std::move(recs));
  }
  return out;
}

// One record per admitted network: at sel.epoch, or the final epoch.
inline std::vector<MetricRecord> select_records(const MetricsTable& table, RegularizerKind kind,
                                                const Selection& sel) {
  std::vector<MetricRecord> out;
  for (const auto& [key, recs] : admitted_networks(table, kind, sel)) {
    if (!sel.epoch) {
      out.push_back(recs.back());
      continue;
    }
    for (const auto& r : recs)
      if (r.epoch == *sel.epoch) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Group comparison
// ---------------------------------------------------------------------------

struct GroupComparison {
  std::string metric;
  RegularizerKind kind_a = RegularizerKind::SpaceComm;
  RegularizerKind kind_b = RegularizerKind::BaselineL1;
  double median_a = 0.0;
  double median_b = 0.0;
  double u = 0.0;
  double p = 1.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  Alternative alternative = Alternative::Less;
};

// Mann-Whitney U of `metric` between two kinds; `alt` states the claimed
// direction of A relative to B.
inline GroupComparison compare_groups(const MetricsTable& table, std::string_view metric, RegularizerKind a,
                                      RegularizerKind b, const Selection& sel,
                                      Alternative alt = Alternative::Less) {
  std::vector<double> va;
  std::vector<double> vb;
  for (const auto& r : select_records(table, a, sel)) va.push_back(metric_value(r, metric));
  for (const auto& r : select_records(table, b, sel)) vb.push_back(metric_value(r, metric));
  if (va.empty() || vb.empty()) {
    throw DegenerateInput("compare_groups: empty group for " + std::string(va.empty() ? kind_name(a) : kind_name(b)));
  }
  GroupComparison g;
  g.metric = metric;
  g.kind_a = a;
  g.kind_b = b;
  g.median_a = median(va);
  g.median_b = median(vb);
  const UTest t = mann_whitney(va, vb, alt);
  g.u = t.u;
  g.p = t.p;
  g.n_a = t.n_a;
  g.n_b = t.n_b;
  g.alternative = alt;
  return g;
}

// ---------------------------------------------------------------------------
// Figure extracts
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 9> kFigures = {"fig2a", "fig2b", "fig2c", "fig3a", "fig3c",
                                                             "fig4a", "fig5a", "fig5b", "fig5c"};

struct FigureOptions {
  Selection selection;
  std::optional<fs::path> runs;                          // checkpoint tree, needed by fig3c and fig5c
  std::vector<double> percents = {10, 20, 30, 40, 50};  // fig5c, of each kind's largest gamma
  std::optional<RegularizerKind> representative_kind;    // fig3c, default sernn
};

namespace detail {

inline std::string trajectory_extract(const MetricsTable& table, std::string_view metric, const Selection& sel) {
  std::string s = "series,x,n,y,band\n";
  bool any = false;
  for (auto kind : kAllKinds) {
    std::map<int, std::vector<double>> by_epoch;
    for (const auto& [key, recs] : admitted_networks(table, kind, sel))
      for (const auto& r : recs) by_epoch[r.epoch].push_back(metric_value(r, metric));
    for (const auto& [epoch, values] : by_epoch) {
      any = true;
      const double mu = mean(values);
      std::string band;
      if (values.size() > 1) {
        band = format_g9(2.0 * sample_stddev(values) / std::sqrt(static_cast<double>(values.size())));
      }
      s += std::string(kind_name(kind)) + "," + std::to_string(epoch) + "," + std::to_string(values.size()) + "," +
           format_g9(mu) + "," + band + "\n";
    }
  }
  if (!any) throw DegenerateInput("figure: no networks pass the accuracy filter");
  return s;
}

inline std::string scatter_extract(const MetricsTable& table, std::string_view x, std::string_view y,
                                   const Selection& sel) {
  std::string s = "series," + std::string(x) + "," + std::string(y) + ",gamma,seed\n";
  bool any = false;
  for (auto kind : kAllKinds) {
    for (const auto& r : select_records(table, kind, sel)) {
      any = true;
      s += std::string(kind_name(kind)) + "," + format_g9(metric_value(r, x)) + "," + format_g9(metric_value(r, y)) +
           "," + format_g9(r.gamma) + "," + std::to_string(r.seed) + "\n";
    }
  }
  if (!any) throw DegenerateInput("figure: no networks pass the accuracy filter");
  return s;
}

inline std::string gamma_scatter_extract(const MetricsTable& table, std::string_view y, const Selection& sel) {
  std::string s = "series,gamma," + std::string(y) + ",seed\n";
  bool any = false;
  for (auto kind : kAllKinds) {
    for (const auto& r : select_records(table, kind, sel)) {
      any = true;
      s += std::string(kind_name(kind)) + "," + format_g9(r.gamma) + "," + format_g9(metric_value(r, y)) + "," +
           std::to_string(r.seed) + "\n";
    }
  }
  if (!any) throw DegenerateInput("figure: no networks pass the accuracy filter");
  return s;
}

inline fs::path checkpoint_path(const fs::path& runs, const MetricRecord& r) {
  fs::path root = fs::is_directory(runs / "runs") ? runs / "runs" : runs;
  return root / run_dir_name(r.kind, r.gamma, r.seed) / epoch_dir_name(r.epoch);
}

// Representative network: the admitted network of `kind` whose final
// dist_corr_r is the median (lower median for even counts).
inline std::string connection_extract(const MetricsTable& table, const FigureOptions& opt) {
  if (!opt.runs) throw InvalidArgument("fig3c needs the run directory (--runs)");
  const RegularizerKind kind = opt.representative_kind.value_or(RegularizerKind::SpaceComm);
  auto recs = select_records(table, kind, opt.selection);
  if (recs.empty()) throw DegenerateInput("fig3c: no admitted " + std::string(kind_name(kind)) + " networks");
  std::stable_sort(recs.begin(), recs.end(),
                   [](const MetricRecord& a, const MetricRecord& b) { return a.dist_corr_r < b.dist_corr_r; });
  const MetricRecord& pick = recs[(recs.size() - 1) / 2];
  const NetworkCheckpoint c = read_checkpoint(checkpoint_path(*opt.runs, pick));
  const Matrix w = c.recurrent_weights();
  const DistanceLattice lattice = build_lattice(c.dims.lattice);
  const double total = w.cwiseAbs().sum();
  const std::string series = std::string(kind_name(kind)) + " gamma=" + format_g9(pick.gamma) +
                             " seed=" + std::to_string(pick.seed) + " epoch=" + std::to_string(pick.epoch);
  std::string s = "series,distance,weight\n";
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (i == j || w(i, j) == 0.0) continue;
      s += series + "," + format_g9(lattice.distance(i, j)) + "," + format_g9(std::abs(w(i, j)) / total) + "\n";
    }
  }
  return s;
}

// Eigenvalues of one admitted network per (kind, percent): the grid gamma
// nearest to percent% of the kind's largest gamma, lowest admitted seed.
inline std::string spectrum_extract(const MetricsTable& table, const FigureOptions& opt) {
  if (!opt.runs) throw InvalidArgument("fig5c needs the run directory (--runs)");
  std::string s = "series,re,im\n";
  bool any = false;
  for (auto kind : kAllKinds) {
    const auto grid = kind_grid(table, kind);
    if (grid.empty()) continue;
    const auto admitted = select_records(table, kind, opt.selection);
    for (double pct : opt.percents) {
      const double target = grid.back() * pct / 100.0;
      const double g = *std::min_element(grid.begin(), grid.end(), [&](double a, double b) {
        return std::abs(a - target) < std::abs(b - target);
      });
      const MetricRecord* pick = nullptr;
      for (const auto& r : admitted)
        if (r.gamma == g && (pick == nullptr || r.seed < pick->seed)) pick = &r;
      if (pick == nullptr) continue;
      const NetworkCheckpoint c = read_checkpoint(checkpoint_path(*opt.runs, *pick));
      const std::string series = std::string(kind_name(kind)) + " " + format_g9(pct) + "%";
      for (const auto& l : eigenvalues(c.recurrent_weights())) {
        any = true;
        s += series + "," + format_g9(l.real()) + "," + format_g9(l.imag()) + "\n";
      }
    }
  }
  if (!any) throw DegenerateInput("fig5c: no admitted network at the requested gamma positions");
  return s;
}

}  // namespace detail

// CSV extract for one figure panel. Throws DegenerateInput when the accuracy
// filter leaves nothing to show.
inline std::string figure_data(const MetricsTable& table, std::string_view which, const FigureOptions& opt) {
  if (which == "fig2a") return detail::trajectory_extract(table, "Q", opt.selection);
  if (which == "fig2b") return detail::trajectory_extract(table, "H_W", opt.selection);
  if (which == "fig4a") return detail::trajectory_extract(table, "H_C", opt.selection);
  if (which == "fig2c") return detail::scatter_extract(table, "Q", "H_W", opt.selection);
  if (which == "fig3a") return detail::scatter_extract(table, "total_weight", "H_W", opt.selection);
  if (which == "fig5a") return detail::gamma_scatter_extract(table, "lambda_max", opt.selection);
  if (which == "fig5b") return detail::gamma_scatter_extract(table, "H_lambda", opt.selection);
  if (which == "fig3c") return detail::connection_extract(table, opt);
  if (which == "fig5c") return detail::spectrum_extract(table, opt);
  throw InvalidArgument("unknown figure '" + std::string(which) + "'");
}

}  // namespace sernn
