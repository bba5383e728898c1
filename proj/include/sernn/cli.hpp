#pragma once

// `sernn` command line: gen-task, train, sweep, analyze, figures, plot, selftest.
// Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 selftest failure.
// Failures print one JSON object on stderr: {"error": <class>, "message": ...}.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sernn/checkpoint.hpp"
#include "sernn/error.hpp"
#include "sernn/harness.hpp"
#include "sernn/metrics_table.hpp"
#include "sernn/selftest.hpp"
#include "sernn/spike_data.hpp"
#include "sernn/svg.hpp"
#include "sernn/training.hpp"

namespace sernn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitSelftest = 3;

// Thrown for argument problems that CLI11 cannot see (e.g. --out exists).
struct UsageError : Error {
  using Error::Error;
};

inline void error_line(std::ostream& err, std::string_view kind, std::string_view message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  err << j.dump() << "\n";
}

inline void require_fresh(const fs::path& out, bool force) {
  if (fs::exists(out) && !force) {
    throw UsageError("--out " + out.string() + " already exists (pass --force to overwrite)");
  }
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_text(path, text);
}

struct GenTaskArgs {
  std::string task = "synthetic-spikes";
  std::string out;
  std::uint64_t seed = 2024;
  spikes::SyntheticTaskConfig synth;
  bool force = false;
};

struct TrainArgs {
  TrainConfig cfg;
  std::string kind = "sernn";
  std::string task = "inference";
  std::string out;
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<double> dt;
  std::optional<int> steps;
  bool force = false;
};

struct SweepArgs {
  std::string config;
  std::string out;
  std::vector<std::string> kinds;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool force = false;
};

struct AnalyzeArgs {
  std::string runs;
  std::string out;
  std::optional<int> threads;
  bool force = false;
};

struct FiguresArgs {
  std::string metrics;
  std::string which;
  std::string out;
  std::string runs;
  std::string task = "inference";
  std::optional<double> threshold;
  double min_grid_fraction = 0.0;
  std::optional<int> epoch;
  std::vector<double> percents = {10, 20, 30, 40, 50};
  std::string representative = "sernn";
  bool force = false;
};

struct PlotArgs {
  std::string in;
  std::string out;
  std::string style;
  bool log_y = false;
  bool linear_y = false;
  std::string title;
  bool force = false;
};

inline int cmd_gen_task(const GenTaskArgs& a, std::ostream& out) {
  if (a.task != "synthetic-spikes") {
    throw UsageError("gen-task: only --task synthetic-spikes can be generated (convert SHD externally)");
  }
  require_fresh(a.out, a.force);
  RandomSource rng(a.seed);
  const auto task = spikes::gen_synthetic_spike_task(rng, a.synth);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  spikes::save_dataset(task.dataset, a.out);
  nlohmann::ordered_json j;
  j["out"] = a.out;
  j["samples"] = task.dataset.samples.size();
  j["classes"] = task.dataset.classes;
  j["channels"] = task.dataset.channels;
  out << j.dump() << "\n";
  return kExitOk;
}

inline int cmd_train(TrainArgs a, std::ostream& out) {
  a.cfg.kind = parse_kind(a.kind);
  a.cfg.task = parse_task(a.task);
  a.cfg.epochs = a.epochs;
  a.cfg.batch_size = a.batch;
  a.cfg.dt_ms = a.dt;
  a.cfg.max_steps = a.steps;
  a.cfg.validate();
  const fs::path run_dir = fs::path(a.out) / run_dir_name(a.cfg.kind, a.cfg.gamma, a.cfg.seed);
  require_fresh(run_dir, a.force);
  if (a.force) fs::remove_all(run_dir);
  const TrainResult r = train(a.cfg, TrainOutput{fs::path(a.out), false});
  nlohmann::ordered_json j;
  j["run"] = run_dir.string();
  j["status"] = r.status == RunStatus::Ok ? "ok" : "diverged";
  if (!r.checkpoints.empty()) {
    j["epoch"] = r.final().epoch;
    j["accuracy"] = r.final().accuracy;
    j["passes_filter"] = r.status == RunStatus::Ok && passes_filter(r.final());
  }
  if (!r.message.empty()) j["message"] = r.message;
  out << j.dump() << "\n";
  return r.status == RunStatus::Ok ? kExitOk : kExitRuntime;
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const std::string raw = detail::read_text(a.config);
  nlohmann::json input;
  try {
    input = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("--config " + a.config + ": " + e.what());
  }
  if (!a.kinds.empty()) input["kinds"] = a.kinds.size() == 1 && a.kinds[0] == "all" ? nlohmann::json("all")
                                                                                     : nlohmann::json(a.kinds);
  if (a.seed) input["base_seed"] = *a.seed;
  if (a.threads) input["parallelism"] = *a.threads;
  SweepConfig cfg;
  try {
    cfg = parse_sweep_config(input);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  const fs::path root(a.out);
  const fs::path stamp = root / "config.json";
  nlohmann::json identity = input;
  identity.erase("parallelism");
  if (fs::exists(stamp)) {
    const auto previous = nlohmann::json::parse(detail::read_text(stamp));
    if (previous != identity) {
      if (!a.force) throw UsageError("--out " + a.out + " holds a different sweep (pass --force to overwrite)");
      fs::remove_all(root);
    }
  } else if (fs::exists(root) && !fs::is_empty(root)) {
    if (!a.force) throw UsageError("--out " + a.out + " is not empty (pass --force to overwrite)");
    fs::remove_all(root);
  }
  fs::create_directories(root);
  detail::write_text(stamp, identity.dump(2) + "\n");
  const SweepResult r = run_sweep(cfg, root);
  std::size_t ok = 0, passing = 0;
  for (const auto& run : r.runs) {
    ok += run.status == "ok" ? 1 : 0;
    passing += run.passes_filter ? 1 : 0;
  }
  nlohmann::ordered_json j;
  j["out"] = a.out;
  j["runs"] = r.runs.size();
  j["completed"] = ok;
  j["passing"] = passing;
  j["records"] = r.table.size();
  out << j.dump() << "\n";
  return kExitOk;
}

inline int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  require_fresh(a.out, a.force);
  const MetricsTable table = analyze_runs(a.runs, a.threads.value_or(0));
  if (table.empty()) throw DegenerateInput("analyze: no checkpoints found under " + a.runs);
  write_file(a.out, table.to_csv());
  out << nlohmann::json({{"out", a.out}, {"records", table.size()}}).dump() << "\n";
  return kExitOk;
}

inline int cmd_figures(const FiguresArgs& a, std::ostream& out) {
  if (std::find(kFigures.begin(), kFigures.end(), a.which) == kFigures.end()) {
    throw UsageError("--which must be one of fig2a fig2b fig2c fig3a fig3c fig4a fig5a fig5b fig5c");
  }
  require_fresh(a.out, a.force);
  const MetricsTable table = MetricsTable::load(a.metrics);
  FigureOptions opt;
  opt.selection = selection_for(parse_task(a.task));
  if (a.threshold) opt.selection.threshold = *a.threshold;
  opt.selection.min_grid_fraction = a.min_grid_fraction;
  opt.selection.epoch = a.epoch;
  if (!a.runs.empty()) opt.runs = fs::path(a.runs);
  opt.percents = a.percents;
  opt.representative_kind = parse_kind(a.representative);
  const std::string csv = figure_data(table, a.which, opt);
  write_file(a.out, csv);
  const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
  out << nlohmann::json({{"out", a.out}, {"rows", rows}}).dump() << "\n";
  return kExitOk;
}

inline int cmd_plot(const PlotArgs& a, std::ostream& out) {
  require_fresh(a.out, a.force);
  PlotOptions opt;
  if (a.style == "line") opt.style = PlotStyle::LineBand;
  else if (a.style == "scatter") opt.style = PlotStyle::Scatter;
  else if (a.style == "complex") opt.style = PlotStyle::ComplexPlane;
  else if (!a.style.empty()) throw UsageError("--style must be line, scatter or complex");
  if (a.log_y) opt.log_y = true;
  if (a.linear_y) opt.log_y = false;
  opt.title = a.title.empty() ? fs::path(a.in).stem().string() : a.title;
  const std::string svg = render_svg(detail::read_text(a.in), opt);
  write_file(a.out, svg);
  out << nlohmann::json({{"out", a.out}, {"bytes", svg.size()}}).dump() << "\n";
  return kExitOk;
}

inline int cmd_selftest(std::ostream& out) {
  bool all = true;
  for (const auto& c : selftest::run_all()) {
    all = all && c.passed;
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " :: " << c.detail << " (tolerance "
        << selftest::format_value(c.tolerance) << ")\n";
  }
  out << (all ? "selftest: all oracles passed\n" : "selftest: FAILED\n");
  return all ? kExitOk : kExitSelftest;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Train and analyze spatially embedded recurrent networks"};
  app.require_subcommand(1);

  GenTaskArgs gen;
  auto* g = app.add_subcommand("gen-task", "Generate a spike-event dataset");
  g->add_option("--task", gen.task, "Task to generate")->capture_default_str();
  g->add_option("--out", gen.out, "Output .jsonl or .jsonl.gz file")->required();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--classes", gen.synth.classes)->capture_default_str();
  g->add_option("--channels", gen.synth.channels)->capture_default_str();
  g->add_option("--samples-per-class", gen.synth.samples_per_class)->capture_default_str();
  g->add_option("--duration", gen.synth.duration_ms, "Sample duration in ms")->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite --out");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one network and write its checkpoints");
  t->add_option("--kind", tr.kind, "l1 | sernn | space | comm")->capture_default_str();
  t->add_option("--gamma", tr.cfg.gamma, "Regularization strength (>= 0)")->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Random seed")->capture_default_str();
  t->add_option("--task", tr.task, "inference | synthetic-spikes | shd")->capture_default_str();
  t->add_option("--out", tr.out, "Directory that receives run_<kind>_<gamma>_<seed>/")->required();
  t->add_option("--epochs", tr.epochs, "Epochs (10 rate, 50 spiking)");
  t->add_option("--lr", tr.cfg.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--batch", tr.batch, "Minibatch size (128 rate, 25 spiking)");
  t->add_option("--trials-per-epoch", tr.cfg.trials_per_epoch)->capture_default_str();
  t->add_option("--dt", tr.dt, "Spiking time step in ms");
  t->add_option("--steps", tr.steps, "Spiking simulation steps");
  t->add_option("--data-seed", tr.cfg.data_seed, "Seed of the synthetic spike task")->capture_default_str();
  t->add_option("--shd-train", tr.cfg.shd_train, "SHD training events (.jsonl[.gz])");
  t->add_option("--shd-test", tr.cfg.shd_test, "SHD test events (.jsonl[.gz])");
  t->add_flag("--force", tr.force, "Overwrite an existing run directory");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Run a regularization sweep from a JSON config");
  s->add_option("--config", sw.config, "Sweep configuration (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sw.out, "Sweep directory (resumed when it holds the same sweep)")->required();
  s->add_option("--kinds", sw.kinds, "Override the kinds (or 'all')");
  s->add_option("--seed", sw.seed, "Override the base seed");
  s->add_option("--threads", sw.threads, "Worker count (capped by SERNN_THREADS)");
  s->add_flag("--force", sw.force, "Discard a different sweep at --out");

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Compute metric records for every checkpoint of a run tree");
  a->add_option("--runs", an.runs, "Run or sweep directory")->required()->check(CLI::ExistingDirectory);
  a->add_option("--out", an.out, "Metrics CSV")->required();
  a->add_option("--threads", an.threads, "Worker count (capped by SERNN_THREADS)");
  a->add_flag("--force", an.force, "Overwrite --out");

  FiguresArgs fg;
  auto* f = app.add_subcommand("figures", "Extract a figure panel's data as CSV");
  f->add_option("--metrics", fg.metrics, "Metrics CSV")->required()->check(CLI::ExistingFile);
  f->add_option("--which", fg.which, "fig2a fig2b fig2c fig3a fig3c fig4a fig5a fig5b fig5c")->required();
  f->add_option("--out", fg.out, "Extract CSV")->required();
  f->add_option("--runs", fg.runs, "Run tree (fig3c, fig5c)");
  f->add_option("--task", fg.task, "Task whose accuracy filter applies")->capture_default_str();
  f->add_option("--threshold", fg.threshold, "Override the accuracy filter");
  f->add_option("--min-grid-fraction", fg.min_grid_fraction, "Keep grid positions k >= fraction * n")
      ->capture_default_str();
  f->add_option("--epoch", fg.epoch, "Epoch for per-network panels (default: final)");
  f->add_option("--percents", fg.percents, "fig5c gamma positions, percent of the largest gamma");
  f->add_option("--representative", fg.representative, "fig3c kind")->capture_default_str();
  f->add_flag("--force", fg.force, "Overwrite --out");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render a figure extract as SVG");
  p->add_option("--in", pl.in, "Extract CSV")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pl.out, "SVG file")->required();
  p->add_option("--style", pl.style, "line | scatter | complex (default: from the header)");
  p->add_flag("--log-y", pl.log_y, "ln-scale y axis");
  p->add_flag("--linear-y", pl.linear_y, "Linear y axis");
  p->add_option("--title", pl.title, "Plot title");
  p->add_flag("--force", pl.force, "Overwrite --out");

  auto* st = app.add_subcommand("selftest", "Run the oracle suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen_task(gen, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (s->parsed()) return cmd_sweep(sw, out);
    if (a->parsed()) return cmd_analyze(an, out);
    if (f->parsed()) return cmd_figures(fg, out);
    if (p->parsed()) return cmd_plot(pl, out);
    if (st->parsed()) return cmd_selftest(out);
  } catch (const UsageError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    error_line(err, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sernn::cli
