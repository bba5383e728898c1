#pragma once

// Epoch loops for both network families, accuracy filtering and run output.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sernn/adam.hpp"
#include "sernn/checkpoint.hpp"
#include "sernn/constraints.hpp"
#include "sernn/embedding.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"
#include "sernn/rate_net.hpp"
#include "sernn/spike_data.hpp"
#include "sernn/spiking_net.hpp"

namespace sernn {

// Global gradient norm cap for rate networks; without it a few seeds blow up mid-run.
inline constexpr double kRateGradClip = 0.3;

struct TrainConfig {
  RegularizerKind kind = RegularizerKind::SpaceComm;
  double gamma = 0.0;
  std::uint64_t seed = 1;
  Task task = Task::Inference;
  std::optional<int> epochs;      // 10 rate, 50 spiking
  double lr = 1e-3;
  std::optional<int> batch_size;  // 128 rate, 25 spiking
  LatticeDims lattice{};

  // rate network
  int trials_per_epoch = 3200;
  int eval_trials = 1000;

  // spiking network
  std::optional<double> dt_ms;    // 0.5 synthetic, 2 SHD
  std::optional<int> max_steps;   // 200 synthetic, 500 SHD
  int synthetic_train_per_class = 30;
  int synthetic_test_per_class = 20;
  std::uint64_t data_seed = 2024;
  spikes::SyntheticTaskConfig synthetic{};
  std::string shd_train;
  std::string shd_test;
  snn::InitScales init{};

  int resolved_epochs() const { return epochs.value_or(is_spiking(task) ? 50 : 10); }
  int resolved_batch() const { return batch_size.value_or(is_spiking(task) ? 25 : 128); }
  double resolved_dt() const { return dt_ms.value_or(task == Task::Shd ? 2.0 : 0.5); }
  int resolved_steps() const {
    if (max_steps) return *max_steps;
    if (task == Task::Shd) return 500;
    return static_cast<int>(std::ceil(synthetic.duration_ms / resolved_dt()));
  }

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("--gamma must be a finite value >= 0");
    if (resolved_epochs() < 0) throw InvalidArgument("--epochs must be >= 0");
    if (!(lr > 0.0)) throw InvalidArgument("--lr must be > 0");
    if (resolved_batch() < 1) throw InvalidArgument("--batch must be >= 1");
    if (task == Task::Inference && (trials_per_epoch < 1 || eval_trials < 1)) {
      throw InvalidArgument("trial counts must be >= 1");
    }
    if (is_spiking(task) && (!(resolved_dt() > 0.0) || resolved_steps() < 1)) {
      throw InvalidArgument("--dt must be > 0 and --steps >= 1");
    }
    if (task == Task::Shd && (shd_train.empty() || shd_test.empty())) {
      throw InvalidArgument("the shd task needs --shd-train and --shd-test event files");
    }
  }
};

// Accuracy a finished network must exceed (strictly) to enter group analyses.
inline double filter_threshold(Task task) {
  switch (task) {
    case Task::Inference: return 0.90;
    case Task::Shd: return 0.45;
    case Task::SyntheticSpikes: return 0.60;
  }
  return 1.0;
}

inline bool passes_filter(Task task, double accuracy) { return accuracy > filter_threshold(task); }
inline bool passes_filter(const NetworkCheckpoint& c) { return passes_filter(c.task, c.accuracy); }

// Train/test spike datasets shared by every run of a spiking sweep.
struct SpikeTaskData {
  spikes::SpikeDataset train;
  spikes::SpikeDataset test;
};

inline std::shared_ptr<const SpikeTaskData> load_spike_task(const TrainConfig& cfg) {
  auto data = std::make_shared<SpikeTaskData>();
  if (cfg.task == Task::SyntheticSpikes) {
    RandomSource rng(cfg.data_seed);
    auto synth = cfg.synthetic;
    synth.samples_per_class = cfg.synthetic_train_per_class + cfg.synthetic_test_per_class;
    auto task = spikes::gen_synthetic_spike_task(rng, synth);
    auto [train, test] = spikes::split_per_class(task.dataset, cfg.synthetic_train_per_class);
    data->train = std::move(train);
    data->test = std::move(test);
  } else if (cfg.task == Task::Shd) {
    data->train = spikes::load_dataset(cfg.shd_train);
    data->test = spikes::load_dataset(cfg.shd_test);
    if (data->train.channels != data->test.channels || data->train.classes != data->test.classes) {
      throw FormatError("SHD train and test files disagree on channels/classes");
    }
  } else {
    throw InvalidArgument("load_spike_task: not a spiking task");
  }
  if (data->train.samples.empty() || data->test.samples.empty()) throw FormatError("spike task has an empty split");
  return data;
}

enum class RunStatus { Ok, Diverged };

struct TrainResult {
  RunStatus status = RunStatus::Ok;
  std::string message;
  std::vector<NetworkCheckpoint> checkpoints;  // epoch 0 (untrained) .. last completed

  const NetworkCheckpoint& final() const { return checkpoints.back(); }
};

struct TrainOutput {
  std::optional<fs::path> root;  // write run_<kind>_<gamma>_<seed>/ under this directory
  bool keep_checkpoints = true;  // keep every epoch in memory (else only the last)
};

namespace detail {

inline void write_run_status(const fs::path& run_dir, const TrainConfig& cfg, const TrainResult& r) {
  nlohmann::ordered_json j;
  j["status"] = r.status == RunStatus::Ok ? "ok" : "diverged";
  j["message"] = r.message;
  j["kind"] = kind_name(cfg.kind);
  j["gamma"] = cfg.gamma;
  j["seed"] = cfg.seed;
  j["task"] = task_name(cfg.task);
  j["epochs_completed"] = r.checkpoints.empty() ? -1 : r.checkpoints.back().epoch;
  j["final_accuracy"] = r.checkpoints.empty() ? 0.0 : r.checkpoints.back().accuracy;
  j["passes_filter"] = !r.checkpoints.empty() && r.status == RunStatus::Ok && passes_filter(r.checkpoints.back());
  write_text(run_dir / "run.json", j.dump(2) + "\n");
}

class CheckpointSink {
 public:
  CheckpointSink(const TrainConfig& cfg, const TrainOutput& out, TrainResult& result)
      : cfg_(cfg), out_(out), result_(result) {
    if (out_.root) {
      run_dir_ = *out_.root / run_dir_name(cfg.kind, cfg.gamma, cfg.seed);
      fs::create_directories(run_dir_);
    }
  }

  void push(NetworkCheckpoint c) {
    if (out_.root) write_checkpoint(c, run_dir_ / epoch_dir_name(c.epoch));
    if (!out_.keep_checkpoints) result_.checkpoints.clear();
    result_.checkpoints.push_back(std::move(c));
  }

  void finish() {
    if (out_.root) write_run_status(run_dir_, cfg_, result_);
  }

 private:
  const TrainConfig& cfg_;
  const TrainOutput& out_;
  TrainResult& result_;
  fs::path run_dir_;
};

inline NetworkCheckpoint make_checkpoint(const TrainConfig& cfg, int epoch, double accuracy, double task_loss,
                                         double constraint_loss, NetworkDims dims, std::vector<ArrayF32> arrays) {
  NetworkCheckpoint c;
  c.kind = cfg.kind;
  c.gamma = cfg.gamma;
  c.seed = cfg.seed;
  c.epoch = epoch;
  c.task = cfg.task;
  c.accuracy = accuracy;
  c.task_loss = task_loss;
  c.constraint_loss = constraint_loss;
  c.dt_ms = is_spiking(cfg.task) ? cfg.resolved_dt() : 0.0;
  c.dims = dims;
  c.arrays = std::move(arrays);
  return c;
}

inline TrainResult train_rate(const TrainConfig& cfg, const TrainOutput& out) {
  const ConstraintContext ctx(build_lattice(cfg.lattice));
  const auto n = static_cast<Eigen::Index>(ctx.size());
  RandomSource init_rng(child_seed(cfg.seed, 0));
  RandomSource data_rng(child_seed(cfg.seed, 1));
  RandomSource eval_rng(child_seed(cfg.seed, 2));

  rate::RateRNN net = rate::init_rate_rnn(init_rng, n);
  const rate::InferenceTrialBatch eval = rate::generate_trials(eval_rng, static_cast<std::size_t>(cfg.eval_trials));
  const auto eval_targets = rate::targets_of(eval);
  AdamConfig adam{cfg.lr};
  adam.clip_norm = kRateGradClip;
  Adam<rate::RateRNN> opt(adam);
  const NetworkDims dims{static_cast<int>(n), rate::kInputChannels, rate::kClasses, cfg.lattice};

  TrainResult result;
  CheckpointSink sink(cfg, out, result);
  auto snapshot = [&](int epoch) {
    const auto fwd = rate::forward(net, eval);
    const double acc = rate::accuracy(fwd.logits, eval_targets);
    const double loss = rate::cross_entropy(rate::softmax(fwd.logits), eval_targets);
    const double closs = constraint_loss(net.w_rec, cfg.kind, ctx).loss;
    sink.push(make_checkpoint(cfg, epoch, acc, loss, closs, dims, capture_arrays(net)));
  };

  try {
    snapshot(0);
    const int batch = cfg.resolved_batch();
    for (int epoch = 1; epoch <= cfg.resolved_epochs(); ++epoch) {
      for (int done = 0; done < cfg.trials_per_epoch; done += batch) {
        const auto size = static_cast<std::size_t>(std::min(batch, cfg.trials_per_epoch - done));
        const auto trials = rate::generate_trials(data_rng, size);
        const ConstraintTerm term = cfg.gamma > 0.0 ? constraint_loss(net.w_rec, cfg.kind, ctx)
                                                    : ConstraintTerm{0.0, Matrix::Zero(n, n)};
        const auto lg = rate::loss_and_grads(net, trials, cfg.gamma, term);
        opt.step(net, lg.grads);
      }
      snapshot(epoch);
    }
  } catch (const Divergence& e) {
    result.status = RunStatus::Diverged;
    result.message = e.what();
  }
  sink.finish();
  return result;
}

inline double spiking_eval(const snn::LIFNetwork& net, const spikes::SpikeDataset& test, double dt, int steps,
                           double* task_loss) {
  constexpr std::size_t kEvalBatch = 256;
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.samples.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(test.samples.size(), start + kEvalBatch);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = spikes::make_batch(test, idx, dt, steps);
    const auto tr = snn::simulate<snn::HardSpike>(net, batch);
    correct += static_cast<std::size_t>(std::lround(rate::accuracy(tr.scores, batch.labels) * batch.size()));
    loss += rate::cross_entropy(rate::softmax(tr.scores), batch.labels) * batch.size();
  }
  if (task_loss != nullptr) *task_loss = loss / static_cast<double>(test.samples.size());
  return static_cast<double>(correct) / static_cast<double>(test.samples.size());
}

inline TrainResult train_spiking(const TrainConfig& cfg, const TrainOutput& out, const SpikeTaskData& data) {
  const ConstraintContext ctx(build_lattice(cfg.lattice));
  const auto n = static_cast<Eigen::Index>(ctx.size());
  const double dt = cfg.resolved_dt();
  const int steps = cfg.resolved_steps();
  RandomSource init_rng(child_seed(cfg.seed, 0));
  RandomSource data_rng(child_seed(cfg.seed, 1));

  snn::LIFNetwork net = snn::init_lif_network(init_rng, n, data.train.channels, data.train.classes, dt, cfg.init);
  Adam<snn::LIFNetwork> opt(AdamConfig{cfg.lr});
  const NetworkDims dims{static_cast<int>(n), data.train.channels, data.train.classes, cfg.lattice};

  TrainResult result;
  CheckpointSink sink(cfg, out, result);
  auto snapshot = [&](int epoch) {
    double loss = 0.0;
    const double acc = spiking_eval(net, data.test, dt, steps, &loss);
    const double closs = constraint_loss(net.w_rec, cfg.kind, ctx).loss;
    sink.push(make_checkpoint(cfg, epoch, acc, loss, closs, dims, capture_arrays(net)));
  };

  try {
    snapshot(0);
    std::vector<std::size_t> order(data.train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(cfg.resolved_batch());
    for (int epoch = 1; epoch <= cfg.resolved_epochs(); ++epoch) {
      data_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(batch, order.size() - start));
        const auto mb = spikes::make_batch(data.train, idx, dt, steps);
        const ConstraintTerm term = cfg.gamma > 0.0 ? constraint_loss(net.w_rec, cfg.kind, ctx)
                                                    : ConstraintTerm{0.0, Matrix::Zero(n, n)};
        const auto r = snn::forward_and_loss<snn::HardSpike>(net, mb, cfg.gamma, term);
        opt.step(net, r.grads);
        snn::clip_decays(net.beta, dt);
        snn::clip_decays(net.beta_out, dt);
      }
      snapshot(epoch);
    }
  } catch (const Divergence& e) {
    result.status = RunStatus::Diverged;
    result.message = e.what();
  }
  sink.finish();
  return result;
}

}  // namespace detail

// Deterministic in (config, data): identical inputs give bit-identical
// checkpoints. Divergence ends the run early with status Diverged.
inline TrainResult train(const TrainConfig& cfg, const TrainOutput& out = {},
                         std::shared_ptr<const SpikeTaskData> data = nullptr) {
  cfg.validate();
  if (cfg.task == Task::Inference) return detail::train_rate(cfg, out);
  if (!data) data = load_spike_task(cfg);
  return detail::train_spiking(cfg, out, *data);
}

}  // namespace sernn
