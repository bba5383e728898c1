#pragma once

// Vanilla tanh RNN trained by hand-written backpropagation through time on a
// one-choice spatial inference task.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sernn/constraints.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn::rate {

inline constexpr int kGridSide = 3;
inline constexpr int kGridCells = kGridSide * kGridSide;
inline constexpr int kInputChannels = 2 * kGridCells;  // goal cells, then option cells
inline constexpr int kClasses = 4;
inline constexpr int kSteps = 50;
inline constexpr int kGoalBegin = 0, kGoalEnd = 20;      // steps 1-20
inline constexpr int kChoiceBegin = 30, kChoiceEnd = 50;  // steps 31-50
inline constexpr double kInputNoise = 0.1;

// Cell index = row * 3 + col.
inline constexpr std::array<int, 4> kGoalCells = {0, 2, 6, 8};    // corners
inline constexpr std::array<int, 4> kOptionCells = {1, 3, 5, 7};  // edge midpoints, class order

inline double cell_distance(int a, int b) {
  const double dr = a / kGridSide - b / kGridSide;
  const double dc = a % kGridSide - b % kGridSide;
  return std::sqrt(dr * dr + dc * dc);
}

struct Trial {
  int goal = 0;      // grid cell
  int option_a = 0;  // class index into kOptionCells
  int option_b = 0;
  int target = 0;  // class index
};

struct InferenceTrialBatch {
  std::vector<Eigen::MatrixXd> inputs;  // kSteps entries, each kInputChannels x batch
  std::vector<Trial> trials;

  std::size_t size() const noexcept { return trials.size(); }
};

// Class index of the option nearer the goal, or -1 when the two are equidistant.
inline int nearer_option(int goal_cell, int option_a, int option_b) {
  const double da = cell_distance(goal_cell, kOptionCells[static_cast<std::size_t>(option_a)]);
  const double db = cell_distance(goal_cell, kOptionCells[static_cast<std::size_t>(option_b)]);
  if (std::abs(da - db) < 1e-12) return -1;
  return da < db ? option_a : option_b;
}

inline InferenceTrialBatch generate_trials(RandomSource& rng, std::size_t n) {
  if (n == 0) throw InvalidArgument("generate_trials: n must be >= 1");
  InferenceTrialBatch batch;
  batch.trials.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trial t;
    t.goal = kGoalCells[rng.uniform_index(4)];
    for (;;) {
      const auto a = static_cast<int>(rng.uniform_index(4));
      auto b = static_cast<int>(rng.uniform_index(3));
      if (b >= a) ++b;
      const int target = nearer_option(t.goal, a, b);
      if (target < 0) continue;
      t.option_a = a;
      t.option_b = b;
      t.target = target;
      break;
    }
    batch.trials.push_back(t);
  }

  const auto cols = static_cast<Eigen::Index>(n);
  batch.inputs.assign(kSteps, Eigen::MatrixXd::Zero(kInputChannels, cols));
  for (int step = 0; step < kSteps; ++step) {
    auto& x = batch.inputs[static_cast<std::size_t>(step)];
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Trial& t = batch.trials[static_cast<std::size_t>(j)];
      if (step >= kGoalBegin && step < kGoalEnd) x(t.goal, j) = 1.0;
      if (step >= kChoiceBegin && step < kChoiceEnd) {
        x(kGridCells + kOptionCells[static_cast<std::size_t>(t.option_a)], j) = 1.0;
        x(kGridCells + kOptionCells[static_cast<std::size_t>(t.option_b)], j) = 1.0;
      }
      for (int c = 0; c < kInputChannels; ++c) x(c, j) += kInputNoise * rng.normal();
    }
  }
  return batch;
}

struct RateRNN {
  Matrix w_in;   // N x 18
  Matrix w_rec;  // N x N, the constrained matrix
  Vector b;      // N
  Matrix w_out;  // 4 x N
  Vector b_out;  // 4

  Eigen::Index hidden() const { return w_rec.rows(); }

  static RateRNN zeros(Eigen::Index n) {
    return {Matrix::Zero(n, kInputChannels), Matrix::Zero(n, n), Vector::Zero(n), Matrix::Zero(kClasses, n),
            Vector::Zero(kClasses)};
  }

  template <typename F>
  void visit(F&& f) {
    f("w_in", w_in);
    f("w_rec", w_rec);
    f("b", b);
    f("w_out", w_out);
    f("b_out", b_out);
  }
  template <typename F>
  void visit(F&& f) const {
    f("w_in", w_in);
    f("w_rec", w_rec);
    f("b", b);
    f("w_out", w_out);
    f("b_out", b_out);
  }
};

// Haar-distributed orthogonal matrix scaled by `radius`.
inline Matrix random_orthogonal(RandomSource& rng, Eigen::Index n, double radius) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return radius * q;
}

inline Matrix uniform_matrix(RandomSource& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

// W_rec orthogonal at spectral radius 0.9; W_in, W_out uniform +-1/sqrt(fan-in).
inline RateRNN init_rate_rnn(RandomSource& rng, Eigen::Index n) {
  RateRNN net = RateRNN::zeros(n);
  net.w_rec = random_orthogonal(rng, n, 0.9);
  net.w_in = uniform_matrix(rng, n, kInputChannels, 1.0 / std::sqrt(static_cast<double>(kInputChannels)));
  net.w_out = uniform_matrix(rng, kClasses, n, 1.0 / std::sqrt(static_cast<double>(n)));
  return net;
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> hidden;  // kSteps + 1 entries (h_0 = 0), each N x batch
  Eigen::MatrixXd logits;               // kClasses x batch
};

inline ForwardPass forward(const RateRNN& net, const InferenceTrialBatch& batch) {
  if (batch.inputs.size() != static_cast<std::size_t>(kSteps) || batch.trials.empty()) {
    throw InvalidArgument("rate::forward: malformed batch");
  }
  const Eigen::Index n = net.hidden();
  const auto cols = static_cast<Eigen::Index>(batch.size());
  ForwardPass out;
  out.hidden.reserve(kSteps + 1);
  out.hidden.emplace_back(Eigen::MatrixXd::Zero(n, cols));
  Eigen::MatrixXd pre(n, cols);
  for (int t = 0; t < kSteps; ++t) {
    pre.noalias() = net.w_in * batch.inputs[static_cast<std::size_t>(t)];
    pre.noalias() += net.w_rec * out.hidden.back();
    pre.colwise() += net.b;
    out.hidden.emplace_back(pre.array().tanh().matrix());
  }
  out.logits = net.w_out * out.hidden.back();
  out.logits.colwise() += net.b_out;
  if (!out.logits.allFinite()) throw Divergence("rate::forward: non-finite activations");
  return out;
}

// Column-wise softmax.
inline Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    p.col(j).array() -= p.col(j).maxCoeff();
    p.col(j) = p.col(j).array().exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

// Mean cross-entropy; `probs` is the softmax of the logits.
inline double cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> targets) {
  double loss = 0.0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    loss -= std::log(std::max(probs(targets[static_cast<std::size_t>(j)], j), 1e-300));
  }
  return loss / static_cast<double>(probs.cols());
}

struct LossBreakdown {
  double total = 0.0;
  double task = 0.0;
  double constraint = 0.0;
};

struct LossAndGrads {
  LossBreakdown loss;
  RateRNN grads;
};

inline std::vector<int> targets_of(const InferenceTrialBatch& batch) {
  std::vector<int> t;
  t.reserve(batch.size());
  for (const auto& trial : batch.trials) t.push_back(trial.target);
  return t;
}

// L_total and its gradient with the constraint multiplier held fixed.
inline LossAndGrads loss_and_grads(const RateRNN& net, const InferenceTrialBatch& batch, double gamma,
                                   const ConstraintTerm& constraint) {
  if (gamma < 0.0) throw InvalidArgument("gamma must be >= 0");
  const ForwardPass fwd = forward(net, batch);
  const auto targets = targets_of(batch);
  const Eigen::Index n = net.hidden();
  const auto cols = static_cast<Eigen::Index>(batch.size());

  LossAndGrads out{{}, RateRNN::zeros(n)};
  Eigen::MatrixXd dlogits = softmax(fwd.logits);
  out.loss.task = cross_entropy(dlogits, targets);
  for (Eigen::Index j = 0; j < cols; ++j) dlogits(targets[static_cast<std::size_t>(j)], j) -= 1.0;
  dlogits /= static_cast<double>(cols);

  RateRNN& g = out.grads;
  g.w_out.noalias() = dlogits * fwd.hidden.back().transpose();
  g.b_out = dlogits.rowwise().sum();

  Eigen::MatrixXd dh = net.w_out.transpose() * dlogits;
  Eigen::MatrixXd dpre(n, cols);
  for (int t = kSteps; t >= 1; --t) {
    const auto& h = fwd.hidden[static_cast<std::size_t>(t)];
    dpre = dh.array() * (1.0 - h.array().square());
    g.w_in.noalias() += dpre * batch.inputs[static_cast<std::size_t>(t - 1)].transpose();
    g.w_rec.noalias() += dpre * fwd.hidden[static_cast<std::size_t>(t - 1)].transpose();
    g.b += dpre.rowwise().sum();
    if (t > 1) dh.noalias() = net.w_rec.transpose() * dpre;
  }

  out.loss.constraint = constraint.loss;
  out.loss.total = total_loss(out.loss.task, gamma, constraint.loss);
  if (gamma > 0.0) g.w_rec += gamma * constraint_gradient(net.w_rec, constraint.multiplier);
  if (!std::isfinite(out.loss.total)) throw Divergence("rate: non-finite loss");
  return out;
}

inline LossAndGrads task_loss_and_grads(const RateRNN& net, const InferenceTrialBatch& batch, double gamma,
                                        RegularizerKind kind, const ConstraintContext& ctx) {
  return loss_and_grads(net, batch, gamma, constraint_loss(net.w_rec, kind, ctx));
}

inline double accuracy(const Eigen::MatrixXd& logits, std::span<const int> targets) {
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    if (arg == targets[static_cast<std::size_t>(j)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

inline double accuracy(const RateRNN& net, const InferenceTrialBatch& batch) {
  return accuracy(forward(net, batch).logits, targets_of(batch));
}

}  // namespace sernn::rate
