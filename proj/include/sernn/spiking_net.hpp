#pragma once

// Recurrent leaky integrate-and-fire layer with learnable per-neuron decay,
// a non-spiking leaky readout, and surrogate-gradient backpropagation.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sernn/constraints.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"
#include "sernn/rate_net.hpp"
#include "sernn/spike_data.hpp"

namespace sernn::snn {

inline constexpr double kThreshold = 1.0;
inline constexpr double kSteepness = 100.0;
inline constexpr double kMaxDecay = 0.995;
inline constexpr double kMaxTauMs = 100.0;
inline constexpr double kMeanTauMs = 20.0;
inline constexpr double kTauShape = 3.0;

// Fast-sigmoid surrogate derivative of the spike step, 1 / (rho |u| + 1)^2.
inline double surrogate_grad(double u) {
  const double d = kSteepness * std::abs(u) + 1.0;
  return 1.0 / (d * d);
}

// Hard threshold forward, surrogate backward, reset path detached.
struct HardSpike {
  static constexpr bool kResetDifferentiable = false;
  static double fire(double u) { return u >= 0.0 ? 1.0 : 0.0; }
  static double slope(double u) { return surrogate_grad(u); }
};

// Smooth stand-in whose true derivative is the surrogate: 1/rho + u/(1 + rho|u|).
// Used to validate the backward pass against finite differences.
struct SmoothSpike {
  static constexpr bool kResetDifferentiable = true;
  static double fire(double u) { return 1.0 / kSteepness + u / (1.0 + kSteepness * std::abs(u)); }
  static double slope(double u) { return surrogate_grad(u); }
};

struct DecayBounds {
  double lo = 0.0;
  double hi = kMaxDecay;
};

// beta = exp(-dt / tau) with tau in [3 dt, 100 ms], and beta <= 0.995.
inline DecayBounds decay_bounds(double dt_ms) {
  return {std::exp(-1.0 / 3.0), std::min(kMaxDecay, std::exp(-dt_ms / kMaxTauMs))};
}

inline double decay_from_tau(double tau_ms, double dt_ms) {
  const double tau = std::clamp(tau_ms, 3.0 * dt_ms, kMaxTauMs);
  return std::min(kMaxDecay, std::exp(-dt_ms / tau));
}

inline void clip_decays(Vector& beta, double dt_ms) {
  const auto b = decay_bounds(dt_ms);
  beta = beta.cwiseMax(b.lo).cwiseMin(b.hi);
}

// tau ~ Gamma(3, 20/3 ms), clipped to [3 dt, 100 ms].
inline Vector init_decays(RandomSource& rng, std::size_t n, double dt_ms = 0.5) {
  if (n == 0) throw InvalidArgument("init_decays: n must be >= 1");
  const auto taus = gamma_sample(rng, kTauShape, kMeanTauMs / kTauShape, n);
  Vector beta(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) beta(static_cast<Eigen::Index>(i)) = decay_from_tau(taus[i], dt_ms);
  return beta;
}

struct LIFNetwork {
  Matrix w_in;      // N x channels
  Matrix w_rec;     // N x N, the constrained matrix
  Vector beta;      // N
  Matrix w_out;     // classes x N
  Vector beta_out;  // classes
  double dt_ms = 0.5;

  Eigen::Index hidden() const { return w_rec.rows(); }
  Eigen::Index channels() const { return w_in.cols(); }
  Eigen::Index classes() const { return w_out.rows(); }

  static LIFNetwork zeros(Eigen::Index n, Eigen::Index channels, Eigen::Index classes, double dt_ms = 0.5) {
    return {Matrix::Zero(n, channels), Matrix::Zero(n, n),         Vector::Zero(n),
            Matrix::Zero(classes, n),  Vector::Zero(classes), dt_ms};
  }

  template <typename F>
  void visit(F&& f) {
    f("w_in", w_in);
    f("w_rec", w_rec);
    f("beta", beta);
    f("w_out", w_out);
    f("beta_out", beta_out);
  }
  template <typename F>
  void visit(F&& f) const {
    f("w_in", w_in);
    f("w_rec", w_rec);
    f("beta", beta);
    f("w_out", w_out);
    f("beta_out", beta_out);
  }
};

struct InitScales {
  double input = 3.0;      // times 1/sqrt(channels)
  double recurrent = 1.0;  // times 1/sqrt(N)
  double readout = 1.0;    // times 1/sqrt(N)
};

inline LIFNetwork init_lif_network(RandomSource& rng, Eigen::Index n, Eigen::Index channels, Eigen::Index classes,
                                   double dt_ms = 0.5, InitScales scales = {}) {
  LIFNetwork net = LIFNetwork::zeros(n, channels, classes, dt_ms);
  net.w_in = rate::uniform_matrix(rng, n, channels, scales.input / std::sqrt(static_cast<double>(channels)));
  net.w_rec = rate::uniform_matrix(rng, n, n, scales.recurrent / std::sqrt(static_cast<double>(n)));
  net.w_out = rate::uniform_matrix(rng, classes, n, scales.readout / std::sqrt(static_cast<double>(n)));
  net.beta = init_decays(rng, static_cast<std::size_t>(n), dt_ms);
  net.beta_out = init_decays(rng, static_cast<std::size_t>(classes), dt_ms);
  return net;
}

struct StepResult {
  Vector v;
  Vector s;
  Vector current;
};

// One LIF update for a single sample:
//   I = W_in x + W_rec S_prev,  V' = beta * V + I - S_prev * thr,  S' = H(V' - thr)
// where S_prev = H(V - thr) are the spikes emitted at the current state.
inline StepResult lif_step(const Vector& v, const Vector& s_prev, const Vector& x, const LIFNetwork& net) {
  StepResult r;
  r.current = net.w_in * x + net.w_rec * s_prev;
  r.v = net.beta.cwiseProduct(v) + r.current - kThreshold * s_prev;
  if (!r.v.allFinite()) throw Divergence("lif_step: non-finite membrane");
  r.s = r.v.unaryExpr([](double u) { return HardSpike::fire(u - kThreshold); });
  return r;
}

// Cached unrolled dynamics. Block t (t = 0..T) of each stacked matrix holds
// the N x batch (or classes x batch) state after step t; block 0 is rest.
struct SpikingTrace {
  int steps = 0;
  int batch = 0;
  Eigen::MatrixXd v;  // N x (T+1)B
  Eigen::MatrixXd s;  // N x (T+1)B
  Eigen::MatrixXd u;  // classes x (T+1)B
  Eigen::MatrixXd scores;        // classes x B, max over t >= 1 of u
  Eigen::MatrixXi argmax_step;   // classes x B
  Eigen::MatrixXd spike_counts;  // N x B
};

struct SpikingLoss {
  double total = 0.0;
  double task = 0.0;
  double constraint = 0.0;
};

struct SpikingResult {
  SpikingLoss loss;
  Eigen::MatrixXd scores;        // classes x batch ("logits")
  Eigen::MatrixXd spike_counts;  // N x batch
  LIFNetwork grads;
  SpikingTrace trace;
};

template <typename Spike = HardSpike>
SpikingTrace simulate(const LIFNetwork& net, const spikes::SpikeBatch& batch) {
  const Eigen::Index n = net.hidden();
  const Eigen::Index k = net.classes();
  const int steps = batch.steps;
  const int b = batch.size();
  if (batch.channels != net.channels()) throw InvalidArgument("snn: batch channel count does not match W_in");
  if (steps < 1 || b < 1) throw InvalidArgument("snn: empty batch");

  SpikingTrace tr;
  tr.steps = steps;
  tr.batch = b;
  tr.v = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(steps + 1) * b);
  tr.s = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(steps + 1) * b);
  tr.u = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(steps + 1) * b);
  Eigen::MatrixXd current(n, b);
  for (int t = 1; t <= steps; ++t) {
    const Eigen::Index prev = static_cast<Eigen::Index>(t - 1) * b;
    const Eigen::Index cur = static_cast<Eigen::Index>(t) * b;
    const auto s_prev = tr.s.middleCols(prev, b);
    current.noalias() = net.w_rec * s_prev;
    for (const auto& [col, ch] : batch.active[static_cast<std::size_t>(t - 1)]) current.col(col) += net.w_in.col(ch);
    auto v_new = tr.v.middleCols(cur, b);
    v_new = (tr.v.middleCols(prev, b).array().colwise() * net.beta.array()).matrix() + current -
            kThreshold * s_prev;
    tr.s.middleCols(cur, b) = v_new.unaryExpr([](double x) { return Spike::fire(x - kThreshold); });
    auto u_new = tr.u.middleCols(cur, b);
    u_new = (tr.u.middleCols(prev, b).array().colwise() * net.beta_out.array()).matrix();
    u_new.noalias() += net.w_out * tr.s.middleCols(cur, b);
  }
  if (!tr.v.allFinite() || !tr.u.allFinite()) throw Divergence("snn: non-finite membrane");

  tr.scores.resize(k, b);
  tr.argmax_step.resize(k, b);
  tr.spike_counts = Eigen::MatrixXd::Zero(n, b);
  for (int j = 0; j < b; ++j) {
    for (Eigen::Index c = 0; c < k; ++c) {
      double best = tr.u(c, b + j);
      int arg = 1;
      for (int t = 2; t <= steps; ++t) {
        const double val = tr.u(c, static_cast<Eigen::Index>(t) * b + j);
        if (val > best) {
          best = val;
          arg = t;
        }
      }
      tr.scores(c, j) = best;
      tr.argmax_step(c, j) = arg;
    }
  }
  for (int t = 1; t <= steps; ++t) tr.spike_counts += tr.s.middleCols(static_cast<Eigen::Index>(t) * b, b);
  return tr;
}

// Forward, loss and (if requested) gradients with the constraint multiplier
// held fixed. The constraint acts on W_rec only.
template <typename Spike = HardSpike>
SpikingResult forward_and_loss(const LIFNetwork& net, const spikes::SpikeBatch& batch, double gamma,
                               const ConstraintTerm& constraint, bool want_grads = true) {
  if (gamma < 0.0) throw InvalidArgument("gamma must be >= 0");
  SpikingResult out;
  out.trace = simulate<Spike>(net, batch);
  const SpikingTrace& tr = out.trace;
  out.scores = tr.scores;
  out.spike_counts = tr.spike_counts;

  Eigen::MatrixXd dscore = rate::softmax(tr.scores);
  out.loss.task = rate::cross_entropy(dscore, batch.labels);
  out.loss.constraint = constraint.loss;
  out.loss.total = total_loss(out.loss.task, gamma, constraint.loss);
  if (!std::isfinite(out.loss.total)) throw Divergence("snn: non-finite loss");
  if (!want_grads) return out;

  const Eigen::Index n = net.hidden();
  const Eigen::Index k = net.classes();
  const int steps = tr.steps;
  const int b = tr.batch;
  for (int j = 0; j < b; ++j) dscore(batch.labels[static_cast<std::size_t>(j)], j) -= 1.0;
  dscore /= static_cast<double>(b);

  out.grads = LIFNetwork::zeros(n, net.channels(), k, net.dt_ms);
  LIFNetwork& g = out.grads;

  // Reverse sweep. gu/gv carry dL/dU_{t+1}, dL/dV_{t+1} into step t.
  Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(k, b);
  Eigen::MatrixXd gv_next = Eigen::MatrixXd::Zero(n, b);
  Eigen::MatrixXd gv_all = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(steps) * b);
  Eigen::MatrixXd gu_all = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(steps) * b);
  Eigen::MatrixXd gs(n, b);
  for (int t = steps; t >= 1; --t) {
    const Eigen::Index cur = static_cast<Eigen::Index>(t) * b;
    gu = (gu.array().colwise() * net.beta_out.array()).matrix();
    for (int j = 0; j < b; ++j)
      for (Eigen::Index c = 0; c < k; ++c)
        if (tr.argmax_step(c, j) == t) gu(c, j) += dscore(c, j);
    gu_all.middleCols(cur - b, b) = gu;

    gs.noalias() = net.w_out.transpose() * gu;
    if (t < steps) {
      gs.noalias() += net.w_rec.transpose() * gv_next;
      if constexpr (Spike::kResetDifferentiable) gs -= kThreshold * gv_next;
    }
    auto gv = gv_all.middleCols(cur - b, b);
    gv = gs.cwiseProduct(tr.v.middleCols(cur, b).unaryExpr([](double x) { return Spike::slope(x - kThreshold); }));
    if (t < steps) gv += (gv_next.array().colwise() * net.beta.array()).matrix();
    gv_next = gv;

    for (const auto& [col, ch] : batch.active[static_cast<std::size_t>(t - 1)]) g.w_in.col(ch) += gv.col(col);
  }

  const Eigen::Index span = static_cast<Eigen::Index>(steps) * b;
  // Blocks 0..T-1 of the cached state line up with gradient blocks 1..T.
  g.w_rec.noalias() = gv_all * tr.s.leftCols(span).transpose();
  g.beta = gv_all.cwiseProduct(tr.v.leftCols(span)).rowwise().sum();
  g.w_out.noalias() = gu_all * tr.s.rightCols(span).transpose();
  g.beta_out = gu_all.cwiseProduct(tr.u.leftCols(span)).rowwise().sum();

  if (gamma > 0.0) g.w_rec += gamma * constraint_gradient(net.w_rec, constraint.multiplier);
  return out;
}

template <typename Spike = HardSpike>
SpikingResult forward_and_loss(const LIFNetwork& net, const spikes::SpikeBatch& batch, double gamma,
                               RegularizerKind kind, const ConstraintContext& ctx, bool want_grads = true) {
  return forward_and_loss<Spike>(net, batch, gamma, constraint_loss(net.w_rec, kind, ctx), want_grads);
}

inline double accuracy(const LIFNetwork& net, const spikes::SpikeBatch& batch) {
  const auto tr = simulate<HardSpike>(net, batch);
  return rate::accuracy(tr.scores, batch.labels);
}

}  // namespace sernn::snn
