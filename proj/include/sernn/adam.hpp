#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sernn/error.hpp"

namespace sernn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient norm cap, 0 = off
};

// Moment buffers for one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update of `params` in place. `step` is 1-based.
inline void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
                        long step, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw InvalidArgument("adam: parameter/gradient size mismatch");
  if (moments.m.size() != params.size()) {
    moments.m.assign(params.size(), 0.0);
    moments.v.assign(params.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) throw Divergence("adam: non-finite gradient");
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    params[i] -= cfg.lr * (moments.m[i] / c1) / (std::sqrt(moments.v[i] / c2) + cfg.epsilon);
  }
}

// Adam over a whole network. `Net` exposes visit(f) calling f(name, tensor)
// for every Eigen parameter tensor; gradients are stored in a `Net` too.
template <typename Net>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(Net& params, const Net& grads) {
    ++t_;
    std::vector<std::span<const double>> g;
    grads.visit([&](const char*, const auto& tensor) { g.emplace_back(tensor.data(), tensor.size()); });
    if (moments_.empty()) moments_.resize(g.size());
    std::vector<double> scaled;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& t : g)
        for (double v : t) sq += v * v;
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) throw Divergence("adam: non-finite gradient");
      if (norm > cfg_.clip_norm) {
        std::size_t total = 0;
        for (const auto& t : g) total += t.size();
        scaled.reserve(total);
        for (auto& t : g) {
          const std::size_t at = scaled.size();
          for (double v : t) scaled.push_back(v * (cfg_.clip_norm / norm));
          t = std::span<const double>(scaled.data() + at, t.size());
        }
      }
    }
    std::size_t i = 0;
    params.visit([&](const char*, auto& tensor) {
      adam_update(std::span<double>(tensor.data(), tensor.size()), g[i], moments_[i], t_, cfg_);
      ++i;
    });
  }

  long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<AdamMoments> moments_;
};

}  // namespace sernn
