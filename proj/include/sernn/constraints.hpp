#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>

#include "sernn/embedding.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn {

enum class RegularizerKind { BaselineL1, SpaceComm, SpaceOnly, CommOnly };

inline constexpr std::array<RegularizerKind, 4> kAllKinds = {
    RegularizerKind::BaselineL1, RegularizerKind::SpaceComm, RegularizerKind::SpaceOnly,
    RegularizerKind::CommOnly};

// Short names used on the command line, in directory names and in CSV files.
inline std::string_view kind_name(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::BaselineL1: return "l1";
    case RegularizerKind::SpaceComm: return "sernn";
    case RegularizerKind::SpaceOnly: return "space";
    case RegularizerKind::CommOnly: return "comm";
  }
  return "?";
}

inline RegularizerKind parse_kind(std::string_view name) {
  for (auto k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  throw InvalidArgument("unknown regularizer kind '" + std::string(name) + "' (expected l1|sernn|space|comm)");
}

struct ConstraintContext {
  std::shared_ptr<const DistanceLattice> lattice;
  double epsilon_strength = 1e-6;

  explicit ConstraintContext(DistanceLattice lat, double eps = 1e-6)
      : lattice(std::make_shared<const DistanceLattice>(std::move(lat))), epsilon_strength(eps) {
    if (!(eps > 0.0)) throw InvalidArgument("ConstraintContext: epsilon_strength must be positive");
  }

  const Matrix& distance() const { return lattice->distance; }
  std::size_t size() const { return lattice->size(); }
};

// Total (in + out) absolute strength per node, floored at `eps`.
inline Vector strength_diagonal(const Matrix& w, double eps = 1e-6) {
  require_square(w, "strength_diagonal");
  const Matrix a = w.cwiseAbs();
  Vector s = a.rowwise().sum() + a.colwise().sum().transpose();
  return s.cwiseMax(eps);
}

// C = exp(S^-1/2 |W| S^-1/2).
inline Matrix communicability(const Matrix& w, double eps = 1e-6) {
  require_square(w, "communicability");
  require_finite(w, "communicability");
  const Vector inv_sqrt = strength_diagonal(w, eps).cwiseSqrt().cwiseInverse();
  const Matrix normalized = inv_sqrt.asDiagonal() * w.cwiseAbs() * inv_sqrt.asDiagonal();
  return matrix_exp(normalized);
}

struct ConstraintTerm {
  double loss = 0.0;
  Matrix multiplier;  // treated as a constant when differentiating
};

inline ConstraintTerm constraint_loss(const Matrix& w, RegularizerKind kind, const ConstraintContext& ctx) {
  require_square(w, "constraint_loss");
  if (static_cast<std::size_t>(w.rows()) != ctx.size()) {
    throw InvalidArgument("constraint_loss: W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                          " but the lattice has " + std::to_string(ctx.size()) + " neurons");
  }
  ConstraintTerm term;
  switch (kind) {
    case RegularizerKind::BaselineL1:
      term.multiplier = Matrix::Ones(w.rows(), w.cols());
      break;
    case RegularizerKind::SpaceOnly:
      term.multiplier = ctx.distance();
      break;
    case RegularizerKind::CommOnly:
      term.multiplier = communicability(w, ctx.epsilon_strength);
      break;
    case RegularizerKind::SpaceComm:
      term.multiplier = ctx.distance().cwiseProduct(communicability(w, ctx.epsilon_strength));
      break;
  }
  term.loss = w.cwiseAbs().cwiseProduct(term.multiplier).sum();
  return term;
}

// d/dW of sum |w_ij| m_ij with m frozen; sign(0) = 0.
inline Matrix constraint_gradient(const Matrix& w, const Matrix& multiplier) {
  return w.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); })
      .cwiseProduct(multiplier);
}

inline double total_loss(double task_loss, double gamma, double constraint) {
  if (gamma < 0.0) throw InvalidArgument("total_loss: gamma must be >= 0");
  if (!std::isfinite(task_loss) || !std::isfinite(gamma) || !std::isfinite(constraint)) {
    throw InvalidArgument("total_loss: non-finite input");
  }
  return task_loss + gamma * constraint;
}

}  // namespace sernn
