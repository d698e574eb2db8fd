#pragma once

// The (alpha, beta) affine-invariant geometry on SPD matrices:
//
//   <xi, eta>_G = alpha tr(G^-1 xi G^-1 eta) + beta tr(G^-1 xi) tr(G^-1 eta)
//
// Every formula involving G^-1 is evaluated through G^{+-1/2} congruences so
// that intermediate matrices stay symmetric.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ewishart/error.hpp"
#include "ewishart/linalg.hpp"

namespace ewishart {

class MetricCoefficients {
 public:
  /// Throws ModelError unless alpha > 0 and alpha + p beta > 0.
  MetricCoefficients(double alpha, double beta, Index dim) : alpha_(alpha), beta_(beta), dim_(dim) {
    if (dim < 1) throw ModelError("MetricCoefficients: dimension must be >= 1");
    if (!(alpha > 0.0) || !(alpha + static_cast<double>(dim) * beta > 0.0) || !std::isfinite(beta)) {
      throw ModelError("MetricCoefficients: metric is not positive definite (alpha=" +
                       std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
    }
  }

  /// alpha = 1, beta = 0.
  static MetricCoefficients affine_invariant(Index dim) { return {1.0, 0.0, dim}; }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  Index dim() const { return dim_; }

 private:
  double alpha_;
  double beta_;
  Index dim_;
};

/// A symmetric matrix attached to a base point.
struct TangentVec {
  SpdMat base;
  SymMat value;

  TangentVec(SpdMat g, SymMat v) : base(std::move(g)), value(std::move(v)) {
    if (value.dim() != base.dim()) throw NumericInputError("TangentVec: dimension mismatch");
  }
};

namespace detail {

inline void check_dims(const SpdMat& g, const SymMat& x, const char* what) {
  if (g.dim() != x.dim()) throw NumericInputError(std::string(what) + ": dimension mismatch");
}

// G^{-1/2} x G^{-1/2}
inline SymMat whiten(const SpdMat& g, const SymMat& x) { return congruence(g.inv_sqrt(), x); }

// G^{1/2} x G^{1/2}
inline SymMat color(const SpdMat& g, const SymMat& x) { return congruence(g.sqrt(), x); }

}  // namespace detail

inline double metric_inner(const MetricCoefficients& coeff, const SpdMat& g, const SymMat& xi,
                           const SymMat& eta) {
  detail::check_dims(g, xi, "metric_inner");
  detail::check_dims(g, eta, "metric_inner");
  const SymMat wx = detail::whiten(g, xi);
  const SymMat we = detail::whiten(g, eta);
  return coeff.alpha() * trace_product(wx.matrix(), we.matrix()) +
         coeff.beta() * wx.trace() * we.trace();
}

inline double metric_norm(const MetricCoefficients& coeff, const SpdMat& g, const SymMat& xi) {
  return std::sqrt(std::max(0.0, metric_inner(coeff, g, xi, xi)));
}

/// exp_G(xi) = G expm(G^-1 xi), evaluated as G^{1/2} expm(G^{-1/2} xi G^{-1/2}) G^{1/2}.
inline SpdMat exp_map(const SpdMat& g, const SymMat& xi) {
  detail::check_dims(g, xi, "exp_map");
  const SymEig e = sym_eig(detail::whiten(g, xi));
  static const double kMaxLog = std::log(std::numeric_limits<double>::max());
  if (e.values.maxCoeff() > kMaxLog) throw RangeError("exp_map: overflow");
  const Matrix half = g.sqrt() * e.vectors;
  Vector ev = e.values.array().exp();
  return SpdMat(SymMat(half * ev.asDiagonal() * half.transpose()));
}

/// log_G(S) = G logm(G^-1 S), the inverse of exp_map.
inline SymMat log_map(const SpdMat& g, const SpdMat& s) {
  if (g.dim() != s.dim()) throw NumericInputError("log_map: dimension mismatch");
  const SpdMat inner(detail::whiten(g, s.sym()));
  return detail::color(g, matrix_log_spd(inner));
}

/// gamma(t) = G expm(t G^-1 xi).
inline SpdMat geodesic(const SpdMat& g, const SymMat& xi, double t) {
  if (t == 0.0) return g;
  return exp_map(g, xi * t);
}

/// xi + xi G^-1 xi / 2, the increment of the second-order retraction.
inline SymMat retraction_increment(const SpdMat& g, const SymMat& xi) {
  detail::check_dims(g, xi, "retract");
  return SymMat(xi.matrix() + 0.5 * xi.matrix() * spd_solve(g, xi.matrix()));
}

/// exp_G(xi) - G computed without cancellation: G^{1/2} expm1(...) G^{1/2}.
inline SymMat exp_map_increment(const SpdMat& g, const SymMat& xi) {
  detail::check_dims(g, xi, "exp_map");
  const SymEig e = sym_eig(detail::whiten(g, xi));
  return detail::color(g, SymMat(e.apply([](double v) { return std::expm1(v); })));
}

/// R_G(xi) = G + xi + xi G^-1 xi / 2. Falls back to exp_map when the result
/// fails SPD validation (possible only through rounding on huge steps).
inline SpdMat retract(const SpdMat& g, const SymMat& xi) {
  SymMat out = g.sym() + retraction_increment(g, xi);
  if (validate_spd(out)) return SpdMat(out);
  return exp_map(g, xi);
}

/// delta^2(G, S) = alpha ||logm(G^{-1/2} S G^{-1/2})||_F^2 + beta (log det(G^-1 S))^2.
inline double fisher_distance_sq(const MetricCoefficients& coeff, const SpdMat& g, const SpdMat& s) {
  if (g.dim() != s.dim()) throw NumericInputError("fisher_distance_sq: dimension mismatch");
  const SymEig e = sym_eig(detail::whiten(g, s.sym()));
  if (e.values.minCoeff() <= 1e-300) throw SingularityError("fisher_distance_sq: singular input");
  const Vector logs = e.values.array().log();
  const double sum = logs.sum();
  return std::max(0.0, coeff.alpha() * logs.squaredNorm() + coeff.beta() * sum * sum);
}

/// delta^2(G, G + delta) for a small increment, using log1p on the
/// eigenvalues of G^{-1/2} delta G^{-1/2}. `delta` must keep G + delta SPD.
inline double fisher_distance_sq_increment(const MetricCoefficients& coeff, const SpdMat& g,
                                           const SymMat& delta) {
  detail::check_dims(g, delta, "fisher_distance_sq");
  const SymEig e = sym_eig(detail::whiten(g, delta));
  if (e.values.minCoeff() <= -1.0) throw SingularityError("fisher_distance_sq: increment leaves the cone");
  const Vector logs = e.values.unaryExpr([](double v) { return std::log1p(v); });
  const double sum = logs.sum();
  return std::max(0.0, coeff.alpha() * logs.squaredNorm() + coeff.beta() * sum * sum);
}

/// T_{G->S}(eta) = (S G^-1)^{1/2} eta (G^-1 S)^{1/2}, with
/// (S G^-1)^{1/2} = G^{1/2} (G^{-1/2} S G^{-1/2})^{1/2} G^{-1/2}.
inline SymMat vector_transport(const SpdMat& g, const SpdMat& s, const SymMat& eta) {
  if (g.dim() != s.dim()) throw NumericInputError("vector_transport: dimension mismatch");
  detail::check_dims(g, eta, "vector_transport");
  const SpdMat inner(detail::whiten(g, s.sym()));
  const Matrix e = g.sqrt() * spd_sqrt(inner).matrix() * g.inv_sqrt();
  return congruence(e, eta);
}

/// Riemannian gradient from the Euclidean one:
///   (1/alpha) G egrad G - beta / (alpha (alpha + p beta)) tr(egrad G) G
inline SymMat egrad_to_rgrad(const MetricCoefficients& coeff, const SpdMat& g, const SymMat& egrad) {
  detail::check_dims(g, egrad, "egrad_to_rgrad");
  const double a = coeff.alpha();
  const double b = coeff.beta();
  const double p = static_cast<double>(g.dim());
  const double tr = trace_product(egrad.matrix(), g.matrix());
  return SymMat(g.matrix() * egrad.matrix() * g.matrix() / a - (b / (a * (a + p * b)) * tr) * g.matrix());
}

}  // namespace ewishart
