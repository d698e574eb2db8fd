#pragma once

// Maximum-likelihood estimation of the center G.
//
//  - fit_fixed_point: G <- (1/nK) sum_k u(tr(G^-1 S_k)) S_k
//  - fit_riemannian:  steepest descent or conjugate gradient under the Fisher
//    metric, backtracking (Armijo) line search, second-order retraction.
//
// Both stop when the Fisher distance between successive iterates drops below
// `tolerance`. Cost values in the trace are accumulated from increments
// L(G_{t+1}) - L(G_t) evaluated without cancellation, so the line search can
// still see decreases far below the absolute rounding level of L.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ewishart/error.hpp"
#include "ewishart/geometry.hpp"
#include "ewishart/linalg.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

enum class Algorithm { fixed_point, riemann_sd, riemann_cg };
enum class InitKind { identity, wishart_mle, user };
enum class CgRule { fletcher_reeves, polak_ribiere_plus };
enum class RetractionKind { second_order, exponential };
enum class Termination { tolerance, max_iterations, stagnation };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::fixed_point: return "fp";
    case Algorithm::riemann_sd: return "rsd";
    case Algorithm::riemann_cg: return "rcg";
  }
  return "?";
}

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_iterations: return "max_iterations";
    case Termination::stagnation: return "stagnation";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "fp" || s == "fixed_point") return Algorithm::fixed_point;
  if (s == "rsd" || s == "riemann_sd") return Algorithm::riemann_sd;
  if (s == "rcg" || s == "riemann_cg") return Algorithm::riemann_cg;
  throw ParameterError("unknown algorithm '" + std::string(s) + "' (expected fp, rsd or rcg)");
}

struct LineSearchOptions {
  double initial_step = 1.0;          // metric length of the very first trial step
  double contraction = 0.5;
  double sufficient_decrease = 1e-4;  // Armijo constant
  double optimism = 2.0;              // later trial steps: optimism * 2 (L_{t-1} - L_t) / -slope
  int max_halvings = 60;
};

struct FitOptions {
  Algorithm algorithm = Algorithm::riemann_cg;
  int max_iterations = 0;  // 0: 10000 for fixed point, 500 for Riemannian
  double tolerance = 1e-8;
  InitKind init = InitKind::wishart_mle;
  std::optional<SpdMat> user_init;
  LineSearchOptions line_search;
  CgRule cg_rule = CgRule::polak_ribiere_plus;
  RetractionKind retraction = RetractionKind::second_order;
  bool check_model = true;
  // When set, every trace record carries delta^2(G_t, reference); the
  // evaluation is excluded from the timings.
  std::optional<SpdMat> reference;

  int resolved_max_iterations() const {
    if (max_iterations > 0) return max_iterations;
    return algorithm == Algorithm::fixed_point ? 10000 : 500;
  }

  void validate() const {
    if (!(tolerance > 0.0)) throw ParameterError("FitOptions: tolerance must be > 0");
    if (max_iterations < 0) throw ParameterError("FitOptions: max_iterations must be >= 1");
    const auto& ls = line_search;
    if (!(ls.contraction > 0.0 && ls.contraction < 1.0)) {
      throw ParameterError("FitOptions: contraction must lie in (0, 1)");
    }
    if (!(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease <= 0.5)) {
      throw ParameterError("FitOptions: sufficient decrease must lie in (0, 0.5]");
    }
    if (!(ls.initial_step > 0.0) || !(ls.optimism > 0.0) || ls.max_halvings < 1) {
      throw ParameterError("FitOptions: invalid line-search parameters");
    }
    if (init == InitKind::user && !user_init) throw ParameterError("FitOptions: user init requested but not given");
  }
};

struct TraceRecord {
  int iteration = 0;
  double cost = 0.0;           // L(G_t)
  double grad_norm = 0.0;      // ||grad L(G_t)|| in the Fisher metric
  double step_distance = 0.0;  // delta(G_{t-1}, G_t)
  double seconds = 0.0;        // cumulative wall time
  double reference_error = std::numeric_limits<double>::quiet_NaN();
};

struct FitReport {
  SpdMat estimate;
  bool converged = false;
  int iterations = 0;
  std::vector<TraceRecord> trace;
  Termination termination = Termination::max_iterations;
  std::vector<std::string> warnings;
};

/// (1/nK) sum_k S_k
inline SpdMat wishart_closed_form(const SampleSet& data, int n) {
  if (n < 1) throw ParameterError("wishart_closed_form: n must be >= 1");
  Matrix sum = Matrix::Zero(data.dim(), data.dim());
  for (const auto& s : data) sum += s.matrix();
  return SpdMat(SymMat(sum / (static_cast<double>(n) * static_cast<double>(data.size()))));
}

/// One fixed-point update (1/nK) sum_k u(tr(G^-1 S_k)) S_k.
inline SpdMat fixed_point_step(const EWModel& model, const SpdMat& g, const SampleSet& data) {
  detail::check_model_dim(model, data.dim(), "fixed_point_step");
  const Vector t = detail::whitened_traces(g, data);
  const Matrix m = detail::weighted_scatter(model, t, data);
  return SpdMat(SymMat(m / (model.n() * static_cast<double>(data.size()))));
}

/// Riemannian gradient under `coeff`, evaluated directly as
///   (1/2a)(nK G - M) - b/(a(a+pb)) * (1/2)(nKp - sum_k u_k t_k) G,  M = sum_k u_k S_k.
inline SymMat riemannian_gradient(const EWModel& model, const MetricCoefficients& coeff, const SpdMat& g,
                                  const SampleSet& data) {
  detail::check_model_dim(model, data.dim(), "riemannian_gradient");
  const Vector t = detail::whitened_traces(g, data);
  const Matrix m = detail::weighted_scatter(model, t, data);
  double psi_sum = 0.0;
  for (Index k = 0; k < t.size(); ++k) psi_sum += model.u(t(k)) * t(k);
  const double nk = model.n() * static_cast<double>(data.size());
  const double a = coeff.alpha();
  const double b = coeff.beta();
  const double p = static_cast<double>(model.p());
  const double tr = 0.5 * (nk * p - psi_sum);  // tr(grad_E L G)
  return SymMat((nk * g.matrix() - m) / (2.0 * a) - (b / (a * (a + p * b)) * tr) * g.matrix());
}

/// ||grad L(G)|| in the model's Fisher metric.
inline double gradient_norm(const EWModel& model, const SpdMat& g, const SampleSet& data) {
  const MetricCoefficients coeff = metric_coefficients(model);
  return metric_norm(coeff, g, riemannian_gradient(model, coeff, g, data));
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline SpdMat initial_point(const EWModel& model, const SampleSet& data, const FitOptions& opts) {
  switch (opts.init) {
    case InitKind::identity: return SpdMat::identity(model.p());
    case InitKind::wishart_mle: return wishart_closed_form(data, model.n());
    case InitKind::user:
      if (opts.user_init->dim() != model.p()) throw NumericInputError("fit: user init has the wrong dimension");
      return *opts.user_init;
  }
  return SpdMat::identity(model.p());
}

inline void precheck(const EWModel& model, const SampleSet& data, const FitOptions& opts, FitReport& report) {
  opts.validate();
  check_model_dim(model, data.dim(), "fit");
  if (!opts.check_model) return;
  const AssumptionReport a = check_assumptions(model.generator(), model.n(), model.p(), default_assumption_grid());
  if (!a.passed()) {
    std::string why;
    for (const auto& m : a.messages) why += (why.empty() ? "" : "; ") + m;
    throw ModelError("fit: density generator violates the MLE assumptions: " + why);
  }
  if (!a.conclusive()) report.warnings.push_back("sup psi unknown; existence of the MLE not certified");
}

inline void check_finite(double cost) {
  if (!std::isfinite(cost)) throw DivergenceError("fit: non-finite cost");
}

class Stopwatch {
 public:
  Stopwatch() : start_(Clock::now()) {}
  void pause() { paused_at_ = Clock::now(); }
  void resume() { excluded_ += Clock::now() - paused_at_; }
  double seconds() const { return std::chrono::duration<double>(Clock::now() - start_ - excluded_).count(); }

 private:
  Clock::time_point start_;
  Clock::time_point paused_at_{};
  Clock::duration excluded_{};
};

inline void record(FitReport& report, const FitOptions& opts, const MetricCoefficients& coeff, Stopwatch& clock,
                   const SpdMat& g, TraceRecord rec) {
  rec.seconds = clock.seconds();
  if (opts.reference) {
    clock.pause();
    rec.reference_error = fisher_distance_sq(coeff, g, *opts.reference);
    clock.resume();
  }
  report.trace.push_back(rec);
}

}  // namespace detail

/// Fixed-point iteration from the configured initial point.
inline FitReport fit_fixed_point(const EWModel& model, const SampleSet& data, const FitOptions& opts = {}) {
  FitReport report;
  detail::precheck(model, data, opts, report);
  const MetricCoefficients coeff = metric_coefficients(model);
  const int max_iter = opts.resolved_max_iterations();
  detail::Stopwatch clock;

  SpdMat g = detail::initial_point(model, data, opts);
  double cost = neg_log_likelihood(model, g, data);
  detail::check_finite(cost);
  for (int it = 1; it <= max_iter; ++it) {
    SpdMat next = fixed_point_step(model, g, data);
    const SymMat delta = next.sym() - g.sym();
    cost += neg_log_likelihood_increment(model, g, delta, next, data);
    detail::check_finite(cost);
    const double step = std::sqrt(fisher_distance_sq_increment(coeff, g, delta));
    g = std::move(next);
    TraceRecord rec;
    rec.iteration = it;
    rec.cost = cost;
    rec.grad_norm = metric_norm(coeff, g, riemannian_gradient(model, coeff, g, data));
    rec.step_distance = step;
    detail::record(report, opts, coeff, clock, g, rec);
    report.iterations = it;
    if (step < opts.tolerance) {
      report.converged = true;
      report.termination = Termination::tolerance;
      break;
    }
  }
  if (!report.converged) report.termination = Termination::max_iterations;
  report.estimate = g;
  return report;
}

/// Riemannian steepest descent / conjugate gradient under the Fisher metric.
inline FitReport fit_riemannian(const EWModel& model, const SampleSet& data, const FitOptions& opts = {}) {
  FitReport report;
  detail::precheck(model, data, opts, report);
  const MetricCoefficients coeff = metric_coefficients(model);
  const int max_iter = opts.resolved_max_iterations();
  const auto& ls = opts.line_search;
  const bool use_cg = opts.algorithm == Algorithm::riemann_cg;
  detail::Stopwatch clock;

  SpdMat g = detail::initial_point(model, data, opts);
  double cost = neg_log_likelihood(model, g, data);
  detail::check_finite(cost);
  SymMat grad = riemannian_gradient(model, coeff, g, data);
  double grad_sq = metric_inner(coeff, g, grad, grad);

  // Previous iterate's state for the conjugate direction and the initial step guess.
  std::optional<SpdMat> prev_g;
  SymMat prev_dir;
  SymMat prev_grad;
  double prev_grad_sq = 0.0;
  double prev_step = 0.0;
  double prev_decrease = 0.0;  // L_{t-1} - L_t > 0

  auto increment = [&](const SymMat& xi) {
    if (opts.retraction == RetractionKind::exponential) return exp_map_increment(g, xi);
    SymMat d = retraction_increment(g, xi);
    if (!validate_spd(g.sym() + d)) d = exp_map_increment(g, xi);
    return d;
  };

  report.termination = Termination::max_iterations;
  for (int it = 1; it <= max_iter; ++it) {
    if (grad_sq == 0.0) {
      // Exact critical point: a zero step meets any tolerance.
      TraceRecord rec;
      rec.iteration = it;
      rec.cost = cost;
      detail::record(report, opts, coeff, clock, g, rec);
      report.iterations = it;
      report.converged = true;
      report.termination = Termination::tolerance;
      break;
    }

    SymMat dir = -grad;
    if (use_cg && prev_g) {
      const SymMat carried = vector_transport(*prev_g, g, prev_dir * prev_step);
      double kappa = 0.0;
      if (opts.cg_rule == CgRule::fletcher_reeves) {
        kappa = grad_sq / prev_grad_sq;
      } else {
        const SymMat moved_grad = vector_transport(*prev_g, g, prev_grad);
        kappa = std::max(0.0, metric_inner(coeff, g, grad, grad - moved_grad) / prev_grad_sq);
      }
      dir = -grad + carried * kappa;
      if (!(metric_inner(coeff, g, grad, dir) < 0.0)) dir = -grad;  // restart
    }
    const double slope = metric_inner(coeff, g, grad, dir);
    const double dir_norm = std::sqrt(metric_inner(coeff, g, dir, dir));

    double lambda = ls.initial_step / dir_norm;
    if (prev_g && prev_decrease > 0.0) {
      const double guess = ls.optimism * 2.0 * prev_decrease / -slope;
      if (std::isfinite(guess) && guess > 0.0) lambda = guess;
    }

    bool accepted = false;
    SymMat delta;
    std::optional<SpdMat> next;
    double change = 0.0;
    for (int j = 0; j <= ls.max_halvings; ++j, lambda *= ls.contraction) {
      delta = increment(dir * lambda);
      SymMat candidate = g.sym() + delta;
      if (!validate_spd(candidate)) continue;
      next.emplace(candidate);
      change = neg_log_likelihood_increment(model, g, delta, *next, data);
      if (std::isfinite(change) && change <= ls.sufficient_decrease * lambda * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No decrease is representable. Count it as converged when the gradient
      // is within `tolerance` of the size of its two cancelling terms,
      // ||nK G / (2 alpha)||_G.
      const double nk = model.n() * static_cast<double>(data.size());
      const double p = static_cast<double>(model.p());
      const double scale = nk / (2.0 * coeff.alpha()) * std::sqrt(p * (coeff.alpha() + p * coeff.beta()));
      report.termination = Termination::stagnation;
      report.converged = std::sqrt(grad_sq) <= opts.tolerance * scale;
      break;
    }

    const double step = std::sqrt(fisher_distance_sq_increment(coeff, g, delta));
    prev_g = g;
    prev_dir = dir;
    prev_grad = grad;
    prev_grad_sq = grad_sq;
    prev_step = lambda;
    prev_decrease = -change;

    g = std::move(*next);
    cost += change;
    detail::check_finite(cost);
    grad = riemannian_gradient(model, coeff, g, data);
    grad_sq = metric_inner(coeff, g, grad, grad);

    TraceRecord rec;
    rec.iteration = it;
    rec.cost = cost;
    rec.grad_norm = std::sqrt(std::max(0.0, grad_sq));
    rec.step_distance = step;
    detail::record(report, opts, coeff, clock, g, rec);
    report.iterations = it;
    if (step < opts.tolerance) {
      report.converged = true;
      report.termination = Termination::tolerance;
      break;
    }
  }
  report.estimate = g;
  return report;
}

/// Dispatches on opts.algorithm.
inline FitReport fit(const EWModel& model, const SampleSet& data, const FitOptions& opts = {}) {
  if (opts.algorithm == Algorithm::fixed_point) return fit_fixed_point(model, data, opts);
  return fit_riemannian(model, data, opts);
}

}  // namespace ewishart
