#pragma once

// Elliptical Wishart models.
//
// A random SPD matrix S with center G, n degrees of freedom and density
// generator h has density
//
//   f(S | G) = pi^{np/2} / Gamma_p(n/2) det(G)^{-n/2} det(S)^{(n-p-1)/2} h(tr(G^-1 S))
//
// and the stochastic representation S = Q G^{1/2} U U^T G^{1/2}, with U
// uniform on the unit Frobenius sphere of p x n matrices and Q an independent
// radius with density proportional to h(t) t^{np/2 - 1}.
//
// The generators below carry h only up to a constant; log_pdf restores the
// constant from the radial mass  int_0^inf h(t) t^{np/2-1} dt.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ewishart/error.hpp"
#include "ewishart/geometry.hpp"
#include "ewishart/linalg.hpp"

namespace ewishart {

using Rng = std::mt19937_64;

/// Degrees of freedom n and matrix dimension p.
struct Dims {
  int n = 0;
  int p = 0;
  double np() const { return static_cast<double>(n) * static_cast<double>(p); }
};

enum class Family { wishart, t_wishart, custom };

struct DensityGenerator {
  using ScalarFn = std::function<double(double, Dims)>;

  std::string name;
  Family family = Family::custom;
  double nu = 0.0;  // t-Wishart degrees of freedom; unused otherwise

  ScalarFn log_h;  // log h(t), up to an additive constant
  ScalarFn u;      // -2 h'(t) / h(t)
  ScalarFn psi;    // t u(t)
  std::function<std::optional<double>(Dims)> psi_sup;  // nullopt when unknown, +inf allowed
  std::function<double(Rng&, Dims)> q_sampler;        // radius Q

  // Optional: log h(t + dt) - log h(t) without cancellation.
  std::function<double(double, double, Dims)> log_h_increment;
  // Optional: log int_0^inf h(t) t^{np/2-1} dt in closed form.
  std::function<double(Dims)> log_radial_mass;

  double log_h_delta(double t, double dt, Dims d) const {
    if (log_h_increment) return log_h_increment(t, dt, d);
    return log_h(t + dt, d) - log_h(t, d);
  }
};

/// Gaussian generator h(t) = exp(-t/2), u = 1, Q ~ chi-square(np).
inline DensityGenerator wishart_generator() {
  DensityGenerator g;
  g.name = "wishart";
  g.family = Family::wishart;
  g.log_h = [](double t, Dims) { return -0.5 * t; };
  g.u = [](double, Dims) { return 1.0; };
  g.psi = [](double t, Dims) { return t; };
  g.psi_sup = [](Dims) -> std::optional<double> { return std::numeric_limits<double>::infinity(); };
  g.q_sampler = [](Rng& rng, Dims d) { return std::chi_squared_distribution<double>(d.np())(rng); };
  g.log_h_increment = [](double, double dt, Dims) { return -0.5 * dt; };
  g.log_radial_mass = [](Dims d) {
    const double a = 0.5 * d.np();
    return a * std::log(2.0) + std::lgamma(a);
  };
  return g;
}

/// h(t) = (1 + t/nu)^{-(nu+np)/2}, u(t) = (nu+np)/(nu+t), Q = np F(np, nu).
inline DensityGenerator t_wishart_generator(double nu) {
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw ParameterError("t_wishart_generator: nu must be positive and finite");
  }
  DensityGenerator g;
  g.name = "t-wishart";
  g.family = Family::t_wishart;
  g.nu = nu;
  g.log_h = [nu](double t, Dims d) { return -0.5 * (nu + d.np()) * std::log1p(t / nu); };
  g.u = [nu](double t, Dims d) { return (nu + d.np()) / (nu + t); };
  g.psi = [nu](double t, Dims d) { return t * (nu + d.np()) / (nu + t); };
  g.psi_sup = [nu](Dims d) -> std::optional<double> { return d.np() + nu; };
  g.q_sampler = [nu](Rng& rng, Dims d) {
    return d.np() * std::fisher_f_distribution<double>(d.np(), nu)(rng);
  };
  g.log_h_increment = [nu](double t, double dt, Dims d) {
    return -0.5 * (nu + d.np()) * std::log1p(dt / (nu + t));
  };
  g.log_radial_mass = [nu](Dims d) {
    const double a = 0.5 * d.np();
    const double b = 0.5 * nu;
    return a * std::log(nu) + std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  };
  return g;
}

/// Generator from log h and u alone; psi = t u(t), no closed-form extras.
inline DensityGenerator custom_generator(std::string name, DensityGenerator::ScalarFn log_h,
                                         DensityGenerator::ScalarFn u,
                                         std::function<double(Rng&, Dims)> q_sampler = {}) {
  DensityGenerator g;
  g.name = std::move(name);
  g.family = Family::custom;
  g.log_h = std::move(log_h);
  g.u = std::move(u);
  g.psi = [uf = g.u](double t, Dims d) { return t * uf(t, d); };
  g.psi_sup = [](Dims) -> std::optional<double> { return std::nullopt; };
  g.q_sampler = std::move(q_sampler);
  return g;
}

class EWModel {
 public:
  /// Throws ModelError unless n > p >= 1.
  EWModel(DensityGenerator generator, int n, int p) : generator_(std::move(generator)), dims_{n, p} {
    if (p < 1) throw ModelError("EWModel: p must be >= 1");
    if (n <= p) {
      throw ModelError("EWModel: degrees of freedom n=" + std::to_string(n) +
                       " must exceed p=" + std::to_string(p));
    }
    if (!generator_.log_h || !generator_.u) throw ModelError("EWModel: generator lacks log_h or u");
  }

  const DensityGenerator& generator() const { return generator_; }
  Dims dims() const { return dims_; }
  int n() const { return dims_.n; }
  int p() const { return dims_.p; }

  double log_h(double t) const { return generator_.log_h(t, dims_); }
  double u(double t) const { return generator_.u(t, dims_); }
  double psi(double t) const { return generator_.psi(t, dims_); }

 private:
  DensityGenerator generator_;
  Dims dims_;
};

class SampleSet {
 public:
  SampleSet() = default;

  /// Throws NumericInputError when empty, of mixed dimension or not SPD.
  explicit SampleSet(std::vector<SpdMat> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw NumericInputError("SampleSet: at least one sample is required");
    const Index p = samples_.front().dim();
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      if (samples_[k].dim() != p) throw NumericInputError("SampleSet: samples differ in dimension");
      if (!validate_spd(samples_[k].sym())) {
        throw NumericInputError("SampleSet: sample " + std::to_string(k) + " is not SPD");
      }
    }
  }

  std::size_t size() const { return samples_.size(); }
  Index dim() const { return samples_.front().dim(); }
  const SpdMat& operator[](std::size_t k) const { return samples_[k]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }
  const std::vector<SpdMat>& samples() const { return samples_; }

  /// Samples at the given indices, in order.
  SampleSet subset(const std::vector<std::size_t>& idx) const {
    std::vector<SpdMat> out;
    out.reserve(idx.size());
    for (std::size_t k : idx) out.push_back(samples_.at(k));
    SampleSet s;
    s.samples_ = std::move(out);
    if (s.samples_.empty()) throw NumericInputError("SampleSet: empty subset");
    return s;
  }

 private:
  std::vector<SpdMat> samples_;
};

/// log Gamma_p(a) = p(p-1)/4 log(pi) + sum_{j=1..p} log Gamma(a - (j-1)/2).
inline double log_multigamma(int p, double a) {
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) out += std::lgamma(a - 0.5 * (j - 1));
  return out;
}

namespace detail {

inline void check_model_dim(const EWModel& m, Index p, const char* what) {
  if (p != m.p()) throw NumericInputError(std::string(what) + ": sample dimension does not match the model");
}

// tr(G^-1 S_k) for every sample.
inline Vector whitened_traces(const SpdMat& g, const SampleSet& data) {
  const Matrix& ginv = g.inverse();
  Vector t(static_cast<Index>(data.size()));
  for (std::size_t k = 0; k < data.size(); ++k) t(static_cast<Index>(k)) = trace_product(ginv, data[k].matrix());
  return t;
}

// sum_k u(t_k) S_k
inline Matrix weighted_scatter(const EWModel& model, const Vector& traces, const SampleSet& data) {
  Matrix m = Matrix::Zero(data.dim(), data.dim());
  for (std::size_t k = 0; k < data.size(); ++k) m += model.u(traces(static_cast<Index>(k))) * data[k].matrix();
  return m;
}

// log int_0^inf h(t) t^{np/2-1} dt, by the trapezoid rule in s = log t.
inline double radial_mass_quadrature(const DensityGenerator& gen, Dims d) {
  const double half_np = 0.5 * d.np();
  auto f = [&](double s) { return gen.log_h(std::exp(s), d) + half_np * s; };
  double peak_s = 0.0;
  double peak = -std::numeric_limits<double>::infinity();
  for (double s = -60.0; s <= 60.0; s += 0.25) {
    const double v = f(s);
    if (v > peak) {
      peak = v;
      peak_s = s;
    }
  }
  constexpr double kDrop = 60.0;
  constexpr double kStep = 1e-3;
  double lo = peak_s;
  while (lo > -800.0 && f(lo) > peak - kDrop) lo -= 0.5;
  double hi = peak_s;
  while (hi < 800.0 && f(hi) > peak - kDrop) hi += 0.5;
  const auto count = static_cast<long>(std::ceil((hi - lo) / kStep));
  const double h = (hi - lo) / static_cast<double>(count);
  double sum = 0.5 * (std::exp(f(lo) - peak) + std::exp(f(hi) - peak));
  for (long i = 1; i < count; ++i) sum += std::exp(f(lo + h * static_cast<double>(i)) - peak);
  return peak + std::log(sum * h);
}

}  // namespace detail

/// log int_0^inf h(t) t^{np/2-1} dt: closed form when the generator has one,
/// quadrature otherwise.
inline double log_radial_mass(const EWModel& model) {
  const auto& gen = model.generator();
  if (gen.log_radial_mass) return gen.log_radial_mass(model.dims());
  return detail::radial_mass_quadrature(gen, model.dims());
}

/// Fisher metric coefficients (alpha, beta). Closed forms for the Wishart and
/// t-Wishart families; Monte-Carlo over the radius sampler otherwise.
inline MetricCoefficients metric_coefficients(const EWModel& model, std::uint64_t mc_seed = 0x5eed,
                                              std::size_t mc_draws = 1'000'000) {
  const double n = model.n();
  const double np = model.dims().np();
  const auto& gen = model.generator();
  double alpha = 0.0;
  switch (gen.family) {
    case Family::wishart:
      alpha = 0.5 * n;
      break;
    case Family::t_wishart:
      alpha = 0.5 * n * (gen.nu + np) / (gen.nu + np + 2.0);
      break;
    case Family::custom: {
      if (!gen.q_sampler) throw ModelError("metric_coefficients: generator has no radius sampler");
      Rng rng(mc_seed);
      constexpr double kRelStep = 1e-5;
      double acc = 0.0;
      for (std::size_t i = 0; i < mc_draws; ++i) {
        const double q = gen.q_sampler(rng, model.dims());
        const double h = kRelStep * q;
        const double du = (model.u(q + h) - model.u(q - h)) / (2.0 * h);
        acc += q * q * du;
      }
      const double expectation = acc / static_cast<double>(mc_draws);
      alpha = 0.5 * n * (1.0 + expectation / (np * (0.5 * np + 1.0)));
      break;
    }
  }
  const double beta = 0.5 * n * (alpha - 0.5 * n);
  return MetricCoefficients(alpha, beta, model.p());
}

/// log f(S | G), including every normalizing constant.
inline double log_pdf(const EWModel& model, const SpdMat& g, const SpdMat& s) {
  detail::check_model_dim(model, g.dim(), "log_pdf");
  detail::check_model_dim(model, s.dim(), "log_pdf");
  const double n = model.n();
  const double p = model.p();
  const double np = model.dims().np();
  // log of the constant c with c * pi^{np/2} / Gamma(np/2) * int h t^{np/2-1} = 1
  const double log_c = -0.5 * np * std::log(std::numbers::pi) + std::lgamma(0.5 * np) - log_radial_mass(model);
  const double log_const = 0.5 * np * std::log(std::numbers::pi) - log_multigamma(model.p(), 0.5 * n) + log_c;
  const double t = trace_product(g.inverse(), s.matrix());
  return log_const - 0.5 * n * g.logdet() + 0.5 * (n - p - 1.0) * s.logdet() + model.log_h(t);
}

/// L(G) = (nK/2) log det G - sum_k log h(tr(G^-1 S_k)), constant dropped.
inline double neg_log_likelihood(const EWModel& model, const SpdMat& g, const SampleSet& data) {
  detail::check_model_dim(model, data.dim(), "neg_log_likelihood");
  const Vector t = detail::whitened_traces(g, data);
  double sum_log_h = 0.0;
  for (Index k = 0; k < t.size(); ++k) sum_log_h += model.log_h(t(k));
  return 0.5 * model.n() * static_cast<double>(data.size()) * g.logdet() - sum_log_h;
}

/// L(G + delta) - L(G), evaluated from the increment so that small changes
/// keep full relative precision. `g_next` must equal G + delta.
inline double neg_log_likelihood_increment(const EWModel& model, const SpdMat& g, const SymMat& delta,
                                           const SpdMat& g_next, const SampleSet& data) {
  detail::check_model_dim(model, data.dim(), "neg_log_likelihood");
  const SymEig e = sym_eig(detail::whiten(g, delta));
  if (e.values.minCoeff() <= -1.0) throw SingularityError("neg_log_likelihood: increment leaves the cone");
  double logdet_ratio = 0.0;
  for (Index i = 0; i < e.values.size(); ++i) logdet_ratio += std::log1p(e.values(i));
  // tr(G'^-1 S) - tr(G^-1 S) = -tr(G'^-1 delta G^-1 S)
  const Matrix a = sym_part(g_next.inverse() * delta.matrix() * g.inverse());
  const Matrix& ginv = g.inverse();
  double dlog_h = 0.0;
  for (const auto& s : data) {
    const double t = trace_product(ginv, s.matrix());
    const double dt = -trace_product(a, s.matrix());
    dlog_h += model.generator().log_h_delta(t, dt, model.dims());
  }
  return 0.5 * model.n() * static_cast<double>(data.size()) * logdet_ratio - dlog_h;
}

/// grad_E L = (1/2) G^-1 (nK G - sum_k u(tr(G^-1 S_k)) S_k) G^-1.
inline SymMat euclidean_gradient(const EWModel& model, const SpdMat& g, const SampleSet& data) {
  detail::check_model_dim(model, data.dim(), "euclidean_gradient");
  const Vector t = detail::whitened_traces(g, data);
  const Matrix m = detail::weighted_scatter(model, t, data);
  const Matrix& ginv = g.inverse();
  const double nk = model.n() * static_cast<double>(data.size());
  return SymMat(0.5 * (nk * ginv - ginv * m * ginv));
}

/// K draws through the stochastic representation S = Q G^{1/2} U U^T G^{1/2}.
inline SampleSet sample(const EWModel& model, const SpdMat& g, std::size_t count, Rng& rng) {
  detail::check_model_dim(model, g.dim(), "sample");
  if (count < 1) throw ParameterError("sample: count must be >= 1");
  const auto& gen = model.generator();
  if (!gen.q_sampler) throw ModelError("sample: generator has no radius sampler");
  const int p = model.p();
  const int n = model.n();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SpdMat> out;
  out.reserve(count);
  Matrix u(p, n);
  for (std::size_t k = 0; k < count; ++k) {
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < p; ++i) u(i, j) = normal(rng);
    u /= u.norm();
    const double q = gen.q_sampler(rng, model.dims());
    const Matrix x = g.sqrt() * u;
    out.emplace_back(SymMat(q * (x * x.transpose())));
  }
  return SampleSet(std::move(out));
}

/// Verdicts on the generator conditions that guarantee existence, uniqueness
/// and geodesic convexity of the MLE.
struct AssumptionReport {
  bool u_nonnegative = true;        // u >= 0, and u > 0 for t > 0
  bool u_nonincreasing = true;
  bool psi_nondecreasing = true;
  std::optional<bool> psi_sup_exceeds_np;  // nullopt: sup unknown (inconclusive)
  bool psi_strictly_increasing = true;    // where psi < sup psi
  bool neg_log_h_convex_in_log = true;    // s -> -log h(e^s) convex
  std::vector<std::string> messages;

  /// All verdicts pass; an unknown supremum counts as a pass.
  bool passed() const {
    return u_nonnegative && u_nonincreasing && psi_nondecreasing && psi_sup_exceeds_np.value_or(true) &&
           psi_strictly_increasing && neg_log_h_convex_in_log;
  }
  bool conclusive() const { return psi_sup_exceeds_np.has_value(); }
};

inline AssumptionReport check_assumptions(const DensityGenerator& gen, int n, int p, const std::vector<double>& grid) {
  AssumptionReport r;
  const Dims d{n, p};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw ParameterError("check_assumptions: grid must be nonnegative and strictly increasing");
    }
  }
  constexpr double kRel = 1e-12;
  std::vector<double> u(grid.size());
  std::vector<double> psi(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    u[i] = gen.u(grid[i], d);
    psi[i] = gen.psi ? gen.psi(grid[i], d) : grid[i] * u[i];
  }
  const std::optional<double> sup = gen.psi_sup ? gen.psi_sup(d) : std::nullopt;

  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(u[i] >= 0.0) || (grid[i] > 0.0 && !(u[i] > 0.0))) {
      r.u_nonnegative = false;
      r.messages.push_back("u is negative (or zero for t > 0) at t=" + std::to_string(grid[i]));
      break;
    }
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (u[i] > u[i - 1] + kRel * std::abs(u[i - 1])) {
      r.u_nonincreasing = false;
      r.messages.push_back("u increases near t=" + std::to_string(grid[i]));
      break;
    }
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (psi[i] < psi[i - 1] - kRel * std::abs(psi[i - 1])) {
      r.psi_nondecreasing = false;
      r.messages.push_back("psi decreases near t=" + std::to_string(grid[i]));
      break;
    }
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool below_sup = !sup || psi[i - 1] < *sup;
    if (below_sup && !(psi[i] > psi[i - 1])) {
      r.psi_strictly_increasing = false;
      r.messages.push_back("psi is flat below its supremum near t=" + std::to_string(grid[i]));
      break;
    }
  }
  if (sup) {
    r.psi_sup_exceeds_np = *sup > d.np();
    if (!*r.psi_sup_exceeds_np) r.messages.push_back("sup psi does not exceed np");
  } else {
    r.messages.push_back("sup psi unknown: existence condition inconclusive");
  }
  // Second divided differences of s -> -log h(e^s) on the positive grid points.
  std::vector<double> s;
  std::vector<double> f;
  for (double t : grid) {
    if (t > 0.0) {
      s.push_back(std::log(t));
      f.push_back(-gen.log_h(t, d));
    }
  }
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double left = (f[i] - f[i - 1]) / (s[i] - s[i - 1]);
    const double right = (f[i + 1] - f[i]) / (s[i + 1] - s[i]);
    const double scale = std::max({std::abs(left), std::abs(right), 1.0});
    if (right < left - 1e-9 * scale) {
      r.neg_log_h_convex_in_log = false;
      r.messages.push_back("-log h(e^s) is not convex near t=" + std::to_string(std::exp(s[i])));
      break;
    }
  }
  return r;
}

/// Log-spaced grid on [lo, hi] preceded by 0.
inline std::vector<double> default_assumption_grid(double lo = 1e-6, double hi = 1e8, std::size_t count = 400) {
  std::vector<double> g{0.0};
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  return g;
}

}  // namespace ewishart
