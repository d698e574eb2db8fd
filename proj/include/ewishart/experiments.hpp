#pragma once

// Monte-Carlo harness for the synthetic studies.
//
// Repetition r of a study draws everything from its own stream, seeded by
// (seed, study parameter, r), so its output does not depend on how many
// repetitions run or on how they are spread over worker threads.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ewishart/config.hpp"
#include "ewishart/error.hpp"
#include "ewishart/estimation.hpp"
#include "ewishart/geometry.hpp"
#include "ewishart/linalg.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

/// Independent stream for one repetition.
inline Rng repetition_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t rep) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(tag), hi(tag), lo(rep), hi(rep)};
  return Rng(seq);
}

/// G = V diag(lambda) V^T with V Haar on O(p) and lambda spanning
/// [1/sqrt(c), sqrt(c)]: both endpoints present, the rest uniform in between.
inline SpdMat random_center(int p, double c, Rng& rng) {
  if (p < 2) throw ParameterError("random_center: p must be >= 2");
  if (!(c >= 1.0) || !std::isfinite(c)) throw ParameterError("random_center: condition number must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < p; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);

  if (c == 1.0) return SpdMat::identity(p);

  const double lo = 1.0 / std::sqrt(c);
  const double hi = std::sqrt(c);
  Vector lambda(p);
  lambda(0) = lo;
  lambda(p - 1) = hi;
  std::uniform_real_distribution<double> unif(lo, hi);
  for (Index i = 1; i < p - 1; ++i) lambda(i) = unif(rng);
  return SpdMat(SymMat(q * lambda.asDiagonal() * q.transpose()));
}

/// Manifold dimension over sample count, p(p+1)/(2K): the first-order
/// intrinsic bound when error is measured by the squared Fisher distance.
inline double crb_reference(int p, int K, const MetricCoefficients& coeff) {
  if (p < 1 || K < 1) throw ParameterError("crb_reference: p and K must be >= 1");
  (void)coeff;
  return static_cast<double>(p) * (p + 1) / (2.0 * K);
}

/// Runs body(i) for i in [0, count) on `threads` workers (0: hardware
/// concurrency). The first exception is rethrown after all workers stop.
template <class Body>
void parallel_for(std::size_t count, int threads, Body body) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct RunRecord {
  int repetition = 0;
  std::string estimator;
  int n = 0;
  int K = 0;
  double error = std::numeric_limits<double>::quiet_NaN();  // delta^2(G_hat, G)
  int iterations = 0;
  double seconds = 0.0;
  bool converged = false;
  std::string status = "ok";  // otherwise the failure message
  std::vector<TraceRecord> trace;

  bool ok() const { return status == "ok"; }
};

struct SummaryRow {
  std::string name;
  int n = 0;
  int K = 0;
  int count = 0;  // successful repetitions
  double mean_err = 0.0;
  double std_err = 0.0;  // sample standard deviation
  double mean_iters = 0.0;
  double median_iters = 0.0;
  double mean_seconds = 0.0;
};

namespace detail {

template <class Fn>
RunRecord timed_run(const std::string& name, int rep, int n, int k, Fn fn) {
  RunRecord r;
  r.repetition = rep;
  r.estimator = name;
  r.n = n;
  r.K = k;
  const auto start = std::chrono::steady_clock::now();
  try {
    fn(r);
  } catch (const Error& e) {
    r.status = std::string("failed: ") + e.what();
    r.error = std::numeric_limits<double>::quiet_NaN();
  }
  if (r.seconds == 0.0) r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline RunRecord fitted_run(const std::string& name, int rep, const EWModel& model, const MetricCoefficients& coeff,
                            const SampleSet& data, const SpdMat& truth, FitOptions opts, bool keep_trace) {
  return timed_run(name, rep, model.n(), static_cast<int>(data.size()), [&](RunRecord& r) {
    if (keep_trace) opts.reference = truth;
    FitReport rep_fit = fit(model, data, opts);
    r.error = fisher_distance_sq(coeff, rep_fit.estimate, truth);
    r.iterations = rep_fit.iterations;
    r.converged = rep_fit.converged;
    if (!rep_fit.trace.empty()) r.seconds = rep_fit.trace.back().seconds;
    if (keep_trace) r.trace = std::move(rep_fit.trace);
  });
}

inline Algorithm second_algorithm(const ExperimentConfig& config) {
  return config.fit.algorithm == Algorithm::fixed_point ? Algorithm::riemann_cg : config.fit.algorithm;
}

}  // namespace detail

/// For each n (config.n_grid, or config.n) and repetition: a fresh random
/// center and t-Wishart data, fitted by the fixed point and by the configured
/// Riemannian algorithm (rcg unless rsd is chosen), with full traces.
inline std::vector<RunRecord> run_convergence_study(const ExperimentConfig& config) {
  config.validate();
  const std::vector<int> ns = config.n_grid.empty() ? std::vector<int>{config.n} : config.n_grid;
  const auto reps = static_cast<std::size_t>(config.repetitions);
  const Algorithm riem = detail::second_algorithm(config);
  std::vector<RunRecord> out;
  for (int n : ns) {
    const EWModel model = config.ew_model(n, config.p);
    const MetricCoefficients coeff = metric_coefficients(model);
    std::vector<std::vector<RunRecord>> per_rep(reps);
    parallel_for(reps, config.threads, [&](std::size_t r) {
      Rng rng = repetition_stream(config.seed, static_cast<std::uint64_t>(n), r);
      const SpdMat truth = random_center(config.p, config.condition_number, rng);
      const SampleSet data = sample(model, truth, static_cast<std::size_t>(config.K), rng);
      FitOptions fp = config.fit;
      fp.algorithm = Algorithm::fixed_point;
      FitOptions rg = config.fit;
      rg.algorithm = riem;
      const int rep = static_cast<int>(r);
      per_rep[r].push_back(detail::fitted_run("fp", rep, model, coeff, data, truth, fp, true));
      per_rep[r].push_back(detail::fitted_run(std::string(to_string(riem)), rep, model, coeff, data, truth, rg, true));
    });
    for (auto& v : per_rep)
      for (auto& rec : v) out.push_back(std::move(rec));
  }
  return out;
}

/// For each K in the grid and repetition: the Wishart closed form and the MLE
/// of the configured model, both scored by delta^2 under the data model's
/// Fisher metric.
inline std::vector<RunRecord> run_error_study(const ExperimentConfig& config, const std::vector<int>& K_grid) {
  config.validate();
  if (K_grid.empty()) throw ParameterError("run_error_study: K_grid must not be empty");
  for (std::size_t i = 0; i < K_grid.size(); ++i) {
    if (K_grid[i] < 1 || (i > 0 && K_grid[i] <= K_grid[i - 1])) {
      throw ParameterError("run_error_study: K_grid must be positive and ascending");
    }
  }
  const EWModel model = config.ew_model();
  const MetricCoefficients coeff = metric_coefficients(model);
  const auto reps = static_cast<std::size_t>(config.repetitions);
  std::vector<RunRecord> out;
  for (int k : K_grid) {
    std::vector<std::vector<RunRecord>> per_rep(reps);
    parallel_for(reps, config.threads, [&](std::size_t r) {
      Rng rng = repetition_stream(config.seed, static_cast<std::uint64_t>(k), r);
      const SpdMat truth = random_center(config.p, config.condition_number, rng);
      const SampleSet data = sample(model, truth, static_cast<std::size_t>(k), rng);
      const int rep = static_cast<int>(r);
      per_rep[r].push_back(detail::timed_run("wishart", rep, model.n(), k, [&](RunRecord& rec) {
        rec.error = fisher_distance_sq(coeff, wishart_closed_form(data, model.n()), truth);
        rec.converged = true;
      }));
      per_rep[r].push_back(
          detail::fitted_run(model.generator().name + "-mle", rep, model, coeff, data, truth, config.fit, false));
    });
    for (auto& v : per_rep)
      for (auto& rec : v) out.push_back(std::move(rec));
  }
  return out;
}

/// Mean and sample standard deviation per (estimator, n, K), in order of
/// first appearance. Failed runs are left out.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    std::size_t g = 0;
    while (g < rows.size() && !(rows[g].name == r.estimator && rows[g].n == r.n && rows[g].K == r.K)) ++g;
    if (g == rows.size()) {
      rows.push_back(SummaryRow{r.estimator, r.n, r.K});
      groups.emplace_back();
    }
    if (r.ok()) groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < rows.size(); ++g) {
    auto& row = rows[g];
    const auto& grp = groups[g];
    row.count = static_cast<int>(grp.size());
    if (grp.empty()) {
      row.mean_err = row.std_err = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double m = static_cast<double>(grp.size());
    std::vector<double> iters;
    for (const auto* r : grp) {
      row.mean_err += r->error;
      row.mean_iters += r->iterations;
      row.mean_seconds += r->seconds;
      iters.push_back(r->iterations);
    }
    row.mean_err /= m;
    row.mean_iters /= m;
    row.mean_seconds /= m;
    double ss = 0.0;
    for (const auto* r : grp) ss += (r->error - row.mean_err) * (r->error - row.mean_err);
    row.std_err = grp.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    std::sort(iters.begin(), iters.end());
    const std::size_t h = iters.size() / 2;
    row.median_iters = iters.size() % 2 ? iters[h] : 0.5 * (iters[h - 1] + iters[h]);
  }
  return rows;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [path, value] : config_entries(c)) j[path] = value;
  return j;
}

/// {config, estimators: [...], crb_reference: {...}}; the reference block is
/// included when `with_reference` is set.
inline nlohmann::json summary_json(const ExperimentConfig& config, const std::vector<SummaryRow>& rows,
                                   bool with_reference) {
  nlohmann::json j;
  j["config"] = config_json(config);
  j["estimators"] = nlohmann::json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& r : rows) {
    j["estimators"].push_back({{"name", r.name},
                               {"n", r.n},
                               {"K", r.K},
                               {"count", r.count},
                               {"mean_err", num(r.mean_err)},
                               {"std_err", num(r.std_err)},
                               {"mean_iters", num(r.mean_iters)},
                               {"median_iters", num(r.median_iters)},
                               {"mean_seconds", num(r.mean_seconds)}});
  }
  if (with_reference) {
    const MetricCoefficients coeff = metric_coefficients(config.ew_model());
    nlohmann::json values = nlohmann::json::array();
    for (int k : config.K_grid) values.push_back({{"K", k}, {"value", crb_reference(config.p, k, coeff)}});
    j["crb_reference"] = {{"formula", "p(p+1)/(2K)"}, {"kind", "first-order reference"}, {"values", values}};
  }
  return j;
}

inline std::string records_csv(const ExperimentConfig& config, const std::vector<RunRecord>& records) {
  std::string out = config_comment(config);
  out += "repetition,estimator,n,K,error,iterations,seconds,converged,status\n";
  for (const auto& r : records) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), '"', '\'');
    out += std::to_string(r.repetition) + "," + r.estimator + "," + std::to_string(r.n) + "," + std::to_string(r.K) +
           "," + detail::format_double(r.error) + "," + std::to_string(r.iterations) + "," +
           detail::format_double(r.seconds) + "," + (r.converged ? "true" : "false") + ",\"" + status + "\"\n";
  }
  return out;
}

inline std::string trace_csv(const ExperimentConfig& config, const std::vector<TraceRecord>& trace) {
  std::string out = config_comment(config);
  out += "iteration,cost,grad_norm,step_distance,error,seconds\n";
  for (const auto& t : trace) {
    out += std::to_string(t.iteration) + "," + detail::format_double(t.cost) + "," +
           detail::format_double(t.grad_norm) + "," + detail::format_double(t.step_distance) + "," +
           detail::format_double(t.reference_error) + "," + detail::format_double(t.seconds) + "\n";
  }
  return out;
}

}  // namespace ewishart
