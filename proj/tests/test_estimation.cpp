#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ewishart/estimation.hpp"
#include "ewishart/experiments.hpp"
#include "oracles.hpp"

using namespace ewishart;

namespace {

double distance(const EWModel& model, const SpdMat& a, const SpdMat& b) {
  return std::sqrt(fisher_distance_sq(metric_coefficients(model), a, b));
}

struct Problem {
  EWModel model;
  SpdMat truth;
  SampleSet data;
};

Problem t_problem(int p, int n, double nu, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  EWModel model(t_wishart_generator(nu), n, p);
  SpdMat truth = random_center(p, 10.0, rng);
  SampleSet data = sample(model, truth, k, rng);
  return {model, truth, data};
}

}  // namespace

TEST(WishartClosedForm, Examples) {
  EXPECT_LT((wishart_closed_form(SampleSet({SpdMat(SymMat::identity(3) * 5.0)}), 5).matrix() - Matrix::Identity(3, 3))
                .norm(),
            1e-15);
  Vector a(2), b(2);
  a << 2, 2;
  b << 4, 6;
  const SpdMat g = wishart_closed_form(SampleSet({SpdMat(SymMat::diagonal(a)), SpdMat(SymMat::diagonal(b))}), 1);
  EXPECT_DOUBLE_EQ(g(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g(1, 1), 4.0);
  EXPECT_DOUBLE_EQ(g(0, 1), 0.0);
}

TEST(WishartClosedForm, IsCriticalPoint) {
  Rng rng(41);
  const EWModel model(wishart_generator(), 12, 4);
  const SampleSet data = sample(model, random_center(4, 10.0, rng), 50, rng);
  const SpdMat g = wishart_closed_form(data, 12);
  const SymMat egrad = euclidean_gradient(model, g, data);
  EXPECT_LT(egrad.norm(), 1e-10 * 12 * 50);
  EXPECT_LT(gradient_norm(model, g, data), 1e-9 * 12 * 50);
}

TEST(FixedPointStep, WishartReturnsClosedFormFromAnyStart) {
  Rng rng(42);
  std::mt19937_64 orng(42);
  const EWModel model(wishart_generator(), 9, 3);
  const SampleSet data = sample(model, random_center(3, 10.0, rng), 20, rng);
  const SpdMat closed = wishart_closed_form(data, 9);
  for (int i = 0; i < 5; ++i) {
    const SpdMat next = fixed_point_step(model, SpdMat(oracle::random_spd(3, orng, 2.0)), data);
    EXPECT_LT((next.matrix() - closed.matrix()).norm(), 1e-13 * closed.matrix().norm());
  }
}

TEST(FixedPointStep, ScalarOracle) {
  // t-Wishart nu=10, n=2, p=1, S=4: psi(q) = np at q=2, so G = 2.
  const EWModel model(t_wishart_generator(10.0), 2, 1);
  const SampleSet data({SpdMat(Matrix::Constant(1, 1, 4.0))});
  FitOptions opts;
  opts.algorithm = Algorithm::fixed_point;
  opts.tolerance = 1e-13;
  const FitReport r = fit(model, data, opts);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.estimate(0, 0), 2.0, 1e-11);
  opts.algorithm = Algorithm::riemann_cg;
  EXPECT_NEAR(fit(model, data, opts).estimate(0, 0), 2.0, 1e-9);
}

TEST(RiemannianGradient, MatchesEgradToRgrad) {
  const Problem pr = t_problem(5, 12, 4.0, 30, 43);
  std::mt19937_64 orng(43);
  const MetricCoefficients coeff = metric_coefficients(pr.model);
  for (int i = 0; i < 10; ++i) {
    const SpdMat g(oracle::random_spd(5, orng));
    const SymMat direct = riemannian_gradient(pr.model, coeff, g, pr.data);
    const SymMat via = egrad_to_rgrad(coeff, g, euclidean_gradient(pr.model, g, pr.data));
    EXPECT_LT((direct.matrix() - via.matrix()).norm(), 1e-10 * via.matrix().norm());
  }
}

TEST(GradientNorm, PositiveAwayFromCritical) {
  const Problem pr = t_problem(3, 8, 4.0, 10, 44);
  EXPECT_GT(gradient_norm(pr.model, SpdMat::identity(3), pr.data), 0.0);
}

TEST(FitFixedPoint, WishartConvergesInOneStep) {
  Rng rng(45);
  const EWModel model(wishart_generator(), 10, 4);
  const SampleSet data = sample(model, random_center(4, 10.0, rng), 30, rng);
  FitOptions opts;
  opts.algorithm = Algorithm::fixed_point;
  opts.init = InitKind::identity;
  const FitReport r = fit(model, data, opts);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_LT(distance(model, r.estimate, wishart_closed_form(data, 10)), 1e-12);
}

TEST(FitFixedPoint, SatisfiesFixedPointEquationAndDescends) {
  const Problem pr = t_problem(6, 20, 5.0, 80, 46);
  FitOptions opts;
  opts.algorithm = Algorithm::fixed_point;
  opts.init = InitKind::identity;
  opts.tolerance = 1e-11;
  const FitReport r = fit(pr.model, pr.data, opts);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.termination, Termination::tolerance);
  EXPECT_EQ(static_cast<int>(r.trace.size()), r.iterations);
  EXPECT_LT(distance(pr.model, fixed_point_step(pr.model, r.estimate, pr.data), r.estimate), 1e-10);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].cost, r.trace[i - 1].cost + 1e-12);
}

TEST(FitRiemannian, WishartMatchesClosedForm) {
  Rng rng(47);
  const EWModel model(wishart_generator(), 10, 5);
  const SampleSet data = sample(model, random_center(5, 10.0, rng), 40, rng);
  for (Algorithm a : {Algorithm::riemann_sd, Algorithm::riemann_cg}) {
    FitOptions opts;
    opts.algorithm = a;
    opts.init = InitKind::identity;
    opts.tolerance = 1e-10;
    const FitReport r = fit(model, data, opts);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(distance(model, r.estimate, wishart_closed_form(data, 10)), 1e-8);
  }
}

TEST(FitRiemannian, StartingAtTheOptimumConverges) {
  Rng rng(48);
  const EWModel model(wishart_generator(), 10, 5);
  const SampleSet data = sample(model, random_center(5, 10.0, rng), 40, rng);
  const FitReport r = fit(model, data);  // default init is the closed form
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
}

TEST(FitRiemannian, CostTraceIsNonIncreasing) {
  const Problem pr = t_problem(8, 40, 6.0, 100, 49);
  for (Algorithm a : {Algorithm::riemann_sd, Algorithm::riemann_cg}) {
    FitOptions opts;
    opts.algorithm = a;
    opts.init = InitKind::identity;
    const FitReport r = fit(pr.model, pr.data, opts);
    EXPECT_TRUE(r.converged);
    double prev = neg_log_likelihood(pr.model, SpdMat::identity(8), pr.data);
    for (const auto& rec : r.trace) {
      EXPECT_LE(rec.cost, prev);
      EXPECT_TRUE(std::isfinite(rec.cost));
      prev = rec.cost;
    }
  }
}

TEST(FitRiemannian, VariantsAgree) {
  const Problem pr = t_problem(6, 30, 8.0, 60, 50);
  FitOptions base;
  base.tolerance = 1e-10;
  std::vector<SpdMat> fits;
  for (Algorithm a : {Algorithm::fixed_point, Algorithm::riemann_sd, Algorithm::riemann_cg}) {
    FitOptions o = base;
    o.algorithm = a;
    fits.push_back(fit(pr.model, pr.data, o).estimate);
  }
  FitOptions fr = base;
  fr.cg_rule = CgRule::fletcher_reeves;
  fits.push_back(fit(pr.model, pr.data, fr).estimate);
  FitOptions ex = base;
  ex.retraction = RetractionKind::exponential;
  fits.push_back(fit(pr.model, pr.data, ex).estimate);
  for (std::size_t i = 1; i < fits.size(); ++i) EXPECT_LT(distance(pr.model, fits[0], fits[i]), 1e-6) << i;
}

TEST(FitRiemannian, GradientNormShrinksAtTheEnd) {
  const Problem pr = t_problem(10, 100, 10.0, 300, 51);
  FitOptions opts;
  opts.init = InitKind::identity;
  const FitReport r = fit(pr.model, pr.data, opts);
  ASSERT_TRUE(r.converged);
  ASSERT_GE(r.trace.size(), 2u);
  EXPECT_LT(r.trace.back().grad_norm, r.trace.front().grad_norm * 1e-4);
}

TEST(Fit, ReferenceErrorIsRecorded) {
  const Problem pr = t_problem(4, 10, 5.0, 50, 52);
  FitOptions opts;
  opts.reference = pr.truth;
  const FitReport r = fit(pr.model, pr.data, opts);
  ASSERT_FALSE(r.trace.empty());
  for (const auto& rec : r.trace) EXPECT_TRUE(std::isfinite(rec.reference_error));
  EXPECT_NEAR(r.trace.back().reference_error, fisher_distance_sq(metric_coefficients(pr.model), r.estimate, pr.truth),
              1e-12);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i].seconds, r.trace[i - 1].seconds);
}

TEST(Fit, MaxIterationsTermination) {
  const Problem pr = t_problem(5, 20, 5.0, 50, 53);
  FitOptions opts;
  opts.algorithm = Algorithm::fixed_point;
  opts.init = InitKind::identity;
  opts.max_iterations = 3;
  const FitReport r = fit(pr.model, pr.data, opts);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_EQ(r.termination, Termination::max_iterations);
}

TEST(Fit, AffineEquivariance) {
  const Problem pr = t_problem(4, 12, 3.0, 40, 54);
  std::mt19937_64 orng(54);
  const Matrix a = oracle::random_sym(4, orng) + 3.0 * Matrix::Identity(4, 4);
  std::vector<SpdMat> moved;
  for (const auto& s : pr.data) moved.emplace_back(congruence(a, s.sym()));
  FitOptions opts;
  opts.tolerance = 1e-11;
  const SpdMat g = fit(pr.model, pr.data, opts).estimate;
  const SpdMat h = fit(pr.model, SampleSet(moved), opts).estimate;
  EXPECT_LT(distance(pr.model, SpdMat(congruence(a, g.sym())), h), 1e-7);
}

TEST(Fit, ScaleEquivariance) {
  const Problem pr = t_problem(4, 12, 3.0, 40, 55);
  std::vector<SpdMat> scaled;
  for (const auto& s : pr.data) scaled.emplace_back(s.sym() * 7.0);
  FitOptions opts;
  opts.tolerance = 1e-11;
  const SpdMat g = fit(pr.model, pr.data, opts).estimate;
  const SpdMat h = fit(pr.model, SampleSet(scaled), opts).estimate;
  EXPECT_LT(distance(pr.model, SpdMat(g.sym() * 7.0), h), 1e-7);
  const EWModel w(wishart_generator(), 12, 4);
  EXPECT_LT((wishart_closed_form(SampleSet(scaled), 12).matrix() - 7.0 * wishart_closed_form(pr.data, 12).matrix())
                .norm(),
            1e-12 * wishart_closed_form(SampleSet(scaled), 12).matrix().norm());
}

TEST(Fit, ConsistentWithManySamples) {
  for (bool t_model : {false, true}) {
    Rng rng(56);
    const int p = 10, n = 20;
    const EWModel model = t_model ? EWModel(t_wishart_generator(10.0), n, p) : EWModel(wishart_generator(), n, p);
    const SpdMat truth = random_center(p, 10.0, rng);
    const SampleSet data = sample(model, truth, 10000, rng);
    EXPECT_LT(distance(model, fit(model, data).estimate, truth), 0.1);
  }
}

TEST(FitOptions, Validation) {
  const Problem pr = t_problem(3, 8, 5.0, 10, 57);
  FitOptions bad;
  bad.tolerance = 0.0;
  EXPECT_THROW(fit(pr.model, pr.data, bad), ParameterError);
  FitOptions user;
  user.init = InitKind::user;
  EXPECT_THROW(fit(pr.model, pr.data, user), ParameterError);
  FitOptions ls;
  ls.line_search.contraction = 1.0;
  EXPECT_THROW(fit(pr.model, pr.data, ls), ParameterError);
  ls.line_search.contraction = 0.5;
  ls.line_search.sufficient_decrease = 0.7;
  EXPECT_THROW(fit(pr.model, pr.data, ls), ParameterError);
  EXPECT_EQ(FitOptions{}.resolved_max_iterations(), 500);
  FitOptions fp;
  fp.algorithm = Algorithm::fixed_point;
  EXPECT_EQ(fp.resolved_max_iterations(), 10000);
}

TEST(Fit, RejectsGeneratorViolatingAssumptions) {
  const auto quartic = custom_generator("quartic", [](double t, Dims) { return -0.25 * t * t; },
                                        [](double t, Dims) { return t; },
                                        [](Rng& rng, Dims d) { return std::chi_squared_distribution<double>(d.np())(rng); });
  const EWModel model(quartic, 5, 2);
  const SampleSet data({SpdMat::identity(2), SpdMat(SymMat::identity(2) * 2.0)});
  EXPECT_THROW(fit(model, data), ModelError);
  FitOptions opts;
  opts.check_model = false;
  opts.algorithm = Algorithm::fixed_point;
  opts.max_iterations = 5;
  EXPECT_NO_THROW(fit(model, data, opts));
}

TEST(Fit, CustomGeneratorWarnsWhenSupUnknown) {
  const auto base = t_wishart_generator(5.0);
  const EWModel model(custom_generator("t-clone", base.log_h, base.u, base.q_sampler), 8, 3);
  Rng rng(58);
  const SampleSet data = sample(model, SpdMat::identity(3), 20, rng);
  FitOptions opts;
  opts.algorithm = Algorithm::fixed_point;
  const FitReport r = fit(model, data, opts);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(ParseAlgorithm, Names) {
  EXPECT_EQ(parse_algorithm("fp"), Algorithm::fixed_point);
  EXPECT_EQ(parse_algorithm("rsd"), Algorithm::riemann_sd);
  EXPECT_EQ(parse_algorithm("rcg"), Algorithm::riemann_cg);
  EXPECT_THROW(parse_algorithm("bfgs"), ParameterError);
}
