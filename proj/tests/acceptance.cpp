// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance --only N   run criterion N

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ewishart/ewishart.hpp"
#include "oracles.hpp"

using namespace ewishart;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double fisher_distance(const EWModel& model, const SpdMat& a, const SpdMat& b) {
  return std::sqrt(fisher_distance_sq(metric_coefficients(model), a, b));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// 1. FP and Riemannian fits of the Wishart model land on the closed form.
Outcome wishart_oracle() {
  Rng rng(101);
  const int ps[] = {2, 5, 10};
  const int ks[] = {1, 10, 100};
  double worst = 0.0;
  int instances = 0;
  for (int i = 0; i < 50; ++i) {
    const int p = ps[i % 3];
    const int k = ks[(i / 3) % 3];
    const EWModel model(wishart_generator(), 2 * p, p);
    const SpdMat truth = random_center(p, 10.0, rng);
    const SampleSet data = sample(model, truth, static_cast<std::size_t>(k), rng);
    const SpdMat closed = wishart_closed_form(data, model.n());
    FitOptions opts;
    opts.init = InitKind::identity;
    opts.tolerance = 1e-10;
    for (Algorithm a : {Algorithm::fixed_point, Algorithm::riemann_sd, Algorithm::riemann_cg}) {
      opts.algorithm = a;
      const FitReport r = fit(model, data, opts);
      worst = std::max(worst, fisher_distance(model, r.estimate, closed));
    }
    ++instances;
  }
  return {worst <= 1e-8, std::to_string(instances) + " instances x {fp, rsd, rcg}, max Fisher distance to closed form " +
                             fmt("%.3g", worst) + " (bound 1e-8)"};
}

// 2. Fixed point and RCG agree; RCG needs fewer iterations.
Outcome cross_algorithm() {
  const int p = 10, n = 100, k = 300;
  const EWModel model(t_wishart_generator(10.0), n, p);
  double worst = 0.0;
  int fewer = 0;
  int max_rcg = 0;
  std::vector<double> fp_iters;
  for (int r = 0; r < 20; ++r) {
    Rng rng = repetition_stream(2024, 2, static_cast<std::uint64_t>(r));
    const SpdMat truth = random_center(p, 10.0, rng);
    const SampleSet data = sample(model, truth, k, rng);
    FitOptions opts;
    opts.tolerance = 1e-10;
    opts.max_iterations = 100000;
    opts.algorithm = Algorithm::fixed_point;
    const FitReport fp = fit(model, data, opts);
    opts.algorithm = Algorithm::riemann_cg;
    const FitReport cg = fit(model, data, opts);
    worst = std::max(worst, fisher_distance(model, fp.estimate, cg.estimate));
    fewer += cg.iterations < fp.iterations;
    max_rcg = std::max(max_rcg, cg.iterations);
    fp_iters.push_back(fp.iterations);
  }
  const bool pass = worst <= 1e-6 && fewer >= 18 && max_rcg <= 50;
  return {pass, "max distance fp/rcg " + fmt("%.3g", worst) + " (bound 1e-6); rcg fewer iterations in " +
                    std::to_string(fewer) + "/20 (need 18); max rcg iterations " + std::to_string(max_rcg) +
                    " (bound 50); median fp iterations " + fmt("%.0f", median(fp_iters))};
}

// 3. FP iterations grow with n; RCG's stay put.
Outcome iteration_growth() {
  ExperimentConfig c;
  c.p = 10;
  c.K = 300;
  c.nu = 10.0;
  c.n = 100;
  c.n_grid = {100, 1000};
  c.repetitions = 20;  // --fast
  c.seed = 3;
  c.fit.max_iterations = 100000;
  const auto rows = summarize(run_convergence_study(c));
  double fp100 = 0, fp1000 = 0, cg100 = 0, cg1000 = 0;
  for (const auto& row : rows) {
    if (row.name == "fp") (row.n == 100 ? fp100 : fp1000) = row.median_iters;
    if (row.name == "rcg") (row.n == 100 ? cg100 : cg1000) = row.median_iters;
  }
  const double fp_ratio = fp1000 / fp100;
  const double cg_ratio = std::max(cg1000 / cg100, cg100 / cg1000);
  return {fp_ratio >= 2.0 && cg_ratio < 2.0,
          "median fp iterations " + fmt("%.0f", fp100) + " -> " + fmt("%.0f", fp1000) + " (ratio " +
              fmt("%.2f", fp_ratio) + ", need >= 2); median rcg " + fmt("%.1f", cg100) + " -> " + fmt("%.1f", cg1000) +
              " (change " + fmt("%.2f", cg_ratio) + "x, need < 2)"};
}

// 4. Error vs K at nu = 10.
Outcome error_study() {
  ExperimentConfig c;
  c.p = 10;
  c.n = 100;
  c.nu = 10.0;
  c.repetitions = 20;
  c.seed = 4;
  c.K_grid = {30, 100, 300};
  const auto rows = summarize(run_error_study(c, c.K_grid));
  bool below = true;
  std::string detail;
  double t300 = 0.0;
  for (int k : c.K_grid) {
    double w = 0, t = 0;
    for (const auto& row : rows) {
      if (row.K != k) continue;
      (row.name == "wishart" ? w : t) = row.mean_err;
    }
    below = below && t < w;
    if (k == 300) t300 = t;
    detail += "K=" + std::to_string(k) + ": t-mle " + fmt("%.4f", t) + " vs wishart " + fmt("%.4f", w) + "; ";
  }
  const double ref = crb_reference(10, 300, metric_coefficients(c.ew_model()));
  const double ratio = t300 / ref;
  return {below && ratio >= 1.0 && ratio <= 2.0,
          detail + "t-mle / reference at K=300 = " + fmt("%.3f", ratio) + " (need [1, 2])"};
}

// 5. Directional derivatives against Richardson-extrapolated differences.
Outcome gradient_check() {
  std::mt19937_64 rng(505);
  Rng srng(505);
  double worst_e = 0.0, worst_r = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int p = 2 + i % 5;
    const int n = p + 1 + (i * 7) % 20;
    const std::size_t k = 1 + static_cast<std::size_t>((i * 13) % 30);
    const EWModel model = i % 2 ? EWModel(t_wishart_generator(1.0 + (i % 9) * 2.5), n, p)
                                : EWModel(wishart_generator(), n, p);
    const SampleSet data = sample(model, SpdMat(oracle::random_spd(p, rng)), k, srng);
    const SpdMat g(oracle::random_spd(p, rng));
    const SymMat xi(oracle::random_sym(p, rng));
    auto cost = [&](double t) { return neg_log_likelihood(model, SpdMat(SymMat(g.matrix() + t * xi.matrix())), data); };
    const double h = 1e-3 / (xi.norm() * g.inverse().norm());
    const double d1 = (cost(h) - cost(-h)) / (2 * h);
    const double d2 = (cost(2 * h) - cost(-2 * h)) / (4 * h);
    const double fd = (4 * d1 - d2) / 3;
    const SymMat egrad = euclidean_gradient(model, g, data);
    const double e = trace_product(egrad.matrix(), xi.matrix());
    const MetricCoefficients coeff = metric_coefficients(model);
    const double rdir = metric_inner(coeff, g, riemannian_gradient(model, coeff, g, data), xi);
    const double scale = std::max(std::abs(fd), 1e-12);
    worst_e = std::max(worst_e, std::abs(e - fd) / scale);
    worst_r = std::max(worst_r, std::abs(rdir - fd) / scale);
  }
  return {worst_e <= 1e-6 && worst_r <= 1e-6, "100 instances; max relative error tr(egrad xi) " + fmt("%.3g", worst_e) +
                                                  ", <rgrad, xi> " + fmt("%.3g", worst_r) + " (bound 1e-6)"};
}

// 6. Geometry identities.
Outcome geometry_suite() {
  std::mt19937_64 rng(606);
  double rt = 0, geo = 0, trans = 0, affine = 0;
  double ratio_lo = INFINITY, ratio_hi = -INFINITY;
  const int draws = 200;
  for (int i = 0; i < draws; ++i) {
    const int p = 2 + i % 6;
    const MetricCoefficients coeff(0.5 + (i % 4), -0.05 * (i % 3), p);
    const SpdMat g(oracle::random_spd(p, rng));
    const SpdMat s(oracle::random_spd(p, rng));
    const SymMat xi(oracle::random_sym(p, rng) * 0.5);

    const SymMat back = log_map(g, exp_map(g, xi));
    const SpdMat again = exp_map(g, log_map(g, s));
    rt = std::max({rt, (back.matrix() - xi.matrix()).norm() / xi.norm(),
                   (again.matrix() - s.matrix()).norm() / s.matrix().norm()});

    const double t = 0.1 + 0.9 * (i % 10) / 9.0;
    const double d2 = fisher_distance_sq(coeff, g, geodesic(g, xi, t));
    const double want = t * t * metric_inner(coeff, g, xi, xi);
    geo = std::max(geo, std::abs(d2 - want) / want);

    // Retraction vs exponential: error ~ h^3, so halving h divides it by ~8.
    const SymMat unit = xi * (1.0 / congruence(g.inv_sqrt(), xi).norm());
    auto err = [&](double h) {
      const Matrix diff = retract(g, unit * h).matrix() - exp_map(g, unit * h).matrix();
      return congruence(g.inv_sqrt(), SymMat(diff)).norm();
    };
    const double ratio = err(0.02) / err(0.01);
    ratio_lo = std::min(ratio_lo, ratio);
    ratio_hi = std::max(ratio_hi, ratio);

    const SymMat eta(oracle::random_sym(p, rng));
    const SymMat moved = vector_transport(g, s, eta);
    const double before = metric_inner(coeff, g, eta, eta);
    trans = std::max(trans, std::abs(metric_inner(coeff, s, moved, moved) - before) / before);

    const Matrix a = oracle::random_spd(p, rng) + 0.3 * oracle::random_sym(p, rng);
    const double d_ref = fisher_distance_sq(coeff, g, s);
    const double d_moved = fisher_distance_sq(coeff, SpdMat(congruence(a, g.sym())), SpdMat(congruence(a, s.sym())));
    affine = std::max(affine, std::abs(d_moved - d_ref) / d_ref);
  }
  const bool pass = rt <= 1e-8 && geo <= 1e-8 && ratio_lo >= 6 && ratio_hi <= 10 && trans <= 1e-8 && affine <= 1e-8;
  return {pass, std::to_string(draws) + " draws each; exp/log round trip " + fmt("%.2g", rt) + ", geodesic length " +
                    fmt("%.2g", geo) + ", retraction ratio [" + fmt("%.3f", ratio_lo) + ", " + fmt("%.3f", ratio_hi) +
                    "], transport isometry " + fmt("%.2g", trans) + ", affine invariance " + fmt("%.2g", affine)};
}

// 7. Sampler: mean of tr(G^-1 S) and KS of Q against the normalized radial law.
Outcome sampler_fidelity() {
  const int p = 3, n = 10;
  const std::size_t draws = 100000;
  Rng rng(707);
  std::mt19937_64 orng(707);
  const SpdMat g(oracle::random_spd(p, orng));
  std::string detail;
  bool pass = true;
  for (bool t_model : {false, true}) {
    const double nu = 10.0;
    const EWModel model = t_model ? EWModel(t_wishart_generator(nu), n, p) : EWModel(wishart_generator(), n, p);
    const SampleSet data = sample(model, g, draws, rng);
    std::vector<double> q;
    q.reserve(draws);
    double sum = 0.0;
    for (const auto& s : data) {
      q.push_back(trace_product(g.inverse(), s.matrix()));
      sum += q.back();
    }
    const double np = n * p;
    const double mean = sum / static_cast<double>(draws);
    const double want = t_model ? np * nu / (nu - 2) : np;
    const double rel = std::abs(mean - want) / want;
    const oracle::TabulatedCdf cdf([&](double t) { return model.log_h(t) + (np / 2 - 1) * std::log(t); }, 1e-6,
                                   t_model ? 1e6 : 1e3);
    const double ks = oracle::ks_statistic(q, cdf);
    pass = pass && rel <= 0.02 && ks < 0.01;
    detail += std::string(t_model ? "t-wishart" : "wishart") + ": mean rel. error " + fmt("%.4f", rel) + ", KS " +
              fmt("%.4f", ks) + "; ";
  }
  return {pass, detail + "bounds 0.02 / 0.01"};
}

// 8. Geodesic convexity of the t-Wishart cost.
Outcome geodesic_convexity() {
  std::mt19937_64 rng(808);
  Rng srng(808);
  double worst = -INFINITY;
  for (int i = 0; i < 200; ++i) {
    const int p = 2 + i % 4;
    const int n = p + 2 + i % 7;
    const EWModel model(t_wishart_generator(1.0 + i % 6), n, p);
    const SampleSet data = sample(model, SpdMat(oracle::random_spd(p, rng)), 20, srng);
    const Matrix g = oracle::random_spd(p, rng, 1.0);
    const Matrix h = oracle::random_spd(p, rng, 1.0);
    const double t = (i % 19 + 1) / 20.0;
    const Matrix gh = oracle::sqrtm_db(g);
    const Matrix gih = gh.inverse();
    const Matrix inner = gih * h * gih;
    const Matrix mid = gh * oracle::spectral(inner, [t](double v) { return std::pow(v, t); }) * gh;
    const double lhs = neg_log_likelihood(model, SpdMat(mid), data);
    const double rhs = (1 - t) * neg_log_likelihood(model, SpdMat(g), data) + t * neg_log_likelihood(model, SpdMat(h), data);
    worst = std::max(worst, lhs - rhs);
  }
  return {worst <= 1e-9, "200 triples; max L(gamma(t)) - chord " + fmt("%.3g", worst) + " (bound 1e-9)"};
}

// 9. Random initializations agree.
Outcome uniqueness() {
  Rng rng(909);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const int p = 4 + inst % 3;
    const EWModel model(t_wishart_generator(3.0 + inst), 3 * p, p);
    const SampleSet data = sample(model, random_center(p, 10.0, rng), 60, rng);
    std::vector<SpdMat> fits;
    std::normal_distribution<double> scale(0.0, 1.5);
    for (int m = 0; m < 10; ++m) {
      FitOptions opts;
      opts.init = InitKind::user;
      opts.user_init = SpdMat(SymMat(random_center(p, 100.0, rng).matrix() * std::exp(scale(rng))));
      opts.tolerance = 1e-10;
      opts.max_iterations = 100000;
      opts.algorithm = m % 3 == 0 ? Algorithm::fixed_point : (m % 3 == 1 ? Algorithm::riemann_cg : Algorithm::riemann_sd);
      fits.push_back(fit(model, data, opts).estimate);
    }
    for (std::size_t a = 0; a < fits.size(); ++a)
      for (std::size_t b = a + 1; b < fits.size(); ++b) worst = std::max(worst, fisher_distance(model, fits[a], fits[b]));
  }
  return {worst <= 1e-6, "10 instances x 10 starts (fp/rcg/rsd); max pairwise Fisher distance " + fmt("%.3g", worst) +
                             " (bound 1e-6)"};
}

// 10. Discriminant analysis, clustering and label alignment.
Outcome learning() {
  const int p = 5, n = 50;
  const EWModel model(t_wishart_generator(10.0), n, p);
  Rng rng(1010);
  Vector d = Vector::Ones(p);
  d(0) = 4.0;
  const SpdMat g1 = SpdMat::identity(p);
  const SpdMat g2(SymMat::diagonal(d));

  auto two_class = [&](std::size_t per_class, const SpdMat& a, const SpdMat& b) {
    std::vector<SpdMat> all;
    Labels y;
    for (const auto& [center, label] : {std::pair{a, 1}, std::pair{b, 2}}) {
      const SampleSet s = sample(model, center, per_class, rng);
      all.insert(all.end(), s.begin(), s.end());
      y.insert(y.end(), per_class, label);
    }
    return LabeledSampleSet(SampleSet(std::move(all)), y, 2);
  };
  const LabeledSampleSet train = two_class(200, g1, g2);
  const LabeledSampleSet test = two_class(200, g1, g2);
  const EwdaModel ewda = ewda_train(model, train);
  const Labels pred = ewda_predict(ewda, test.samples);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == test.labels[k];
  const double ewda_acc = static_cast<double>(hits) / static_cast<double>(pred.size());

  const LabeledSampleSet blobs = two_class(100, g1, SpdMat(SymMat::identity(p) * 8.0));
  KMeansOptions ko;
  ko.inits = 5;
  const ClusteringResult cr = ew_kmeans(model, blobs.samples, 2, ko, rng);
  const double km_acc = align_labels(cr.labels, blobs.labels, 2).accuracy;

  const Alignment ex = align_labels({2, 2, 2, 1}, {1, 1, 2, 2}, 2);
  const bool ex_ok = std::abs(ex.accuracy - 0.75) < 1e-15 && std::abs(ex.miou - 7.0 / 12.0) < 1e-15;
  return {ewda_acc >= 0.95 && km_acc >= 0.95 && ex_ok,
          "EWDA test accuracy " + fmt("%.4f", ewda_acc) + ", K-means aligned accuracy " + fmt("%.4f", km_acc) +
              " (need 0.95); alignment example acc " + fmt("%.4f", ex.accuracy) + " mIoU " + fmt("%.6f", ex.miou)};
}

// 11. One fixed-point step vs the Euclidean-retraction step along the
// affine-invariant gradient with step size 1/(nK).
Outcome fixed_point_special_case() {
  std::mt19937_64 rng(1111);
  Rng srng(1111);
  double worst = 0.0, worst_doubled = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int p = 2 + i % 5;
    const int n = p + 3 + i;
    const EWModel model(t_wishart_generator(2.0 + i), n, p);
    const SampleSet data = sample(model, SpdMat(oracle::random_spd(p, rng)), 15, srng);
    const SpdMat g(oracle::random_spd(p, rng));
    const double nk = static_cast<double>(n) * 15.0;
    const Matrix fp = fixed_point_step(model, g, data).matrix();
    const SymMat rgrad = egrad_to_rgrad(MetricCoefficients::affine_invariant(p), g, euclidean_gradient(model, g, data));
    const Matrix step = g.matrix() - rgrad.matrix() / nk;
    const Matrix doubled = g.matrix() - 2.0 * rgrad.matrix() / nk;
    worst = std::max(worst, (fp - step).norm() / fp.norm());
    worst_doubled = std::max(worst_doubled, (fp - doubled).norm() / fp.norm());
  }
  return {worst <= 1e-12, "20 instances; max relative difference with step 1/(nK): " + fmt("%.3g", worst) +
                              " (bound 1e-12); with step 2/(nK): " + fmt("%.3g", worst_doubled)};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"wishart oracle equivalence", 60, wishart_oracle},
    {"cross-algorithm agreement", 600, cross_algorithm},
    {"fixed-point iteration growth with n", 900, iteration_growth},
    {"error vs K at nu=10", 900, error_study},
    {"gradient correctness", 60, gradient_check},
    {"geometry identity suite", 60, geometry_suite},
    {"sampler fidelity", 120, sampler_fidelity},
    {"geodesic convexity", 60, geodesic_convexity},
    {"uniqueness from random starts", 300, uniqueness},
    {"learning desk-scale", 300, learning},
    {"fixed point as a gradient step", 10, fixed_point_special_case},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const int count = static_cast<int>(std::size(kCriteria));
  if (only < 0 || only > count) {
    std::fprintf(stderr, "--only expects 1..%d\n", count);
    return 2;
  }
  int failed = 0;
  for (int i = 1; i <= count; ++i) {
    if (only && i != only) continue;
    const Criterion& c = kCriteria[i - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %2d %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", i, c.name, o.detail.c_str(), secs,
                c.budget_seconds);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
