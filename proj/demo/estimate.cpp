// Draws t-Wishart samples around a random center and recovers the center
// with the fixed point and with Riemannian conjugate gradient.

#include <cstdio>

#include "ewishart/ewishart.hpp"

int main() {
  using namespace ewishart;
  const int p = 10, n = 100;
  const EWModel model(t_wishart_generator(10.0), n, p);
  Rng rng(7);
  const SpdMat truth = random_center(p, 10.0, rng);
  const SampleSet data = sample(model, truth, 300, rng);
  const MetricCoefficients coeff = metric_coefficients(model);

  std::printf("Fisher metric: alpha=%.4f beta=%.6f\n", coeff.alpha(), coeff.beta());
  std::printf("wishart closed form: error %.4f\n",
              fisher_distance_sq(coeff, wishart_closed_form(data, n), truth));
  for (Algorithm a : {Algorithm::fixed_point, Algorithm::riemann_cg}) {
    FitOptions opts;
    opts.algorithm = a;
    const FitReport r = fit(model, data, opts);
    std::printf("%-3s: %5d iterations, %.3f s, error %.4f\n", std::string(to_string(a)).c_str(), r.iterations,
                r.trace.back().seconds, fisher_distance_sq(coeff, r.estimate, truth));
  }
}
