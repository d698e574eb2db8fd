#pragma once

// Discriminant analysis and K-means clustering with Elliptical Wishart
// class-conditional models.
//
// Class labels are 1-based throughout (1..Z).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ewishart/error.hpp"
#include "ewishart/estimation.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

using Labels = std::vector<int>;

struct LabeledSampleSet {
  SampleSet samples;
  Labels labels;
  int classes = 0;

  LabeledSampleSet(SampleSet s, Labels y, int z) : samples(std::move(s)), labels(std::move(y)), classes(z) {
    if (z < 1) throw ParameterError("LabeledSampleSet: need at least one class");
    if (labels.size() != samples.size()) throw ParameterError("LabeledSampleSet: one label per sample required");
    for (int y_k : labels) {
      if (y_k < 1 || y_k > z) throw ParameterError("LabeledSampleSet: label out of range 1.." + std::to_string(z));
    }
  }

  std::vector<std::size_t> members(int z) const {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == z) idx.push_back(k);
    return idx;
  }
};

struct EwdaModel {
  EWModel model;
  std::vector<SpdMat> centers;
  std::vector<double> priors;

  EwdaModel(EWModel m, std::vector<SpdMat> c, std::vector<double> pi)
      : model(std::move(m)), centers(std::move(c)), priors(std::move(pi)) {
    if (centers.empty() || centers.size() != priors.size()) {
      throw ParameterError("EwdaModel: need one prior per center");
    }
    double total = 0.0;
    for (double v : priors) {
      if (!(v >= 0.0)) throw ParameterError("EwdaModel: priors must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ParameterError("EwdaModel: priors must sum to 1");
    for (const auto& g : centers) detail::check_model_dim(model, g.dim(), "EwdaModel");
  }

  int classes() const { return static_cast<int>(centers.size()); }
};

/// log pi - (n/2) log det G + log h(tr(G^-1 S)): the class log-posterior up to
/// terms shared by every class.
inline double discriminant(const EWModel& model, const SpdMat& center, double prior, const SpdMat& s) {
  detail::check_model_dim(model, s.dim(), "discriminant");
  const double t = trace_product(center.inverse(), s.matrix());
  return std::log(prior) - 0.5 * model.n() * center.logdet() + model.log_h(t);
}

inline double discriminant(const EwdaModel& m, int z, const SpdMat& s) {
  if (z < 1 || z > m.classes()) throw ParameterError("discriminant: class index out of range");
  const auto i = static_cast<std::size_t>(z - 1);
  return discriminant(m.model, m.centers[i], m.priors[i], s);
}

/// Wishart specialization: log pi - (n/2) log det G - tr(G^-1 S) / 2.
inline double wda_discriminant(double prior, const SpdMat& center, int n, const SpdMat& s) {
  const Matrix x = spd_solve(center, s.matrix());
  return std::log(prior) - 0.5 * n * std::log(center.matrix().determinant()) - 0.5 * x.trace();
}

/// t-Wishart specialization: log pi - (n/2) log det G - ((nu + np)/2) log(1 + tr(G^-1 S)/nu).
inline double t_wda_discriminant(double prior, const SpdMat& center, int n, double nu, const SpdMat& s) {
  const Matrix x = spd_solve(center, s.matrix());
  const double np = static_cast<double>(n) * static_cast<double>(center.dim());
  return std::log(prior) - 0.5 * n * std::log(center.matrix().determinant()) -
         0.5 * (nu + np) * std::log(1.0 + x.trace() / nu);
}

namespace detail {

inline int argmax_class(const EWModel& model, const std::vector<SpdMat>& centers, const std::vector<double>& priors,
                        const SpdMat& s, double* best_value = nullptr) {
  int best = 1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t z = 0; z < centers.size(); ++z) {
    const double v = discriminant(model, centers[z], priors[z], s);
    if (v > best_v) {  // strict: ties keep the lowest index
      best_v = v;
      best = static_cast<int>(z) + 1;
    }
  }
  if (best_value) *best_value = best_v;
  return best;
}

}  // namespace detail

/// Per-class MLEs and empirical class frequencies.
inline EwdaModel ewda_train(const EWModel& model, const LabeledSampleSet& data, const FitOptions& opts = {}) {
  const int z_count = data.classes;
  std::vector<SpdMat> centers;
  std::vector<double> priors;
  const double total = static_cast<double>(data.samples.size());
  for (int z = 1; z <= z_count; ++z) {
    const auto idx = data.members(z);
    if (idx.empty()) throw TrainingError("ewda_train: class " + std::to_string(z) + " has no samples");
    FitReport r = fit(model, data.samples.subset(idx), opts);
    centers.push_back(r.estimate);
    priors.push_back(static_cast<double>(idx.size()) / total);
  }
  // Absorb the rounding of the frequencies into the last class.
  const double head = std::accumulate(priors.begin(), priors.end() - 1, 0.0);
  priors.back() = 1.0 - head;
  return EwdaModel(model, std::move(centers), std::move(priors));
}

/// argmax_z discriminant; ties go to the lowest class index.
inline int ewda_predict(const EwdaModel& m, const SpdMat& s) {
  return detail::argmax_class(m.model, m.centers, m.priors, s);
}

inline Labels ewda_predict(const EwdaModel& m, const SampleSet& data) {
  Labels out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(ewda_predict(m, s));
  return out;
}

/// Sum over samples of their own-class discriminant.
inline double inertia(const EWModel& model, const LabeledSampleSet& labeled, const std::vector<SpdMat>& centers,
                      const std::vector<double>& priors) {
  if (centers.size() != static_cast<std::size_t>(labeled.classes) || priors.size() != centers.size()) {
    throw ParameterError("inertia: need one center and one prior per class");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < labeled.samples.size(); ++k) {
    const auto z = static_cast<std::size_t>(labeled.labels[k] - 1);
    total += discriminant(model, centers[z], priors[z], labeled.samples[k]);
  }
  return total;
}

struct KMeansOptions {
  int inits = 10;                 // M
  double label_tolerance = 1e-3;  // stop when the fraction of changed labels drops below this
  int max_sweeps = 100;
  FitOptions fit;
};

struct ClusteringResult {
  Labels labels;
  std::vector<SpdMat> centers;
  double inertia = 0.0;
  int chosen_init = 0;  // 1-based
  std::vector<int> iterations_per_init;
  std::vector<double> inertia_per_init;
};

/// Elliptical Wishart K-means: random data points as initial centers,
/// alternating discriminant assignment and per-cluster MLE, best of M
/// initializations by inertia. Priors stay uniform.
inline ClusteringResult ew_kmeans(const EWModel& model, const SampleSet& data, int clusters, const KMeansOptions& opts,
                                  Rng& rng) {
  const std::size_t k_count = data.size();
  if (clusters < 1) throw ParameterError("ew_kmeans: need at least one cluster");
  if (static_cast<std::size_t>(clusters) > k_count) throw ParameterError("ew_kmeans: more clusters than samples");
  if (opts.inits < 1 || opts.max_sweeps < 1) throw ParameterError("ew_kmeans: inits and max_sweeps must be >= 1");
  detail::check_model_dim(model, data.dim(), "ew_kmeans");
  const auto z_count = static_cast<std::size_t>(clusters);
  const std::vector<double> priors(z_count, 1.0 / static_cast<double>(clusters));

  // Draw every initialization up front so the result only depends on the seed.
  std::vector<std::size_t> all(k_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> seeds(static_cast<std::size_t>(opts.inits));
  for (auto& s : seeds) {
    std::vector<std::size_t> pool = all;
    for (std::size_t i = 0; i < z_count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, k_count - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    s.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(z_count));
  }

  auto assign = [&](const std::vector<SpdMat>& centers, Labels& labels, std::vector<double>& own) {
    for (std::size_t k = 0; k < k_count; ++k) labels[k] = detail::argmax_class(model, centers, priors, data[k], &own[k]);
  };

  ClusteringResult best;
  best.inertia = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < seeds.size(); ++m) {
    std::vector<SpdMat> centers;
    for (std::size_t k : seeds[m]) centers.push_back(data[k]);
    Labels labels(k_count);
    std::vector<double> own(k_count);
    assign(centers, labels, own);

    int sweep = 0;
    while (sweep < opts.max_sweeps) {
      ++sweep;
      for (std::size_t z = 0; z < z_count; ++z) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < k_count; ++k)
          if (labels[k] == static_cast<int>(z) + 1) idx.push_back(k);
        if (idx.empty()) {
          // Reseed from the sample worst explained by its current cluster.
          const auto far = static_cast<std::size_t>(std::min_element(own.begin(), own.end()) - own.begin());
          centers[z] = data[far];
          own[far] = std::numeric_limits<double>::infinity();
          continue;
        }
        FitOptions fo = opts.fit;
        fo.init = InitKind::user;
        fo.user_init = centers[z];
        centers[z] = fit(model, data.subset(idx), fo).estimate;
      }
      Labels next(k_count);
      assign(centers, next, own);
      std::size_t changed = 0;
      for (std::size_t k = 0; k < k_count; ++k) changed += next[k] != labels[k];
      labels = std::move(next);
      if (static_cast<double>(changed) / static_cast<double>(k_count) < opts.label_tolerance) break;
    }

    const LabeledSampleSet labeled(data, labels, clusters);
    const double value = inertia(model, labeled, centers, priors);
    best.iterations_per_init.push_back(sweep);
    best.inertia_per_init.push_back(value);
    if (value > best.inertia) {
      best.inertia = value;
      best.labels = labels;
      best.centers = centers;
      best.chosen_init = static_cast<int>(m) + 1;
    }
  }
  return best;
}

struct Alignment {
  std::vector<int> permutation;  // permutation[c - 1] = truth label matched to predicted label c
  Labels aligned;
  double accuracy = 0.0;
  double miou = 0.0;
};

namespace detail {

// Minimum-cost perfect assignment on a square cost matrix (Hungarian
// algorithm with potentials). Returns row -> column.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

/// Relabels `predicted` by the permutation maximizing agreement with `truth`,
/// then reports overall accuracy and mean intersection-over-union.
inline Alignment align_labels(const Labels& predicted, const Labels& truth, int classes) {
  if (predicted.size() != truth.size()) throw ParameterError("align_labels: length mismatch");
  if (classes < 1) throw ParameterError("align_labels: need at least one class");
  const auto z = static_cast<std::size_t>(classes);
  std::vector<std::vector<double>> confusion(z, std::vector<double>(z, 0.0));
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (predicted[k] < 1 || predicted[k] > classes || truth[k] < 1 || truth[k] > classes) {
      throw ParameterError("align_labels: label out of range");
    }
    confusion[static_cast<std::size_t>(predicted[k] - 1)][static_cast<std::size_t>(truth[k] - 1)] += 1.0;
  }
  std::vector<std::vector<double>> cost = confusion;
  for (auto& row : cost)
    for (double& c : row) c = -c;
  const std::vector<int> match = detail::hungarian(cost);

  Alignment out;
  out.permutation.resize(z);
  for (std::size_t c = 0; c < z; ++c) out.permutation[c] = match[c] + 1;
  out.aligned.resize(truth.size());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    out.aligned[k] = out.permutation[static_cast<std::size_t>(predicted[k] - 1)];
    hits += out.aligned[k] == truth[k];
  }
  out.accuracy = truth.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(truth.size());

  double iou_sum = 0.0;
  int present = 0;
  for (int c = 1; c <= classes; ++c) {
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const bool a = out.aligned[k] == c;
      const bool b = truth[k] == c;
      inter += a && b;
      uni += a || b;
    }
    if (uni == 0) continue;  // class absent from both labelings
    iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++present;
  }
  out.miou = present == 0 ? 1.0 : iou_sum / present;
  return out;
}

}  // namespace ewishart
