#pragma once

// Dense symmetric and SPD matrix primitives.
//
// SymMat is a symmetric matrix (symmetrized on construction). SpdMat is a
// SymMat that passed a Cholesky check; it lazily caches its
// eigendecomposition, inverse and square roots. Caches are shared between
// copies and filled at most once, so SpdMat values can be read from several
// threads at once.
//
// Every matrix function (exp, log, sqrt) goes through the symmetric
// eigendecomposition.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "ewishart/error.hpp"

namespace ewishart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Default relative tolerance on lambda_min / lambda_max for validate_spd.
inline constexpr double kSpdTolerance = 1e-12;

/// (m + m^T) / 2
inline Matrix sym_part(const Matrix& m) { return 0.5 * (m + m.transpose()); }

class SymMat {
 public:
  SymMat() = default;

  /// Symmetrizes `m`. Throws NumericInputError when `m` is not square or empty.
  explicit SymMat(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw NumericInputError("SymMat: expected a non-empty square matrix, got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    m_ = sym_part(m);
  }

  static SymMat zero(Index p) { return SymMat(Matrix::Zero(p, p)); }
  static SymMat identity(Index p) { return SymMat(Matrix::Identity(p, p)); }
  static SymMat diagonal(const Vector& d) { return SymMat(Matrix(d.asDiagonal())); }

  const Matrix& matrix() const { return m_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }
  double norm() const { return m_.norm(); }
  bool all_finite() const { return m_.allFinite(); }

  SymMat operator+(const SymMat& o) const { return from_symmetric(m_ + o.m_); }
  SymMat operator-(const SymMat& o) const { return from_symmetric(m_ - o.m_); }
  SymMat operator-() const { return from_symmetric(-m_); }
  SymMat operator*(double c) const { return from_symmetric(c * m_); }
  friend SymMat operator*(double c, const SymMat& s) { return s * c; }

 private:
  // Sums and scalings of symmetric matrices are exactly symmetric.
  static SymMat from_symmetric(Matrix m) {
    SymMat s;
    s.m_ = std::move(m);
    return s;
  }

  Matrix m_;
};

/// Eigenvalues ascending; eigenvectors in the columns of an orthogonal matrix.
struct SymEig {
  Vector values;
  Matrix vectors;

  /// V diag(f(lambda)) V^T
  Matrix apply(const std::function<double(double)>& f) const {
    Vector fv = values.unaryExpr(f);
    return sym_part(vectors * fv.asDiagonal() * vectors.transpose());
  }
};

/// Symmetric eigendecomposition (tridiagonalization + implicit QR).
inline SymEig sym_eig(const SymMat& m) {
  if (!m.all_finite()) throw NumericInputError("sym_eig: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
  if (solver.info() != Eigen::Success) {
    throw NumericInputError("sym_eig: eigensolver did not converge");
  }
  return SymEig{solver.eigenvalues(), solver.eigenvectors()};
}

namespace detail {

struct SpdCache {
  std::once_flag llt_once;
  std::optional<Eigen::LLT<Matrix>> llt;
  std::once_flag eig_once;
  std::optional<SymEig> eig;
  std::once_flag inverse_once;
  Matrix inverse;
  std::once_flag sqrt_once;
  Matrix sqrt;
  Matrix inv_sqrt;
};

}  // namespace detail

class SpdMat {
 public:
  SpdMat() = default;

  /// Throws SingularityError when the Cholesky factorization breaks down.
  explicit SpdMat(const SymMat& s) : base_(s), cache_(std::make_shared<detail::SpdCache>()) {
    if (!s.all_finite()) throw NumericInputError("SpdMat: non-finite entries");
    if (llt().info() != Eigen::Success) {
      throw SingularityError("SpdMat: matrix is not positive definite");
    }
  }
  explicit SpdMat(const Matrix& m) : SpdMat(SymMat(m)) {}

  static SpdMat identity(Index p) { return SpdMat(SymMat::identity(p)); }

  /// Builds V diag(values) V^T and seeds the eigendecomposition cache.
  static SpdMat from_spectrum(const Vector& values, const Matrix& vectors) {
    if (!values.allFinite() || values.minCoeff() <= 0.0) {
      throw SingularityError("SpdMat: non-positive eigenvalue in spectrum");
    }
    SpdMat out;
    out.base_ = SymMat(vectors * values.asDiagonal() * vectors.transpose());
    out.cache_ = std::make_shared<detail::SpdCache>();
    std::call_once(out.cache_->eig_once, [&] { out.cache_->eig = SymEig{values, vectors}; });
    return out;
  }

  const SymMat& sym() const { return base_; }
  const Matrix& matrix() const { return base_.matrix(); }
  Index dim() const { return base_.dim(); }
  double operator()(Index i, Index j) const { return base_(i, j); }
  double trace() const { return base_.trace(); }

  const Eigen::LLT<Matrix>& llt() const {
    std::call_once(cache_->llt_once, [this] { cache_->llt.emplace(base_.matrix()); });
    return *cache_->llt;
  }

  const SymEig& eig() const {
    std::call_once(cache_->eig_once, [this] { cache_->eig = sym_eig(base_); });
    return *cache_->eig;
  }

  const Matrix& inverse() const {
    std::call_once(cache_->inverse_once, [this] {
      cache_->inverse = sym_part(llt().solve(Matrix::Identity(dim(), dim())));
    });
    return cache_->inverse;
  }

  /// G^{1/2}
  const Matrix& sqrt() const {
    fill_roots();
    return cache_->sqrt;
  }

  /// G^{-1/2}
  const Matrix& inv_sqrt() const {
    fill_roots();
    return cache_->inv_sqrt;
  }

  /// log det, from the Cholesky diagonal.
  double logdet() const {
    const Matrix& l = llt().matrixLLT();
    return 2.0 * l.diagonal().array().log().sum();
  }

 private:
  void fill_roots() const {
    std::call_once(cache_->sqrt_once, [this] {
      const SymEig& e = eig();
      if (e.values.minCoeff() <= 0.0) throw SingularityError("SpdMat: non-positive eigenvalue");
      cache_->sqrt = e.apply([](double x) { return std::sqrt(x); });
      cache_->inv_sqrt = e.apply([](double x) { return 1.0 / std::sqrt(x); });
    });
  }

  SymMat base_;
  std::shared_ptr<detail::SpdCache> cache_;
};

/// true iff lambda_min > tol * lambda_max (and lambda_max > 0).
inline bool validate_spd(const SymMat& m, double tol = kSpdTolerance) {
  if (!m.all_finite()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) return false;
  const Vector& v = solver.eigenvalues();
  const double hi = v.maxCoeff();
  return hi > 0.0 && v.minCoeff() > tol * hi;
}

/// Spectral exponential of a symmetric matrix.
inline SpdMat matrix_exp_sym(const SymMat& x) {
  SymEig e = sym_eig(x);
  static const double kMaxLog = std::log(std::numeric_limits<double>::max());
  if (e.values.maxCoeff() > kMaxLog) throw RangeError("matrix_exp_sym: overflow");
  Vector ev = e.values.array().exp();
  if (ev.minCoeff() <= 0.0) throw RangeError("matrix_exp_sym: underflow to a singular matrix");
  return SpdMat::from_spectrum(ev, e.vectors);
}

/// Principal logarithm of an SPD matrix.
inline SymMat matrix_log_spd(const SpdMat& s) {
  const SymEig& e = s.eig();
  if (e.values.minCoeff() <= 1e-300) throw SingularityError("matrix_log_spd: singular matrix");
  return SymMat(e.apply([](double v) { return std::log(v); }));
}

inline SpdMat spd_sqrt(const SpdMat& s) {
  const SymEig& e = s.eig();
  if (e.values.minCoeff() <= 1e-300) throw SingularityError("spd_sqrt: singular matrix");
  return SpdMat::from_spectrum(e.values.array().sqrt(), e.vectors);
}

inline SpdMat spd_inv_sqrt(const SpdMat& s) {
  const SymEig& e = s.eig();
  if (e.values.minCoeff() <= 1e-300) throw SingularityError("spd_inv_sqrt: singular matrix");
  return SpdMat::from_spectrum(e.values.array().rsqrt(), e.vectors);
}

/// Solves s * x = b through the cached Cholesky factor.
inline Matrix spd_solve(const SpdMat& s, const Matrix& b) {
  if (b.rows() != s.dim()) throw NumericInputError("spd_solve: row count mismatch");
  const auto& llt = s.llt();
  if (llt.info() != Eigen::Success) throw SingularityError("spd_solve: Cholesky breakdown");
  return llt.solve(b);
}

/// A x A^T, symmetrized.
inline SymMat congruence(const Matrix& a, const SymMat& x) {
  return SymMat(a * x.matrix() * a.transpose());
}

/// tr(A B) for symmetric A, B without forming the product.
inline double trace_product(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

}  // namespace ewishart
