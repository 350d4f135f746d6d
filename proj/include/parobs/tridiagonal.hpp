#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "parobs/common.hpp"

namespace parobs {

/// Tridiagonal matrix stored by diagonals. lower(0) and upper(n-1) are
/// unused and kept at zero.
template <typename Scalar>
struct Tridiagonal {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vec lower, diag, upper;

  Tridiagonal() = default;
  explicit Tridiagonal(Eigen::Index n)
      : lower(Vec::Zero(n)), diag(Vec::Zero(n)), upper(Vec::Zero(n)) {}

  Eigen::Index size() const { return diag.size(); }

  static Tridiagonal identity(Eigen::Index n) {
    Tridiagonal t(n);
    t.diag.setOnes();
    return t;
  }

  /// I + c·this.
  Tridiagonal shifted_identity(Scalar c) const {
    Tridiagonal t = *this;
    t.lower *= c;
    t.upper *= c;
    t.diag = Vec::Ones(size()) + c * diag;
    return t;
  }

  Tridiagonal transpose() const {
    const Eigen::Index n = size();
    Tridiagonal t(n);
    t.diag = diag;
    for (Eigen::Index i = 1; i < n; ++i) {
      t.lower(i) = upper(i - 1);
      t.upper(i - 1) = lower(i);
    }
    return t;
  }

  template <typename Derived>
  Vec apply(const Eigen::MatrixBase<Derived>& x) const {
    const Eigen::Index n = size();
    Vec y = diag.cwiseProduct(x);
    if (n > 1) {
      y.head(n - 1) += upper.head(n - 1).cwiseProduct(x.tail(n - 1));
      y.tail(n - 1) += lower.tail(n - 1).cwiseProduct(x.head(n - 1));
    }
    return y;
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const {
    const Eigen::Index n = size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i, i) = diag(i);
      if (i > 0) m(i, i - 1) = lower(i);
      if (i + 1 < n) m(i, i + 1) = upper(i);
    }
    return m;
  }
};

/// Thomas elimination without pivoting, factored once and reused.
template <typename Scalar>
class ThomasSolver {
 public:
  using Vec = typename Tridiagonal<Scalar>::Vec;

  ThomasSolver() = default;

  explicit ThomasSolver(const Tridiagonal<Scalar>& m) : lower_(m.lower) {
    const Eigen::Index n = m.size();
    pivot_.resize(n);
    upper_.resize(n);
    using std::abs;
    const Scalar scale = m.diag.cwiseAbs().maxCoeff() + m.lower.cwiseAbs().maxCoeff() +
                         m.upper.cwiseAbs().maxCoeff();
    const Scalar tiny = scale * Scalar(64) * std::numeric_limits<Scalar>::epsilon();
    Scalar prev_upper = Scalar(0);
    Scalar prev_pivot = Scalar(1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar p = i == 0 ? m.diag(0) : m.diag(i) - m.lower(i) * prev_upper / prev_pivot;
      if (!(abs(p) > tiny)) {
        throw NumericalError("tridiagonal elimination broke down at row " + std::to_string(i) +
                             "; reduce the time step");
      }
      pivot_(i) = p;
      upper_(i) = m.upper(i);
      prev_upper = m.upper(i);
      prev_pivot = p;
    }
  }

  Eigen::Index size() const { return pivot_.size(); }

  template <typename Derived>
  Vec solve(const Eigen::MatrixBase<Derived>& rhs) const {
    const Eigen::Index n = size();
    Vec y(n);
    y(0) = rhs(0);
    for (Eigen::Index i = 1; i < n; ++i) y(i) = rhs(i) - lower_(i) / pivot_(i - 1) * y(i - 1);
    y(n - 1) /= pivot_(n - 1);
    for (Eigen::Index i = n - 2; i >= 0; --i) y(i) = (y(i) - upper_(i) * y(i + 1)) / pivot_(i);
    if (!y.allFinite())
      throw NumericalError("tridiagonal solve produced a non-finite value; reduce the time step");
    return y;
  }

 private:
  Vec lower_, pivot_, upper_;
};

}  // namespace parobs
