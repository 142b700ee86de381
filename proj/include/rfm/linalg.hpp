#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rfm/errors.hpp"

namespace rfm {

/// Optional Tikhonov shift for correlation solves. `relative` scales the
/// infinity norm of the matrix, so the added diagonal is relative * ||A||_inf.
/// Off (zero) unless requested.
struct Ridge {
  double relative = 0.0;
  bool active() const noexcept { return relative > 0.0; }
};

inline double inf_norm(const Eigen::MatrixXd& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

/// Cholesky factorization of a symmetric positive-definite matrix. Failure
/// raises SingularCorrelation carrying the first non-positive pivot.
class SpdFactor {
 public:
  explicit SpdFactor(const Eigen::MatrixXd& a, Ridge ridge = {}) {
    detail::require(a.rows() == a.cols(), "SpdFactor: matrix must be square");
    if (ridge.active()) {
      Eigen::MatrixXd shifted = a;
      shifted.diagonal().array() += ridge.relative * inf_norm(a);
      factor(shifted);
    } else {
      factor(a);
    }
  }

  Eigen::Index size() const { return llt_.rows(); }

  template <typename Rhs>
  auto solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

  Eigen::MatrixXd inverse() const {
    return llt_.solve(Eigen::MatrixXd::Identity(size(), size()));
  }

  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }

 private:
  void factor(const Eigen::MatrixXd& a) {
    llt_.compute(a);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().allFinite()) {
      return;
    }
    // Re-run the in-place kernel on a copy to recover the failing column.
    Eigen::MatrixXd work = a;
    const Eigen::Index pivot = Eigen::internal::llt_inplace<double, Eigen::Lower>::blocked(work);
    throw SingularCorrelation(pivot < 0 ? 0 : static_cast<std::size_t>(pivot),
                              "correlation matrix is not positive definite");
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace rfm
