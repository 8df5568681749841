#pragma once

// Dense solves shared by the model and reaction layers.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace nhaff {

/// Raised when S(q) loses rank (S·A⁻¹·Sᵀ numerically singular).
class RankDropError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_vector(const Eigen::VectorXd& v);

/// Factorization of the constraint Gram matrix G = S·A⁻¹·Sᵀ.
///
/// Cholesky first; if it fails or a pivot falls below 1e-12·max(diag G),
/// a full SVD decides. Singular values under the same threshold raise
/// RankDropError.
class ConstraintGram {
 public:
  ConstraintGram(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Ainv);

  const Eigen::MatrixXd& gram() const noexcept { return G_; }
  const Eigen::MatrixXd& ainv_st() const noexcept { return AinvSt_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

 private:
  Eigen::MatrixXd G_;
  Eigen::MatrixXd AinvSt_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_;
  bool use_svd_ = false;
};

/// Orthonormal basis of the null space of `M` (columns), from a full SVD.
/// `expected_rank` rows are required to be independent: the routine throws
/// RankDropError when fewer than that many singular values exceed
/// `rel_tol`·max(1, σ_max).
Eigen::MatrixXd null_space(const Eigen::MatrixXd& M, Eigen::Index expected_rank,
                           double rel_tol = 1e-12);

}  // namespace nhaff
