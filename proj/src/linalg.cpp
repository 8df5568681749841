#include "nhaff/linalg.hpp"

#include <cstdio>

namespace nhaff {

std::string format_vector(const Eigen::VectorXd& v) {
  std::string out = "(";
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g", v[i]);
    out += (i ? ", " : "");
    out += buf;
  }
  return out + ")";
}

ConstraintGram::ConstraintGram(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Ainv)
    : AinvSt_(Ainv * S.transpose()) {
  G_ = S * AinvSt_;
  G_ = 0.5 * (G_ + G_.transpose()).eval();
  const double threshold = 1e-12 * G_.diagonal().cwiseAbs().maxCoeff();
  llt_.compute(G_);
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    const auto d = llt_.matrixLLT().diagonal();
    ok = (d.array().square() > threshold).all();
  }
  if (!ok) {
    svd_.compute(G_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd_.singularValues();
    if (sv.size() == 0 || !(sv[sv.size() - 1] > threshold) || !(threshold > 0.0))
      throw RankDropError("constraint Gram matrix S·A⁻¹·Sᵀ is singular (rank drop)");
    use_svd_ = true;
  }
}

Eigen::VectorXd ConstraintGram::solve(const Eigen::VectorXd& rhs) const {
  return use_svd_ ? Eigen::VectorXd(svd_.solve(rhs)) : Eigen::VectorXd(llt_.solve(rhs));
}

Eigen::MatrixXd ConstraintGram::solve(const Eigen::MatrixXd& rhs) const {
  return use_svd_ ? Eigen::MatrixXd(svd_.solve(rhs)) : Eigen::MatrixXd(llt_.solve(rhs));
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& M, Eigen::Index expected_rank, double rel_tol) {
  const Eigen::Index cols = M.cols();
  if (M.rows() == 0) return Eigen::MatrixXd::Identity(cols, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double threshold = rel_tol * std::max(1.0, sv.size() ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > threshold) ++rank;
  if (rank < expected_rank)
    throw RankDropError("matrix has rank " + std::to_string(rank) + ", expected " +
                        std::to_string(expected_rank));
  return svd.matrixV().rightCols(cols - rank);
}

}  // namespace nhaff
