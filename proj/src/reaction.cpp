#include "nhaff/reaction.hpp"

#include <string>

namespace nhaff {

Eigen::VectorXd ell(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  const int n = f.n();
  Eigen::VectorXd out = f.Vp;
  // α_i = Σ_h (∂A/∂q_h v)_i v_h − ½ vᵀ (∂A/∂q_i) v
  Eigen::VectorXd dA_v_v = Eigen::VectorXd::Zero(n);
  for (int h = 0; h < n; ++h) dA_v_v += f.dA[h] * v * v[h];
  for (int i = 0; i < n; ++i) out[i] += dA_v_v[i] - 0.5 * v.dot(f.dA[i] * v);
  // β = (dbᵀ − db) v
  out += (f.db.transpose() - f.db) * v;
  return out;
}

Eigen::VectorXd sigma(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  Eigen::VectorXd out = f.ds * v;
  for (int j = 0; j < f.n(); ++j) out += f.dS[j] * v * v[j];
  return out;
}

void require_on_constraint(const EvaluatedFrame& f, const Eigen::VectorXd& v, double tol) {
  const double res = constraint_residual(f, v);
  if (!(res <= tol))
    throw ConstraintViolation("velocity is off the constraint manifold (residual " + std::to_string(res) +
                              ") at q = " + format_vector(f.q));
}

Eigen::VectorXd multiplier_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  const ConstraintGram gram(f.S, f.Ainv);
  const Eigen::VectorXd rhs = gram.ainv_st().transpose() * ell(f, v) - sigma(f, v);
  return gram.solve(rhs);
}

ReactionSample reaction_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  ReactionSample out;
  out.q = f.q;
  out.v = v;
  out.lambda = multiplier_extended(f, v);
  out.R = f.S.transpose() * out.lambda;
  return out;
}

Eigen::VectorXd multiplier(const EvaluatedFrame& f, const Eigen::VectorXd& v, double constraint_tol) {
  require_on_constraint(f, v, constraint_tol);
  return multiplier_extended(f, v);
}

ReactionSample reaction_force(const EvaluatedFrame& f, const Eigen::VectorXd& v, double constraint_tol) {
  require_on_constraint(f, v, constraint_tol);
  return reaction_extended(f, v);
}

Eigen::MatrixXd projector_Dcirc(const EvaluatedFrame& f) {
  const ConstraintGram gram(f.S, f.Ainv);
  // Sᵀ G⁻¹ S A⁻¹ = Sᵀ G⁻¹ (A⁻¹Sᵀ)ᵀ
  return f.S.transpose() * gram.solve(Eigen::MatrixXd(gram.ainv_st().transpose()));
}

Eigen::MatrixXd projector_D(const EvaluatedFrame& f) {
  const ConstraintGram gram(f.S, f.Ainv);
  const int n = f.n();
  return Eigen::MatrixXd::Identity(n, n) - gram.ainv_st() * gram.solve(f.S);
}

Eigen::VectorXd xi(const EvaluatedFrame& f) {
  const ConstraintGram gram(f.S, f.Ainv);
  return -gram.ainv_st() * gram.solve(f.s);
}

Eigen::MatrixXd kernel_basis(const EvaluatedFrame& f) { return null_space(f.S, f.k()); }

}  // namespace nhaff
