#pragma once

// Ideal reaction force of an affine nonholonomic constraint in closed form:
//
//   R = Sᵀ (S A⁻¹ Sᵀ)⁻¹ (S A⁻¹ ℓ − σ),   λ = (S A⁻¹ Sᵀ)⁻¹ (S A⁻¹ ℓ − σ)
//
// with ℓ_i = α_i + β_i + ∂V/∂q_i and σ the velocity-quadratic part of the
// differentiated constraint. R is the physical reaction only on M, so the
// checked entry points require S v + s = 0.

#include <Eigen/Dense>
#include <stdexcept>

#include "nhaff/linalg.hpp"
#include "nhaff/model.hpp"

namespace nhaff {

class ConstraintViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReactionSample {
  Eigen::VectorXd q;
  Eigen::VectorXd v;
  Eigen::VectorXd R;       // reaction covector
  Eigen::VectorXd lambda;  // multiplier, R = Sᵀλ
};

/// ℓ_i = (∂A_ij/∂q_h − ½ ∂A_jh/∂q_i) v_j v_h + (∂b_j/∂q_i − ∂b_i/∂q_j) v_j + ∂V/∂q_i.
/// Defined for every v.
Eigen::VectorXd ell(const EvaluatedFrame& f, const Eigen::VectorXd& v);

/// σ_a = ∂S_ai/∂q_j v_i v_j + ∂s_a/∂q_j v_j. Defined for every v.
Eigen::VectorXd sigma(const EvaluatedFrame& f, const Eigen::VectorXd& v);

/// Throws ConstraintViolation if ‖S v + s‖_∞ > tol.
void require_on_constraint(const EvaluatedFrame& f, const Eigen::VectorXd& v,
                           double tol = kConstraintTol);

Eigen::VectorXd multiplier(const EvaluatedFrame& f, const Eigen::VectorXd& v,
                           double constraint_tol = kConstraintTol);
ReactionSample reaction_force(const EvaluatedFrame& f, const Eigen::VectorXd& v,
                              double constraint_tol = kConstraintTol);

/// The same closed-form expressions evaluated off M (the right-hand side of
/// the unconstrained ODE whose solutions from M stay on M).
Eigen::VectorXd multiplier_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v);
ReactionSample reaction_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v);

/// P = Sᵀ(S A⁻¹ Sᵀ)⁻¹ S A⁻¹, the A⁻¹-orthogonal projector onto range Sᵀ.
Eigen::MatrixXd projector_Dcirc(const EvaluatedFrame& f);

/// Π_A = 1 − A⁻¹Sᵀ(S A⁻¹ Sᵀ)⁻¹ S, the A-orthogonal projector onto ker S.
Eigen::MatrixXd projector_D(const EvaluatedFrame& f);

/// ξ = −A⁻¹Sᵀ(S A⁻¹ Sᵀ)⁻¹ s: the solution of S ξ = −s that is
/// A-orthogonal to ker S.
Eigen::VectorXd xi(const EvaluatedFrame& f);

/// Orthonormal (Euclidean) basis of ker S(q), n × (n − k).
Eigen::MatrixXd kernel_basis(const EvaluatedFrame& f);

}  // namespace nhaff
