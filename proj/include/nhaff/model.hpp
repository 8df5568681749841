#pragma once

// Nonholonomic system in one chart: Lagrangian L = ½ v·A(q)v − b(q)·v − V(q)
// and affine velocity constraint S(q)v + s(q) = 0.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nhaff/expr.hpp"

namespace nhaff {

inline constexpr double kConstraintTol = 1e-9;
inline constexpr double kGuardEps = 1e-12;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ExprMatrix = std::vector<std::vector<Expr>>;
using ParamMap = std::map<std::string, double, std::less<>>;

struct ModelSpec {
  std::string name;  // built-in name, or empty
  int n = 0;
  int k = 0;
  std::vector<std::string> coords;
  ExprMatrix A;
  std::vector<Expr> b;
  Expr V;
  ExprMatrix S;
  std::vector<Expr> s;
  ParamMap params;
  std::vector<Expr> guards;  // must stay nonzero along trajectories
};

/// Every tensor entering the reaction force, evaluated at one configuration.
struct EvaluatedFrame {
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::MatrixXd Ainv;
  std::vector<Eigen::MatrixXd> dA;  // dA[h](i,j) = ∂A_ij/∂q_h
  Eigen::VectorXd b;
  Eigen::MatrixXd db;  // db(i,j) = ∂b_i/∂q_j
  double V = 0.0;
  Eigen::VectorXd Vp;  // ∂V/∂q_i
  Eigen::MatrixXd S;
  std::vector<Eigen::MatrixXd> dS;  // dS[j](a,i) = ∂S_ai/∂q_j
  Eigen::VectorXd s;
  Eigen::MatrixXd ds;  // ds(a,j) = ∂s_a/∂q_j

  int n() const noexcept { return static_cast<int>(q.size()); }
  int k() const noexcept { return static_cast<int>(S.rows()); }
};

struct State {
  Eigen::VectorXd q;
  Eigen::VectorXd v;
};

/// Validated, compiled model. Immutable; all member functions are re-entrant.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  int n() const noexcept { return spec_.n; }
  int k() const noexcept { return spec_.k; }
  int r() const noexcept { return spec_.n - spec_.k; }

  /// Coordinate names followed by parameter names; the slot layout used by
  /// every compiled expression of this model.
  std::span<const std::string> slots() const noexcept { return slots_; }
  std::vector<double> slot_values(const Eigen::VectorXd& q) const;

  EvaluatedFrame evaluate_frame(const Eigen::VectorXd& q) const;

  Eigen::VectorXd guard_values(const Eigen::VectorXd& q) const;
  bool guards_satisfied(const Eigen::VectorXd& q) const;

  /// Lagrangian value, from the stored expressions (used by oracles and the
  /// gauge test).
  double lagrangian(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;

  /// Copy of the model with a different potential.
  Model with_potential(const Expr& V) const;

 private:
  struct Compiled;
  ModelSpec spec_;
  std::vector<std::string> slots_;
  std::shared_ptr<const Compiled> compiled_;
};

struct ProbeReport {
  Eigen::VectorXd q;
  bool guards_ok = true;
  double min_eig_A = 0.0;
  double min_sv_S = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ProbeReport> probes;
  std::vector<std::string> warnings;
  bool pass = false;
};

/// Checks positive definiteness of A and full row rank of S at the probes.
/// Throws ModelError when A is not symmetric at a probe.
ValidationReport validate(const Model& m, std::span<const Eigen::VectorXd> probes);

EvaluatedFrame evaluate_frame(const Model& m, const Eigen::VectorXd& q);

/// Built-in systems: "affine_particle" (params c) and "sphere_cylinder"
/// (params a, r, I, Omega, and g when the potential uses it). `potential`
/// is an expression string or one of the aliases "zero", "harmonic", "gravity".
Model builtin(std::string_view name, const ParamMap& params,
              std::optional<std::string> potential = std::nullopt);

/// A-orthogonal projection of v onto the fiber M_q.
Eigen::VectorXd project_velocity(const EvaluatedFrame& f, const Eigen::VectorXd& v);

/// max_a |(S v + s)_a|
double constraint_residual(const EvaluatedFrame& f, const Eigen::VectorXd& v);

}  // namespace nhaff
