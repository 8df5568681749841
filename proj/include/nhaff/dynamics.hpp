#pragma once

// Fixed-step RK4 integration of the constrained equations of motion
//   A q̈ + ℓ = Sᵀλ,   λ from the closed-form multiplier,
// with optional velocity re-projection onto M after every step.

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "nhaff/model.hpp"

namespace nhaff {

/// ½ v·A v + V(q). The gyrostatic term cancels in p·v − L.
double energy(const EvaluatedFrame& f, const Eigen::VectorXd& v);

/// ⟨p_L, Y⟩ = (A v − b)·Y.
double momentum(const EvaluatedFrame& f, const Eigen::VectorXd& v, const Eigen::VectorXd& Y);

/// q̈ = A⁻¹(Sᵀλ − ℓ); requires v on M.
Eigen::VectorXd acceleration(const EvaluatedFrame& f, const Eigen::VectorXd& v,
                             double constraint_tol = kConstraintTol);
Eigen::VectorXd acceleration_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v);

enum class Termination { Completed, GuardStop, SolverError };
std::string_view to_string(Termination t);

struct TrajectorySample {
  double t = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd v;
  double E = 0.0;
  double residual = 0.0;
  Eigen::VectorXd R;
  double work_rate = 0.0;     // R·v
  double xi_work_rate = 0.0;  // R·ξ(q)
};

struct Trajectory {
  int n = 0;
  std::vector<TrajectorySample> samples;
  Termination termination = Termination::Completed;
  std::string message;
  double dt = 0.0;
  int stride = 1;
  bool projected = true;
  std::string integrator = "rk4";
  double initial_projection_delta = 0.0;  // ‖v0_projected − v0‖_∞
};

struct IntegrateOptions {
  bool project = true;
  int stride = 10;
};

/// `s0.v` is projected onto M first. Guard zero crossings stop the run
/// (termination = GuardStop); NaN/Inf or a rank drop give SolverError.
Trajectory integrate(const Model& m, const State& s0, double t_end, double dt,
                     const IntegrateOptions& opts = {});

/// Builds the diagnostic record (E, residual, R, work rates) for one state.
TrajectorySample make_sample(const EvaluatedFrame& f, double t, const Eigen::VectorXd& v);

/// Cumulative trapezoidal integral of work_rate over the stored samples.
std::vector<double> cumulative_work(const Trajectory& traj);

/// max_j |E(t_j) − E(0) − ∫₀^{t_j} R·v dt| over the stored samples.
double energy_balance_residual(const Trajectory& traj);

/// CSV with header t,q1..qn,v1..vn,E,residual,R1..Rn,work_rate,xi_work_rate
/// and 17 significant digits.
void write_csv(std::ostream& out, const Trajectory& traj);

}  // namespace nhaff
