#pragma once

// Decision procedures built on the closed-form reaction force:
//  - sampled reconstruction of the reaction-annihilator fiber at q,
//  - section tests (energy: the field ξ; momenta: their generators),
//  - gauge-symmetry invariance test and momentum drift along trajectories,
//  - A-orthogonal generator projection and its obstruction,
//  - chart-covariance harness for the reaction force.
//
// Every verdict concerns the configurations actually tested; nothing is
// certified between grid points.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nhaff/dynamics.hpp"
#include "nhaff/model.hpp"

namespace nhaff {

struct SamplerOptions {
  int samples = 0;  // 0: max(3k + 5, (r+1)(r+2)/2 + 1)
  double speed = 1.0;
  double tol_rank = 1e-9;
  double tol_section = 1e-8;
  std::uint64_t seed = 0;
};

int default_sample_count(const Model& m);

/// Velocities on M_q: ξ(q) + K c with c uniform in [−speed, speed]^r.
class VelocitySampler {
 public:
  explicit VelocitySampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi);
  Eigen::VectorXd on_constraint(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& xi, double speed);
  /// Adds a random range(Sᵀ) component, so S v + s ≠ 0.
  Eigen::VectorXd off_constraint(const EvaluatedFrame& f, const Eigen::MatrixXd& kernel,
                                 const Eigen::VectorXd& xi, double speed);

 private:
  std::mt19937_64 rng_;
};

/// Per-point seed, so results do not depend on evaluation order.
std::uint64_t point_seed(std::uint64_t seed, std::size_t index);

/// Symbolic vector field on Q in the model's chart coordinates.
struct VectorFieldSpec {
  std::vector<Expr> components;
};

VectorFieldSpec parse_field(std::string_view comma_separated);

/// Vector field bound to a model: symbolic (value and exact Jacobian) or a
/// numeric callable such as the canonical ξ.
class FieldEvaluator {
 public:
  using ValueFn = std::function<Eigen::VectorXd(const EvaluatedFrame&)>;

  FieldEvaluator(const Model& m, const VectorFieldSpec& spec, std::string label = {});
  FieldEvaluator(ValueFn value, std::string label);

  static FieldEvaluator canonical_xi();

  Eigen::VectorXd value(const EvaluatedFrame& f) const { return value_(f); }
  /// J(i,j) = ∂Y_i/∂q_j. Throws std::logic_error for non-symbolic fields.
  Eigen::MatrixXd jacobian(const EvaluatedFrame& f) const;
  bool symbolic() const noexcept { return static_cast<bool>(jacobian_); }
  const std::string& label() const noexcept { return label_; }

 private:
  ValueFn value_;
  std::function<Eigen::MatrixXd(const EvaluatedFrame&)> jacobian_;
  std::string label_;
};

/// Named fields of the built-ins: F, K (sphere_cylinder generators), D1..D3
/// (explicit constraint-distribution fields), and "xi" (canonical ξ).
/// Anything else is read as a comma-separated expression list.
FieldEvaluator resolve_field(const Model& m, std::string_view name_or_exprs);
std::optional<VectorFieldSpec> preset_field(const Model& m, std::string_view name);

// ---------------------------------------------------------------- grids

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  int count = 1;
};

/// "lo1:hi1:n1,lo2:hi2:n2,…"
std::vector<GridAxis> parse_grid(std::string_view text);

/// Tensor grid; points where some guard has |g| < margin are dropped.
std::vector<Eigen::VectorXd> uniform_grid(const Model& m, std::span<const GridAxis> axes,
                                          double margin = 1e-2);

// ---------------------------------------------------------------- fibers

struct FiberReport {
  Eigen::VectorXd q;
  int samples = 0;
  Eigen::MatrixXd reaction_span;  // n × d, orthonormal
  int d = 0;
  Eigen::MatrixXd rad_fiber;  // n × (n − d), orthonormal
  bool zero_reaction = false;
  double max_reaction_norm = 0.0;
  double tol_rank = 0.0;
  double speed = 0.0;
};

FiberReport rad_fiber(const Model& m, const Eigen::VectorXd& q, const SamplerOptions& opts = {});

/// ‖w − B Bᵀ w‖ / ‖w‖ for an orthonormal basis B.
double span_distance(const Eigen::MatrixXd& basis, const Eigen::VectorXd& w);

// ---------------------------------------------------------------- verdicts

struct SectionVerdict {
  std::string field;
  std::size_t grid_size = 0;
  int samples_per_point = 0;
  double max_violation = 0.0;
  bool section = true;
  Eigen::VectorXd witness_q;
  Eigen::VectorXd witness_v;
  SamplerOptions opts;
};

/// max over grid × sampled v of |R(q,v)·Z(q)| / max(1, ‖R‖‖Z‖) against
/// opts.tol_section.
SectionVerdict is_section_of_rad(const Model& m, const FieldEvaluator& Z,
                                 std::span<const Eigen::VectorXd> grid, const SamplerOptions& opts = {});

/// Energy is a first integral iff ξ is a section of the reaction annihilator.
SectionVerdict energy_conservation_test(const Model& m, std::span<const Eigen::VectorXd> grid,
                                        const SamplerOptions& opts = {});

/// Y^{TQ}(L) = Y·∂L/∂q + (∂Y/∂q v)·∂L/∂v.
double lifted_lagrangian_derivative(const EvaluatedFrame& f, const Eigen::VectorXd& v,
                                    const Eigen::VectorXd& Y, const Eigen::MatrixXd& JY);

struct GaugeVerdict {
  std::string field;
  std::size_t grid_size = 0;
  int samples_per_point = 0;
  double max_violation = 0.0;
  bool gauge_symmetry = true;
  bool off_constraint = false;
  Eigen::VectorXd witness_q;
  Eigen::VectorXd witness_v;
  double tol = 0.0;
  std::string note = "invariance condition only; orbit tangency not checked";
};

/// Checks Y^{TQ}(L) = 0 at sampled velocities on M (or, with
/// `off_constraint`, deliberately off M).
GaugeVerdict gauge_symmetry_test(const Model& m, const FieldEvaluator& Y, std::span<const Eigen::VectorXd> grid,
                                 const SamplerOptions& opts = {}, bool off_constraint = false);

struct DriftReport {
  double J0 = 0.0;
  double max_abs_drift = 0.0;
  double max_rel_drift = 0.0;         // max |J − J0| / (1 + |J0|)
  double max_balance_residual = 0.0;  // max |dJ/dt − Y^{TQ}(L) − R·Y|, centered differences
  std::vector<double> J;
};

DriftReport momentum_drift(const Trajectory& traj, const Model& m, const FieldEvaluator& Y);

struct GeneratorProjection {
  Eigen::VectorXd PiAY;
  double obstruction = 0.0;  // (Π_A Y − Y)·(A ξ − b)
};

GeneratorProjection generator_projection(const Model& m, const FieldEvaluator& Y, const Eigen::VectorXd& q);

// ---------------------------------------------------------------- charts

/// Change of coordinates q = C(q̃). `forward` expresses the old coordinates
/// in terms of `new_coords` (and model parameters); `inverse`, if given,
/// expresses the new coordinates in terms of the old ones. Without it the
/// inverse is found by Newton iteration.
struct ChartChange {
  std::vector<std::string> new_coords;
  std::vector<Expr> forward;
  std::optional<std::vector<Expr>> inverse;
};

/// The model written in the new chart: Ã = C′ᵀ(A∘C)C′, b̃ = C′ᵀ(b∘C),
/// Ṽ = V∘C, S̃ = (S∘C)C′, s̃ = s∘C, guards∘C. Built symbolically.
Model transform_model(const Model& m, const ChartChange& chart);

Eigen::VectorXd chart_forward(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new);
Eigen::MatrixXd chart_jacobian(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new);
Eigen::VectorXd chart_inverse(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_old,
                              const Eigen::VectorXd& guess);

/// ‖R̃(q̃,ṽ) − C′ᵀ R(C(q̃), C′ṽ)‖ / (1 + ‖R‖) with (q̃,ṽ) on M in the new chart.
double covariance_check(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new,
                        const Eigen::VectorXd& v_new);
double covariance_check(const Model& m, const Model& transformed, const ChartChange& chart,
                        const Eigen::VectorXd& q_new, const Eigen::VectorXd& v_new);

}  // namespace nhaff
