#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nhaff/analysis.hpp"
#include "nhaff/linalg.hpp"
#include "nhaff/report.hpp"
#include "support.hpp"

using namespace nhaff;
using namespace nhaff::testing;

namespace {

std::vector<Eigen::VectorXd> random_grid(const Model& m, std::mt19937_64& rng, int count) {
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < count; ++i) out.push_back(random_q(m, rng));
  return out;
}

Eigen::VectorXd angular_velocity(const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
  const double phi = q[2], th = q[4];
  return Eigen::Vector3d(v[4] * std::cos(phi) + v[3] * std::sin(phi) * std::sin(th),
                         v[4] * std::sin(phi) - v[3] * std::cos(phi) * std::sin(th), v[2] + v[3] * std::cos(th));
}

ChartChange parabolic_chart() {
  // x = x̃, y = ỹ, z = z̃ − 0.1 x̃², i.e. z̃ = z + 0.1 x².
  ChartChange c;
  c.new_coords = {"X", "Y", "Zt"};
  c.forward = {parse("X"), parse("Y"), parse("Zt - 0.1*X^2")};
  return c;
}

// Reaction with the opposite sign of σ, for contrast with the closed form.
Eigen::VectorXd reaction_plus_sigma(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  const ConstraintGram gram(f.S, f.Ainv);
  return f.S.transpose() * gram.solve(Eigen::VectorXd(gram.ainv_st().transpose() * ell(f, v) + sigma(f, v)));
}

}  // namespace

TEST_CASE("default sample count") {
  CHECK(default_sample_count(builtin("affine_particle", {{"c", 1.0}})) == 8);
  CHECK(default_sample_count(builtin("sphere_cylinder", sphere_params())) == 11);
}

TEST_CASE("sampler is deterministic and stays on M") {
  const Model m = builtin("sphere_cylinder", sphere_params());
  std::mt19937_64 rng(1);
  const EvaluatedFrame f = m.evaluate_frame(random_q(m, rng));
  const Eigen::MatrixXd K = kernel_basis(f);
  VelocitySampler a(42), b(42), c(43);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd va = a.on_constraint(K, xi(f), 1.0);
    CHECK(va == b.on_constraint(K, xi(f), 1.0));
    CHECK(va != c.on_constraint(K, xi(f), 1.0));
    CHECK(constraint_residual(f, va) <= 1e-14);
    CHECK(constraint_residual(f, a.off_constraint(f, K, xi(f), 1.0)) > 1e-6);
    b.off_constraint(f, K, xi(f), 1.0);
    c.off_constraint(f, K, xi(f), 1.0);
  }
  CHECK(point_seed(0, 0) != point_seed(0, 1));
  CHECK(point_seed(7, 3) == point_seed(7, 3));
}

TEST_CASE("particle fibers") {
  Eigen::VectorXd q(3);
  q << 1, 1, 0;
  const Model gz = builtin("affine_particle", {{"c", 1.0}}, "z");
  const FiberReport rep = rad_fiber(gz, q);
  CHECK(rep.d == 1);
  CHECK(rep.rad_fiber.cols() == 2);
  CHECK_FALSE(rep.zero_reaction);
  const EvaluatedFrame f = gz.evaluate_frame(q);
  const Eigen::MatrixXd K = kernel_basis(f);
  for (int j = 0; j < 2; ++j) CHECK(span_distance(rep.rad_fiber, K.col(j)) <= 1e-9);
  CHECK(span_distance(rep.reaction_span, f.S.row(0).transpose()) <= 1e-12);

  const Model zero = builtin("affine_particle", {{"c", 1.0}});
  const FiberReport rz = rad_fiber(zero, q);
  CHECK(rz.d == 0);
  CHECK(rz.zero_reaction);
  CHECK(rz.rad_fiber.cols() == 3);

  std::mt19937_64 rng(2);
  for (const char* V : {"z", "0", "harmonic", "x*z + y^2", "sin(x)*cos(y) + z^2"}) {
    const Model m = builtin("affine_particle", {{"c", 0.7}}, V);
    for (int t = 0; t < 10; ++t) {
      const FiberReport r = rad_fiber(m, random_q(m, rng));
      CHECK((r.d == 0 || r.d == 1));
    }
  }
}

TEST_CASE("sphere fiber contains the displayed fields") {
  const Model m = builtin("sphere_cylinder", sphere_params());
  std::mt19937_64 rng(3);
  const auto names = {"D2", "D3"};
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd q = random_q(m, rng);
    const FiberReport rep = rad_fiber(m, q);
    CHECK(rep.d <= m.k());
    Eigen::VectorXd dg = Eigen::VectorXd::Zero(5), dp = Eigen::VectorXd::Zero(5);
    dg[1] = 1;
    dp[2] = 1;
    CHECK(span_distance(rep.rad_fiber, dg) <= 1e-9);
    CHECK(span_distance(rep.rad_fiber, dp) <= 1e-9);
    const EvaluatedFrame f = m.evaluate_frame(q);
    for (const char* name : names) CHECK(span_distance(rep.rad_fiber, resolve_field(m, name).value(f)) <= 1e-9);
  }
}

TEST_CASE("constraint distribution lies in the reaction annihilator") {
  std::mt19937_64 rng(4);
  const Model gyro = gyro_model();
  const Model sphere = builtin("sphere_cylinder", sphere_params(), "g*z + cos(gamma)");
  const Model particle = builtin("affine_particle", {{"c", 1.0}}, "z");
  for (const Model* m : {&gyro, &sphere, &particle}) {
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd q = random_q(*m, rng);
      SamplerOptions o;
      o.seed = static_cast<std::uint64_t>(t);
      const FiberReport rep = rad_fiber(*m, q, o);
      CHECK(rep.d <= m->k());
      const Eigen::MatrixXd K = kernel_basis(m->evaluate_frame(q));
      for (Eigen::Index j = 0; j < K.cols(); ++j) CHECK(span_distance(rep.rad_fiber, K.col(j)) <= 1e-9);
    }
  }
}

TEST_CASE("section verdicts") {
  std::mt19937_64 rng(5);
  const Model gz = builtin("affine_particle", {{"c", 1.0}}, "z");
  const auto grid = random_grid(gz, rng, 10);
  CHECK(is_section_of_rad(gz, resolve_field(gz, "D1"), grid).section);
  CHECK(is_section_of_rad(gz, resolve_field(gz, "1, 0, y"), grid).section);
  const SectionVerdict e = energy_conservation_test(gz, grid);
  CHECK_FALSE(e.section);
  CHECK(e.max_violation > 1e-3);
  CHECK(e.witness_q.size() == 3);
  CHECK(constraint_residual(gz.evaluate_frame(e.witness_q), e.witness_v) <= 1e-12);

  CHECK(energy_conservation_test(builtin("affine_particle", {{"c", 1.0}}, "harmonic"), grid).section);

  const Model sphere = builtin("sphere_cylinder", sphere_params());
  const auto sgrid = random_grid(sphere, rng, 10);
  CHECK(is_section_of_rad(sphere, resolve_field(sphere, "0, Omega, Omega, 0, 0"), sgrid).section);
  CHECK(energy_conservation_test(sphere, sgrid).section);
  const Model cosg = builtin("sphere_cylinder", sphere_params(), "cos(gamma)");
  CHECK_FALSE(energy_conservation_test(cosg, sgrid).section);
  const Model still = builtin("sphere_cylinder", sphere_params(0.0), "cos(gamma)");
  CHECK(energy_conservation_test(still, sgrid).section);
}

TEST_CASE("energy verdict does not depend on the representative of xi") {
  std::mt19937_64 rng(6);
  const Model models[] = {builtin("affine_particle", {{"c", 1.0}}, "z"),
                          builtin("affine_particle", {{"c", 1.0}}, "harmonic"),
                          builtin("sphere_cylinder", sphere_params()),
                          builtin("sphere_cylinder", sphere_params(), "cos(gamma)")};
  for (const Model& m : models) {
    const auto grid = random_grid(m, rng, 5);
    const bool reference = energy_conservation_test(m, grid).section;
    for (int t = 0; t < 25; ++t) {
      const Eigen::VectorXd c = uniform_vector(rng, m.r(), -3, 3);
      const FieldEvaluator shifted(
          [c](const EvaluatedFrame& f) { return Eigen::VectorXd(xi(f) + kernel_basis(f) * c); }, "xi+D");
      SamplerOptions o;
      o.seed = static_cast<std::uint64_t>(t);
      CHECK(is_section_of_rad(m, shifted, grid, o).section == reference);
    }
  }
}

TEST_CASE("gauge symmetry of the sphere generators") {
  std::mt19937_64 rng(7);
  const Model m = builtin("sphere_cylinder", sphere_params());
  const auto grid = random_grid(m, rng, 10);
  CHECK(gauge_symmetry_test(m, resolve_field(m, "F"), grid).gauge_symmetry);
  CHECK(gauge_symmetry_test(m, resolve_field(m, "F"), grid, {}, true).gauge_symmetry);
  const GaugeVerdict k = gauge_symmetry_test(m, resolve_field(m, "K"), grid);
  CHECK(k.gauge_symmetry);
  CHECK_FALSE(gauge_symmetry_test(m, resolve_field(m, "K"), grid, {}, true).gauge_symmetry);
  CHECK_FALSE(gauge_symmetry_test(m, resolve_field(m, "1, 0, 0, 0, 0"), grid).gauge_symmetry);

  // Y_K^{TQ}(L) = −(ż + a ω_x sin γ − a ω_y cos γ) γ̇ at arbitrary velocities.
  const FieldEvaluator K = resolve_field(m, "K");
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd q = random_q(m, rng);
    const Eigen::VectorXd v = uniform_vector(rng, 5, -2, 2);
    const EvaluatedFrame f = m.evaluate_frame(q);
    const Eigen::VectorXd w = angular_velocity(q, v);
    const double expected = -(v[0] + w[0] * std::sin(q[1]) - w[1] * std::cos(q[1])) * v[1];
    CHECK(lifted_lagrangian_derivative(f, v, K.value(f), K.jacobian(f)) ==
          doctest::Approx(expected).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("lifted derivative of translations") {
  const Model m = builtin("sphere_cylinder", sphere_params());
  std::mt19937_64 rng(8);
  const FieldEvaluator dz = resolve_field(m, "1, 0, 0, 0, 0");
  const EvaluatedFrame f = m.evaluate_frame(random_q(m, rng));
  CHECK(lifted_lagrangian_derivative(f, uniform_vector(rng, 5, -1, 1), dz.value(f), dz.jacobian(f)) ==
        doctest::Approx(-9.8));
}

TEST_CASE("momenta of the sphere on M") {
  const ParamMap p = sphere_params();
  const Model m = builtin("sphere_cylinder", p);
  const FieldEvaluator F = resolve_field(m, "F"), K = resolve_field(m, "K");
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd q = random_q(m, rng);
    const EvaluatedFrame f = m.evaluate_frame(q);
    const Eigen::VectorXd v = random_on_constraint(f, rng, 2.0);
    const Eigen::VectorXd w = angular_velocity(q, v);
    const double a = 1, r = 2, I = 0.4, W = 0.5, z = q[0], g = q[1];
    const double F_expected = (I + a * a) * w[2] - a * (a + r) * W;
    const double K_expected =
        a * w[0] * std::cos(g) + a * w[1] * std::sin(g) + (a / r) * z * w[2] - ((r + a) / r) * W * z;
    CHECK(std::abs(momentum(f, v, F.value(f)) - F_expected) <= 1e-10);
    CHECK(std::abs(momentum(f, v, K.value(f)) - K_expected) <= 1e-10);
  }
}

TEST_CASE("generator projection obstruction") {
  std::mt19937_64 rng(10);
  const Model m = builtin("sphere_cylinder", sphere_params());
  const Model still = builtin("sphere_cylinder", sphere_params(0.0));
  const FieldEvaluator K = resolve_field(m, "K");
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd q = random_q(m, rng);
    const double expected = 0.4 * 3.0 * 0.5 * q[0] / (1.4 * 2.0);
    const GeneratorProjection g = generator_projection(m, K, q);
    CHECK(std::abs(g.obstruction - expected) <= 1e-10 * std::max(std::abs(expected), 1e-300));
    const EvaluatedFrame f = m.evaluate_frame(q);
    CHECK((f.S * g.PiAY).norm() <= 1e-12 * (1.0 + g.PiAY.norm()));
    CHECK(std::abs(generator_projection(still, resolve_field(still, "K"), q).obstruction) <= 1e-12);
    const GeneratorProjection d = generator_projection(m, resolve_field(m, "D1"), q);
    CHECK(std::abs(d.obstruction) <= 1e-12);
    CHECK(rel_err(d.PiAY, resolve_field(m, "D1").value(f)) <= 1e-12);
  }
}

TEST_CASE("momentum drift and its balance") {
  const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");
  Eigen::VectorXd q(3);
  q << 1, 1, 0;
  const FieldEvaluator dz = resolve_field(m, "0, 0, 1");
  std::vector<double> balance;
  for (double dt : {2e-3, 1e-3, 5e-4}) {
    IntegrateOptions o;
    o.stride = 10;
    const Trajectory tr = integrate(m, {q, Eigen::VectorXd::Zero(3)}, 2.0, dt, o);
    const DriftReport rep = momentum_drift(tr, m, dz);
    CHECK(rep.max_abs_drift > 0.1);
    CHECK(rep.J.size() == tr.samples.size());
    balance.push_back(rep.max_balance_residual);
  }
  for (std::size_t i = 0; i + 1 < balance.size(); ++i) {
    const double ratio = balance[i] / balance[i + 1];
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }

  const Model sphere = builtin("sphere_cylinder", sphere_params());
  Eigen::VectorXd qs(5), vs(5);
  qs << 0.3, 0.2, 0.1, 0.4, std::numbers::pi / 3;
  vs << -0.1, 3.2, -5.4, 1.0, -7.4;
  const Trajectory tr = integrate(sphere, {qs, vs}, 2.0, 1e-3);
  CHECK(momentum_drift(tr, sphere, resolve_field(sphere, "F")).max_rel_drift <= 1e-6);
  CHECK(momentum_drift(tr, sphere, resolve_field(sphere, "K")).max_rel_drift <= 1e-6);
  CHECK_THROWS_AS(momentum_drift(tr, m, dz), ModelError);
}

TEST_CASE("section verdicts agree with trajectories") {
  std::mt19937_64 rng(11);
  const double integrator_tol = 1e-8;
  {
    const Model m = builtin("affine_particle", {{"c", 1.0}}, "harmonic");
    const auto grid = random_grid(m, rng, 5);
    REQUIRE(energy_conservation_test(m, grid).section);
    for (const auto& q : grid) {
      const Eigen::VectorXd v = uniform_vector(rng, 3, -0.2, 0.2);
      const Trajectory tr = integrate(m, {q, v}, 1.0, 1e-3);
      for (const auto& s : tr.samples) CHECK(std::abs(s.E - tr.samples[0].E) <= integrator_tol);
    }
  }
  {
    const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");
    const auto grid = random_grid(m, rng, 5);
    const SectionVerdict v = energy_conservation_test(m, grid);
    REQUIRE_FALSE(v.section);
    const Trajectory tr = integrate(m, {v.witness_q, v.witness_v}, 1.0, 1e-3);
    double drift = 0.0;
    for (const auto& s : tr.samples) drift = std::max(drift, std::abs(s.E - tr.samples[0].E));
    CHECK(drift > 100 * integrator_tol);
  }
}

TEST_CASE("grids") {
  const auto axes = parse_grid("0:1:3,-1:1:2,0.5:0.5:1");
  REQUIRE(axes.size() == 3);
  CHECK(axes[0].count == 3);
  CHECK(axes[1].lo == -1.0);
  const Model m = builtin("affine_particle", {{"c", 1.0}});
  const auto grid = uniform_grid(m, axes);
  CHECK(grid.size() == 6);
  CHECK(grid[1][1] == 1.0);
  CHECK(grid[2][0] == 0.5);
  const auto dropped = uniform_grid(m, parse_grid("0:1:2,-1:1:3,0:0:1"));
  CHECK(dropped.size() == 4);
  CHECK_THROWS_AS(parse_grid("0:1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid("0:1:3x"), std::invalid_argument);
  CHECK_THROWS_AS(uniform_grid(m, parse_grid("0:1:3")), std::invalid_argument);
}

TEST_CASE("field parsing") {
  const Model m = builtin("affine_particle", {{"c", 1.0}});
  CHECK(parse_field("1, x, y*z").components.size() == 3);
  CHECK_THROWS_AS(FieldEvaluator(m, parse_field("1, x")), ModelError);
  CHECK_THROWS_AS(FieldEvaluator(m, parse_field("1, x, w")), ModelError);
  CHECK_THROWS(parse_field("1, , x"));
  CHECK_FALSE(preset_field(m, "K").has_value());
  CHECK(preset_field(m, "D2").has_value());
  CHECK_FALSE(FieldEvaluator::canonical_xi().symbolic());
  Eigen::VectorXd q(3);
  q << 1, 2, 3;
  const EvaluatedFrame f = m.evaluate_frame(q);
  const FieldEvaluator Y = resolve_field(m, "x*y, z^2, c");
  CHECK(Y.value(f) == Eigen::Vector3d(2, 9, 1));
  Eigen::Matrix3d J;
  J << 2, 1, 0, 0, 0, 6, 0, 0, 0;
  CHECK(Y.jacobian(f) == J);
  CHECK_THROWS_AS(FieldEvaluator::canonical_xi().jacobian(f), std::logic_error);
}

TEST_CASE("chart covariance of the reaction") {
  std::mt19937_64 rng(12);
  const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");

  ChartChange id;
  id.new_coords = {"X", "Y", "Zt"};
  id.forward = {parse("X"), parse("Y"), parse("Zt")};
  ChartChange lin;
  lin.new_coords = {"X", "Y", "Zt"};
  lin.forward = {parse("X + 0.2*Zt"), parse("Y - 0.3*X"), parse("0.5*X + Zt + 0.1*Y")};
  ChartChange par = parabolic_chart();

  const Model tid = transform_model(m, id), tlin = transform_model(m, lin), tpar = transform_model(m, par);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd qn = random_q(m, rng);
    for (const auto& [chart, model, tol] : {std::tuple{&id, &tid, 1e-14}, std::tuple{&lin, &tlin, 1e-10},
                                            std::tuple{&par, &tpar, 1e-8}}) {
      if (!tid.guards_satisfied(qn) || !model->guards_satisfied(qn)) continue;
      const EvaluatedFrame ft = model->evaluate_frame(qn);
      const Eigen::VectorXd vn = random_on_constraint(ft, rng);
      CHECK(covariance_check(m, *model, *chart, qn, vn) <= tol);
    }
  }

  // With the sign of σ flipped the nonlinear chart breaks covariance.
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd qn = random_q(m, rng);
    const EvaluatedFrame ft = tpar.evaluate_frame(qn);
    const Eigen::VectorXd vn = random_on_constraint(ft, rng);
    const Eigen::MatrixXd J = chart_jacobian(m, par, qn);
    const EvaluatedFrame f = m.evaluate_frame(chart_forward(m, par, qn));
    const Eigen::VectorXd R = reaction_plus_sigma(f, J * vn);
    worst = std::max(worst, (reaction_plus_sigma(ft, vn) - J.transpose() * R).norm() / (1.0 + R.norm()));
  }
  CHECK(worst > 1e-3);
}

TEST_CASE("chart inverse") {
  const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");
  ChartChange par = parabolic_chart();
  Eigen::VectorXd qn(3);
  qn << 0.7, -1.2, 0.4;
  const Eigen::VectorXd q = chart_forward(m, par, qn);
  CHECK(q[2] == doctest::Approx(0.4 - 0.049));
  CHECK((chart_inverse(m, par, q, q) - qn).norm() <= 1e-14);
  par.inverse = std::vector<Expr>{parse("x"), parse("y"), parse("z + 0.1*x^2")};
  CHECK((chart_inverse(m, par, q, q) - qn).norm() <= 1e-15);
  ChartChange bad = parabolic_chart();
  bad.forward.pop_back();
  CHECK_THROWS_AS(transform_model(m, bad), ModelError);
}

TEST_CASE("transformed trajectories match") {
  const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");
  const ChartChange par = parabolic_chart();
  const Model t = transform_model(m, par);
  Eigen::VectorXd q(3);
  q << 1, 1, 0;
  const EvaluatedFrame f = m.evaluate_frame(q);
  const Eigen::VectorXd v = project_velocity(f, Eigen::Vector3d(0.2, -0.1, 0.3));
  const Eigen::VectorXd qn = chart_inverse(m, par, q, q);
  const Eigen::VectorXd vn = chart_jacobian(m, par, qn).fullPivLu().solve(v);
  const Trajectory a = integrate(m, {q, v}, 1.0, 1e-3);
  const Trajectory b = integrate(t, {qn, vn}, 1.0, 1e-3);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(b.initial_projection_delta <= 1e-14);
  for (std::size_t j = 0; j < a.samples.size(); ++j) {
    const Eigen::VectorXd mapped = chart_forward(m, par, b.samples[j].q);
    CHECK((mapped - a.samples[j].q).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(a.samples[j].E - b.samples[j].E) <= 1e-6);
  }
}

TEST_CASE("report serialization") {
  std::mt19937_64 rng(13);
  const Model m = builtin("affine_particle", {{"c", 1.0}}, "z");
  const auto grid = random_grid(m, rng, 3);
  const nlohmann::json j = report_json(energy_conservation_test(m, grid));
  CHECK(j["verdict"] == "not_section");
  CHECK(j["grid_size"] == 3);
  CHECK(j["witness"]["q"].size() == 3);
  CHECK(j["tolerances"].contains("section"));
  CHECK(j["max_violation"].get<double>() > 0.0);

  const nlohmann::json fj = report_json(rad_fiber(m, grid[0]));
  CHECK(fj["rank"] == 1);
  CHECK(fj["fiber_dim"] == 2);
  const std::string text = dump_report(j);
  CHECK(nlohmann::json::parse(text) == j);
}
