#include "nhaff/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "nhaff/linalg.hpp"
#include "nhaff/reaction.hpp"

namespace nhaff {

int default_sample_count(const Model& m) {
  const int r = m.r();
  return std::max(3 * m.k() + 5, (r + 1) * (r + 2) / 2 + 1);
}

double VelocitySampler::uniform(double lo, double hi) {
  // 53 random bits mapped to [0,1); independent of the standard library's
  // distribution implementation.
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Eigen::VectorXd VelocitySampler::on_constraint(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& xi_q,
                                               double speed) {
  Eigen::VectorXd c(kernel.cols());
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = uniform(-speed, speed);
  return xi_q + kernel * c;
}

Eigen::VectorXd VelocitySampler::off_constraint(const EvaluatedFrame& f, const Eigen::MatrixXd& kernel,
                                                const Eigen::VectorXd& xi_q, double speed) {
  Eigen::VectorXd v = on_constraint(kernel, xi_q, speed);
  Eigen::VectorXd w(f.k());
  for (Eigen::Index a = 0; a < w.size(); ++a) w[a] = uniform(0.5 * speed, speed) * (a % 2 ? -1.0 : 1.0);
  return v + f.S.transpose() * w;
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- fields

VectorFieldSpec parse_field(std::string_view text) {
  VectorFieldSpec spec;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] == '(') ++depth;
    if (i < text.size() && text[i] == ')') --depth;
    if (i == text.size() || (text[i] == ',' && depth == 0)) {
      spec.components.push_back(parse(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  return spec;
}

namespace {

std::vector<double> slot_values_for(const Eigen::VectorXd& q, const std::vector<double>& params) {
  std::vector<double> x(q.data(), q.data() + q.size());
  x.insert(x.end(), params.begin(), params.end());
  return x;
}

std::vector<double> param_values(const Model& m) {
  std::vector<double> p;
  for (const auto& [_, v] : m.spec().params) p.push_back(v);
  return p;
}

}  // namespace

FieldEvaluator::FieldEvaluator(const Model& m, const VectorFieldSpec& spec, std::string label)
    : label_(std::move(label)) {
  const int n = m.n();
  if (static_cast<int>(spec.components.size()) != n)
    throw ModelError("vector field has " + std::to_string(spec.components.size()) + " components, model has n = " +
                     std::to_string(n));
  const std::vector<std::string> slots(m.slots().begin(), m.slots().end());
  auto values = std::make_shared<std::vector<CompiledExpr>>();
  auto jac = std::make_shared<std::vector<CompiledExpr>>();
  for (int i = 0; i < n; ++i) {
    for (const auto& name : free_names(spec.components[i])) {
      bool known = false;
      for (const auto& s : slots) known = known || s == name;
      if (!known) throw ModelError("vector field uses unknown name '" + name + "'");
    }
    values->emplace_back(spec.components[i], slots);
    for (int j = 0; j < n; ++j) jac->emplace_back(diff(spec.components[i], m.spec().coords[j]), slots);
  }
  auto params = std::make_shared<const std::vector<double>>(param_values(m));
  if (label_.empty()) {
    for (int i = 0; i < n; ++i) label_ += (i ? "," : "") + to_string(spec.components[i]);
  }
  value_ = [values, params, n](const EvaluatedFrame& f) {
    const auto x = slot_values_for(f.q, *params);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = (*values)[i](x);
    return y;
  };
  jacobian_ = [jac, params, n](const EvaluatedFrame& f) {
    const auto x = slot_values_for(f.q, *params);
    Eigen::MatrixXd J(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) J(i, j) = (*jac)[i * n + j](x);
    return J;
  };
}

FieldEvaluator::FieldEvaluator(ValueFn value, std::string label) : value_(std::move(value)), label_(std::move(label)) {}

FieldEvaluator FieldEvaluator::canonical_xi() {
  return FieldEvaluator([](const EvaluatedFrame& f) { return xi(f); }, "xi");
}

Eigen::MatrixXd FieldEvaluator::jacobian(const EvaluatedFrame& f) const {
  if (!jacobian_) throw std::logic_error("field '" + label_ + "' has no symbolic Jacobian");
  return jacobian_(f);
}

std::optional<VectorFieldSpec> preset_field(const Model& m, std::string_view name) {
  const std::string& model = m.spec().name;
  auto make = [](std::initializer_list<const char*> comps) {
    VectorFieldSpec s;
    for (const char* c : comps) s.components.push_back(parse(c));
    return s;
  };
  if (model == "sphere_cylinder") {
    // coordinates (z, gamma, phi, psi, theta)
    if (name == "F") return make({"0", "-a/r", "1", "0", "0"});
    if (name == "K")
      return make({"0", "-z/r^2", "a*cos(theta)*sin(gamma - phi)/(I*sin(theta))",
                   "-a*sin(gamma - phi)/(I*sin(theta))", "a*cos(gamma - phi)/I"});
    if (name == "D1") return make({"0", "a", "-r", "0", "0"});
    if (name == "D2") return make({"-a*sin(gamma - phi)", "0", "0", "0", "1"});
    if (name == "D3") return make({"-a*cos(gamma - phi)*sin(theta)", "0", "-cos(theta)", "1", "0"});
  } else if (model == "affine_particle") {
    if (name == "D1") return make({"1", "0", "y"});
    if (name == "D2") return make({"x", "y", "0"});
  }
  return std::nullopt;
}

FieldEvaluator resolve_field(const Model& m, std::string_view text) {
  if (text == "xi") return FieldEvaluator::canonical_xi();
  if (auto preset = preset_field(m, text)) return FieldEvaluator(m, *preset, std::string(text));
  return FieldEvaluator(m, parse_field(text));
}

// ---------------------------------------------------------------- grids

std::vector<GridAxis> parse_grid(std::string_view text) {
  std::vector<GridAxis> axes;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string item(text.substr(start, end - start));
    GridAxis ax;
    char tail = 0;
    if (std::sscanf(item.c_str(), "%lf:%lf:%d%c", &ax.lo, &ax.hi, &ax.count, &tail) != 3 || ax.count < 1)
      throw std::invalid_argument("malformed grid axis '" + item + "' (expected lo:hi:count)");
    axes.push_back(ax);
    start = end + 1;
  }
  return axes;
}

std::vector<Eigen::VectorXd> uniform_grid(const Model& m, std::span<const GridAxis> axes, double margin) {
  if (static_cast<int>(axes.size()) != m.n())
    throw std::invalid_argument("grid has " + std::to_string(axes.size()) + " axes, model has n = " +
                                std::to_string(m.n()));
  std::vector<Eigen::VectorXd> out;
  std::vector<int> idx(axes.size(), 0);
  for (;;) {
    Eigen::VectorXd q(m.n());
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const auto& ax = axes[i];
      q[static_cast<Eigen::Index>(i)] =
          ax.count == 1 ? ax.lo : ax.lo + (ax.hi - ax.lo) * idx[i] / static_cast<double>(ax.count - 1);
    }
    bool keep = true;
    try {
      keep = (m.guard_values(q).array().abs() >= margin).all();
    } catch (const EvalError&) {
      keep = false;
    }
    if (keep) out.push_back(q);
    // last axis varies fastest
    std::size_t d = axes.size();
    while (d > 0) {
      --d;
      if (++idx[d] < axes[d].count) break;
      idx[d] = 0;
      if (d == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

// ---------------------------------------------------------------- fibers

namespace {

void require_guards(const Model& m, const Eigen::VectorXd& q) {
  if (!m.guards_satisfied(q)) throw ModelError("configuration violates a domain guard: q = " + format_vector(q));
}

}  // namespace

double span_distance(const Eigen::MatrixXd& basis, const Eigen::VectorXd& w) {
  const double norm = w.norm();
  if (norm == 0.0) return 0.0;
  if (basis.cols() == 0) return 1.0;
  return (w - basis * (basis.transpose() * w)).norm() / norm;
}

FiberReport rad_fiber(const Model& m, const Eigen::VectorXd& q, const SamplerOptions& opts) {
  require_guards(m, q);
  const int n = m.n();
  const int N = opts.samples > 0 ? opts.samples : default_sample_count(m);
  const EvaluatedFrame f = m.evaluate_frame(q);
  const Eigen::MatrixXd K = kernel_basis(f);
  const Eigen::VectorXd x = xi(f);
  VelocitySampler sampler(opts.seed);

  Eigen::MatrixXd stacked(N, n);
  double max_norm = 0.0;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd v = sampler.on_constraint(K, x, opts.speed);
    const Eigen::VectorXd R = reaction_extended(f, v).R;
    stacked.row(i) = R.transpose();
    max_norm = std::max(max_norm, R.norm());
  }

  FiberReport rep;
  rep.q = q;
  rep.samples = N;
  rep.tol_rank = opts.tol_rank;
  rep.speed = opts.speed;
  rep.max_reaction_norm = max_norm;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] < 1e-14) {
    rep.zero_reaction = true;
    rep.d = 0;
  } else {
    while (rep.d < sv.size() && sv[rep.d] > opts.tol_rank * sv[0]) ++rep.d;
  }
  rep.reaction_span = svd.matrixV().leftCols(rep.d);
  rep.rad_fiber = svd.matrixV().rightCols(n - rep.d);
  return rep;
}

// ---------------------------------------------------------------- verdicts

SectionVerdict is_section_of_rad(const Model& m, const FieldEvaluator& Z, std::span<const Eigen::VectorXd> grid,
                                 const SamplerOptions& opts) {
  SectionVerdict out;
  out.field = Z.label();
  out.grid_size = grid.size();
  out.opts = opts;
  out.samples_per_point = opts.samples > 0 ? opts.samples : default_sample_count(m);
  out.max_violation = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Eigen::VectorXd& q = grid[g];
    require_guards(m, q);
    const EvaluatedFrame f = m.evaluate_frame(q);
    const Eigen::MatrixXd K = kernel_basis(f);
    const Eigen::VectorXd x = xi(f);
    const Eigen::VectorXd z = Z.value(f);
    VelocitySampler sampler(point_seed(opts.seed, g));
    for (int i = 0; i < out.samples_per_point; ++i) {
      const Eigen::VectorXd v = sampler.on_constraint(K, x, opts.speed);
      const Eigen::VectorXd R = reaction_extended(f, v).R;
      const double violation = std::abs(R.dot(z)) / std::max(1.0, R.norm() * z.norm());
      if (out.witness_q.size() == 0 || violation > out.max_violation) {
        out.max_violation = violation;
        out.witness_q = q;
        out.witness_v = v;
      }
    }
  }
  out.section = out.max_violation <= opts.tol_section;
  return out;
}

SectionVerdict energy_conservation_test(const Model& m, std::span<const Eigen::VectorXd> grid,
                                        const SamplerOptions& opts) {
  return is_section_of_rad(m, FieldEvaluator::canonical_xi(), grid, opts);
}

double lifted_lagrangian_derivative(const EvaluatedFrame& f, const Eigen::VectorXd& v, const Eigen::VectorXd& Y,
                                    const Eigen::MatrixXd& JY) {
  const int n = f.n();
  Eigen::VectorXd dLdq(n);
  for (int i = 0; i < n; ++i) dLdq[i] = 0.5 * v.dot(f.dA[i] * v) - f.db.col(i).dot(v) - f.Vp[i];
  const Eigen::VectorXd p = f.A * v - f.b;
  return Y.dot(dLdq) + (JY * v).dot(p);
}

GaugeVerdict gauge_symmetry_test(const Model& m, const FieldEvaluator& Y, std::span<const Eigen::VectorXd> grid,
                                 const SamplerOptions& opts, bool off_constraint) {
  GaugeVerdict out;
  out.field = Y.label();
  out.grid_size = grid.size();
  out.off_constraint = off_constraint;
  out.tol = opts.tol_section;
  out.samples_per_point = opts.samples > 0 ? opts.samples : default_sample_count(m);
  const int n = m.n();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Eigen::VectorXd& q = grid[g];
    require_guards(m, q);
    const EvaluatedFrame f = m.evaluate_frame(q);
    const Eigen::MatrixXd K = kernel_basis(f);
    const Eigen::VectorXd x = xi(f);
    const Eigen::VectorXd y = Y.value(f);
    const Eigen::MatrixXd JY = Y.jacobian(f);
    VelocitySampler sampler(point_seed(opts.seed, g));
    for (int i = 0; i < out.samples_per_point; ++i) {
      const Eigen::VectorXd v =
          off_constraint ? sampler.off_constraint(f, K, x, opts.speed) : sampler.on_constraint(K, x, opts.speed);
      Eigen::VectorXd dLdq(n);
      for (int j = 0; j < n; ++j) dLdq[j] = 0.5 * v.dot(f.dA[j] * v) - f.db.col(j).dot(v) - f.Vp[j];
      const Eigen::VectorXd p = f.A * v - f.b;
      const double t1 = y.dot(dLdq);
      const double t2 = (JY * v).dot(p);
      const double violation = std::abs(t1 + t2) / std::max(1.0, std::abs(t1) + std::abs(t2));
      if (out.witness_q.size() == 0 || violation > out.max_violation) {
        out.max_violation = violation;
        out.witness_q = q;
        out.witness_v = v;
      }
    }
  }
  out.gauge_symmetry = out.max_violation <= out.tol;
  return out;
}

DriftReport momentum_drift(const Trajectory& traj, const Model& m, const FieldEvaluator& Y) {
  if (traj.n != m.n()) throw ModelError("trajectory and model dimensions differ");
  DriftReport rep;
  const auto& S = traj.samples;
  std::vector<double> expected(S.size(), 0.0);
  for (std::size_t j = 0; j < S.size(); ++j) {
    const EvaluatedFrame f = m.evaluate_frame(S[j].q);
    const Eigen::VectorXd y = Y.value(f);
    rep.J.push_back(momentum(f, S[j].v, y));
    if (Y.symbolic()) expected[j] = lifted_lagrangian_derivative(f, S[j].v, y, Y.jacobian(f)) + S[j].R.dot(y);
  }
  if (rep.J.empty()) return rep;
  rep.J0 = rep.J.front();
  for (double J : rep.J) rep.max_abs_drift = std::max(rep.max_abs_drift, std::abs(J - rep.J0));
  rep.max_rel_drift = rep.max_abs_drift / (1.0 + std::abs(rep.J0));
  if (Y.symbolic()) {
    for (std::size_t j = 1; j + 1 < S.size(); ++j) {
      const double dJdt = (rep.J[j + 1] - rep.J[j - 1]) / (S[j + 1].t - S[j - 1].t);
      rep.max_balance_residual = std::max(rep.max_balance_residual, std::abs(dJdt - expected[j]));
    }
  }
  return rep;
}

GeneratorProjection generator_projection(const Model& m, const FieldEvaluator& Y, const Eigen::VectorXd& q) {
  require_guards(m, q);
  const EvaluatedFrame f = m.evaluate_frame(q);
  const Eigen::VectorXd y = Y.value(f);
  GeneratorProjection out;
  out.PiAY = projector_D(f) * y;
  out.obstruction = (out.PiAY - y).dot(f.A * xi(f) - f.b);
  return out;
}

// ---------------------------------------------------------------- charts

namespace {

void check_chart(const Model& m, const ChartChange& c) {
  const auto n = static_cast<std::size_t>(m.n());
  if (c.new_coords.size() != n || c.forward.size() != n)
    throw ModelError("chart change must have n new coordinates and n forward expressions");
  if (c.inverse && c.inverse->size() != n) throw ModelError("chart inverse must have n expressions");
}

}  // namespace

Model transform_model(const Model& m, const ChartChange& chart) {
  check_chart(m, chart);
  const ModelSpec& s = m.spec();
  const int n = s.n, k = s.k;
  std::map<std::string, Expr, std::less<>> repl;
  for (int i = 0; i < n; ++i) repl[s.coords[i]] = chart.forward[i];
  auto sub = [&](const Expr& e) { return substitute(e, repl); };

  ExprMatrix J(n, std::vector<Expr>(n));  // J[p][i] = ∂C_p/∂q̃_i
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < n; ++i) J[p][i] = diff(chart.forward[p], chart.new_coords[i]);

  ModelSpec t;
  t.name = s.name.empty() ? "transformed" : s.name + "~";
  t.n = n;
  t.k = k;
  t.coords = chart.new_coords;
  t.params = s.params;

  ExprMatrix A(n, std::vector<Expr>(n));
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) A[p][q] = sub(s.A[p][q]);
  t.A.assign(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Expr acc;
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) acc = acc + J[p][i] * A[p][q] * J[q][j];
      t.A[i][j] = acc;
      t.A[j][i] = acc;
    }
  t.b.assign(n, Expr());
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < n; ++p) t.b[i] = t.b[i] + J[p][i] * sub(s.b[p]);
  t.V = sub(s.V);
  t.S.assign(k, std::vector<Expr>(n));
  for (int a = 0; a < k; ++a)
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < n; ++p) t.S[a][i] = t.S[a][i] + sub(s.S[a][p]) * J[p][i];
  for (int a = 0; a < k; ++a) t.s.push_back(sub(s.s[a]));
  for (const auto& g : s.guards) t.guards.push_back(sub(g));
  return Model(std::move(t));
}

Eigen::VectorXd chart_forward(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new) {
  check_chart(m, chart);
  Bindings bind(m.spec().params.begin(), m.spec().params.end());
  for (int i = 0; i < m.n(); ++i) bind[chart.new_coords[i]] = q_new[i];
  Eigen::VectorXd q(m.n());
  for (int i = 0; i < m.n(); ++i) q[i] = eval(chart.forward[i], bind);
  return q;
}

Eigen::MatrixXd chart_jacobian(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new) {
  check_chart(m, chart);
  Bindings bind(m.spec().params.begin(), m.spec().params.end());
  for (int i = 0; i < m.n(); ++i) bind[chart.new_coords[i]] = q_new[i];
  Eigen::MatrixXd J(m.n(), m.n());
  for (int p = 0; p < m.n(); ++p)
    for (int i = 0; i < m.n(); ++i) J(p, i) = eval(diff(chart.forward[p], chart.new_coords[i]), bind);
  return J;
}

Eigen::VectorXd chart_inverse(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_old,
                              const Eigen::VectorXd& guess) {
  check_chart(m, chart);
  if (chart.inverse) {
    Bindings bind(m.spec().params.begin(), m.spec().params.end());
    for (int i = 0; i < m.n(); ++i) bind[m.spec().coords[i]] = q_old[i];
    Eigen::VectorXd out(m.n());
    for (int i = 0; i < m.n(); ++i) out[i] = eval((*chart.inverse)[i], bind);
    return out;
  }
  Eigen::VectorXd x = guess;
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd r = chart_forward(m, chart, x) - q_old;
    if (r.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + q_old.cwiseAbs().maxCoeff())) return x;
    const Eigen::MatrixXd J = chart_jacobian(m, chart, x);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) throw ModelError("chart Jacobian is not invertible at " + format_vector(x));
    x -= lu.solve(r);
  }
  const Eigen::VectorXd r = chart_forward(m, chart, x) - q_old;
  if (r.cwiseAbs().maxCoeff() > 1e-10 * (1.0 + q_old.cwiseAbs().maxCoeff()))
    throw ModelError("Newton inversion of the chart change did not converge");
  return x;
}

double covariance_check(const Model& m, const Model& transformed, const ChartChange& chart,
                        const Eigen::VectorXd& q_new, const Eigen::VectorXd& v_new) {
  const Eigen::MatrixXd J = chart_jacobian(m, chart, q_new);
  if (!Eigen::FullPivLU<Eigen::MatrixXd>(J).isInvertible())
    throw ModelError("chart Jacobian is not invertible at " + format_vector(q_new));
  const EvaluatedFrame ft = transformed.evaluate_frame(q_new);
  const Eigen::VectorXd Rt = reaction_force(ft, v_new).R;
  const Eigen::VectorXd q = chart_forward(m, chart, q_new);
  const Eigen::VectorXd v = J * v_new;
  const EvaluatedFrame f = m.evaluate_frame(q);
  const Eigen::VectorXd R = reaction_extended(f, v).R;
  return (Rt - J.transpose() * R).norm() / (1.0 + R.norm());
}

double covariance_check(const Model& m, const ChartChange& chart, const Eigen::VectorXd& q_new,
                        const Eigen::VectorXd& v_new) {
  const Model transformed = transform_model(m, chart);
  return covariance_check(m, transformed, chart, q_new, v_new);
}

}  // namespace nhaff
