#include "nhaff/model.hpp"

#include <cmath>

#include "nhaff/linalg.hpp"

namespace nhaff {

struct Model::Compiled {
  int n = 0;
  int k = 0;
  std::vector<CompiledExpr> A, dA;  // dA index: (h*n + i)*n + j
  std::vector<CompiledExpr> b, db;  // db index: i*n + j
  CompiledExpr V;
  std::vector<CompiledExpr> Vp;
  std::vector<CompiledExpr> S, dS;  // S: a*n + i;  dS: (j*k + a)*n + i
  std::vector<CompiledExpr> s, ds;  // ds: a*n + j
  std::vector<CompiledExpr> guards;
};

namespace {

void check_shape(const ModelSpec& m) {
  if (m.n <= 0) throw ModelError("model dimension n must be positive");
  if (m.k < 1 || m.k >= m.n)
    throw ModelError("number of constraints k must satisfy 1 <= k < n (n=" + std::to_string(m.n) +
                     ", k=" + std::to_string(m.k) + ")");
  auto n = static_cast<std::size_t>(m.n);
  auto k = static_cast<std::size_t>(m.k);
  if (m.coords.size() != n) throw ModelError("coords has " + std::to_string(m.coords.size()) + " names, expected n");
  if (m.A.size() != n) throw ModelError("A must have n rows");
  for (const auto& row : m.A)
    if (row.size() != n) throw ModelError("A must be n x n");
  if (m.b.size() != n) throw ModelError("b must have n entries");
  if (m.S.size() != k) throw ModelError("S must have k rows");
  for (const auto& row : m.S)
    if (row.size() != n) throw ModelError("S must be k x n");
  if (m.s.size() != k) throw ModelError("s must have k entries");
  std::set<std::string, std::less<>> names(m.coords.begin(), m.coords.end());
  if (names.size() != n) throw ModelError("coordinate names must be distinct");
  for (const auto& [p, _] : m.params)
    if (names.count(p)) throw ModelError("parameter '" + p + "' shadows a coordinate");
}

void check_names(const ModelSpec& m, const Expr& e, const char* where) {
  for (const auto& name : free_names(e)) {
    bool known = m.params.count(name) > 0;
    for (const auto& c : m.coords) known = known || c == name;
    if (!known) throw ModelError(std::string("missing parameter '") + name + "' (used in " + where + ")");
  }
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  check_shape(spec_);
  for (const auto& row : spec_.A)
    for (const auto& e : row) check_names(spec_, e, "A");
  for (const auto& e : spec_.b) check_names(spec_, e, "b");
  check_names(spec_, spec_.V, "V");
  for (const auto& row : spec_.S)
    for (const auto& e : row) check_names(spec_, e, "S");
  for (const auto& e : spec_.s) check_names(spec_, e, "s");
  for (const auto& e : spec_.guards) check_names(spec_, e, "guards");

  slots_ = spec_.coords;
  for (const auto& [p, _] : spec_.params) slots_.push_back(p);

  auto c = std::make_shared<Compiled>();
  const int n = spec_.n, k = spec_.k;
  c->n = n;
  c->k = k;
  auto compile = [&](const Expr& e) { return CompiledExpr(e, slots_); };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c->A.push_back(compile(spec_.A[i][j]));
  for (int h = 0; h < n; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c->dA.push_back(compile(diff(spec_.A[i][j], spec_.coords[h])));
  for (int i = 0; i < n; ++i) {
    c->b.push_back(compile(spec_.b[i]));
    for (int j = 0; j < n; ++j) c->db.push_back(compile(diff(spec_.b[i], spec_.coords[j])));
  }
  c->V = compile(spec_.V);
  for (int i = 0; i < n; ++i) c->Vp.push_back(compile(diff(spec_.V, spec_.coords[i])));
  for (int a = 0; a < k; ++a)
    for (int i = 0; i < n; ++i) c->S.push_back(compile(spec_.S[a][i]));
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < k; ++a)
      for (int i = 0; i < n; ++i) c->dS.push_back(compile(diff(spec_.S[a][i], spec_.coords[j])));
  for (int a = 0; a < k; ++a) {
    c->s.push_back(compile(spec_.s[a]));
    for (int j = 0; j < n; ++j) c->ds.push_back(compile(diff(spec_.s[a], spec_.coords[j])));
  }
  for (const auto& g : spec_.guards) c->guards.push_back(compile(g));
  compiled_ = std::move(c);
}

std::vector<double> Model::slot_values(const Eigen::VectorXd& q) const {
  if (q.size() != spec_.n)
    throw ModelError("configuration has " + std::to_string(q.size()) + " entries, expected " +
                     std::to_string(spec_.n));
  std::vector<double> values(q.data(), q.data() + q.size());
  for (const auto& [_, v] : spec_.params) values.push_back(v);
  return values;
}

EvaluatedFrame Model::evaluate_frame(const Eigen::VectorXd& q) const {
  const Compiled& c = *compiled_;
  const int n = c.n, k = c.k;
  const std::vector<double> x = slot_values(q);
  const char* where = "A";
  auto ev = [&](const CompiledExpr& e) { return e(x); };

  EvaluatedFrame f;
  f.q = q;
  try {
    f.A.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) f.A(i, j) = ev(c.A[i * n + j]);
    where = "dA";
    f.dA.assign(n, Eigen::MatrixXd::Zero(n, n));
    for (int h = 0; h < n; ++h)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) f.dA[h](i, j) = ev(c.dA[(h * n + i) * n + j]);
    where = "b";
    f.b.resize(n);
    f.db.resize(n, n);
    for (int i = 0; i < n; ++i) {
      f.b[i] = ev(c.b[i]);
      for (int j = 0; j < n; ++j) f.db(i, j) = ev(c.db[i * n + j]);
    }
    where = "V";
    f.V = ev(c.V);
    f.Vp.resize(n);
    for (int i = 0; i < n; ++i) f.Vp[i] = ev(c.Vp[i]);
    where = "S";
    f.S.resize(k, n);
    for (int a = 0; a < k; ++a)
      for (int i = 0; i < n; ++i) f.S(a, i) = ev(c.S[a * n + i]);
    f.dS.assign(n, Eigen::MatrixXd::Zero(k, n));
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < k; ++a)
        for (int i = 0; i < n; ++i) f.dS[j](a, i) = ev(c.dS[(j * k + a) * n + i]);
    where = "s";
    f.s.resize(k);
    f.ds.resize(k, n);
    for (int a = 0; a < k; ++a) {
      f.s[a] = ev(c.s[a]);
      for (int j = 0; j < n; ++j) f.ds(a, j) = ev(c.ds[a * n + j]);
    }
  } catch (const EvalError& e) {
    throw EvalError(std::string(e.what()) + " while evaluating " + where + " at q = " + format_vector(q));
  }

  Eigen::LLT<Eigen::MatrixXd> llt(f.A);
  if (llt.info() != Eigen::Success)
    throw ModelError("kinetic matrix A is not positive definite at q = " + format_vector(q));
  f.Ainv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  return f;
}

Eigen::VectorXd Model::guard_values(const Eigen::VectorXd& q) const {
  const std::vector<double> x = slot_values(q);
  Eigen::VectorXd g(compiled_->guards.size());
  for (std::size_t i = 0; i < compiled_->guards.size(); ++i) g[static_cast<Eigen::Index>(i)] = compiled_->guards[i](x);
  return g;
}

bool Model::guards_satisfied(const Eigen::VectorXd& q) const {
  try {
    const Eigen::VectorXd g = guard_values(q);
    return (g.array().abs() > kGuardEps).all() && g.allFinite();
  } catch (const EvalError&) {
    return false;
  }
}

double Model::lagrangian(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  Bindings bind(spec_.params.begin(), spec_.params.end());
  for (int i = 0; i < spec_.n; ++i) bind[spec_.coords[i]] = q[i];
  double L = -eval(spec_.V, bind);
  for (int i = 0; i < spec_.n; ++i) {
    L -= eval(spec_.b[i], bind) * v[i];
    for (int j = 0; j < spec_.n; ++j) L += 0.5 * v[i] * eval(spec_.A[i][j], bind) * v[j];
  }
  return L;
}

Model Model::with_potential(const Expr& V) const {
  ModelSpec copy = spec_;
  copy.V = V;
  return Model(std::move(copy));
}

EvaluatedFrame evaluate_frame(const Model& m, const Eigen::VectorXd& q) { return m.evaluate_frame(q); }

ValidationReport validate(const Model& m, std::span<const Eigen::VectorXd> probes) {
  if (probes.empty()) throw ModelError("validate needs at least one probe configuration");
  ValidationReport rep;
  const int r = m.r();
  if (!(1 < r && r < m.n()))
    rep.warnings.push_back("rank condition 1 < r < n violated (n=" + std::to_string(m.n()) +
                           ", r=" + std::to_string(r) + ")");
  rep.pass = true;
  for (const auto& q : probes) {
    ProbeReport p;
    p.q = q;
    p.guards_ok = m.guards_satisfied(q);
    if (!p.guards_ok) {
      rep.warnings.push_back("guard violation at q = " + format_vector(q));
      rep.pass = false;
    }
    Bindings bind(m.spec().params.begin(), m.spec().params.end());
    for (int i = 0; i < m.n(); ++i) bind[m.spec().coords[i]] = q[i];
    Eigen::MatrixXd A(m.n(), m.n());
    for (int i = 0; i < m.n(); ++i)
      for (int j = 0; j < m.n(); ++j) A(i, j) = eval(m.spec().A[i][j], bind);
    const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
      throw ModelError("kinetic matrix A is not symmetric at q = " + format_vector(q));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
    p.min_eig_A = eig.eigenvalues().minCoeff();
    Eigen::MatrixXd S(m.k(), m.n());
    for (int a = 0; a < m.k(); ++a)
      for (int i = 0; i < m.n(); ++i) S(a, i) = eval(m.spec().S[a][i], bind);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
    p.min_sv_S = svd.singularValues().minCoeff();
    p.pass = p.guards_ok && p.min_eig_A > 1e-10 && p.min_sv_S > 1e-10;
    rep.pass = rep.pass && p.pass;
    rep.probes.push_back(p);
  }
  return rep;
}

Eigen::VectorXd project_velocity(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  const ConstraintGram gram(f.S, f.Ainv);
  const Eigen::VectorXd residual = f.S * v + f.s;
  return v - gram.ainv_st() * gram.solve(residual);
}

double constraint_residual(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  return (f.S * v + f.s).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------- built-ins

namespace {

Expr ex(std::string_view text) { return parse(text); }

Expr resolve_potential(const std::optional<std::string>& potential, std::string_view fallback,
                       std::string_view harmonic) {
  std::string text = potential.value_or(std::string(fallback));
  if (text == "zero") text = "0";
  else if (text == "harmonic") text = std::string(harmonic);
  else if (text == "gravity") text = "g*z";
  return parse(text);
}

void require(const ParamMap& params, std::initializer_list<const char*> names, std::string_view model) {
  for (const char* p : names)
    if (!params.count(p))
      throw ModelError("missing parameter '" + std::string(p) + "' for built-in " + std::string(model));
}

}  // namespace

Model builtin(std::string_view name, const ParamMap& params, std::optional<std::string> potential) {
  ModelSpec m;
  m.name = std::string(name);
  m.params = params;
  if (name == "affine_particle") {
    require(params, {"c"}, name);
    m.n = 3;
    m.k = 1;
    m.coords = {"x", "y", "z"};
    m.A = {{ex("1"), ex("0"), ex("0")}, {ex("0"), ex("1"), ex("0")}, {ex("0"), ex("0"), ex("1")}};
    m.b = {ex("0"), ex("0"), ex("0")};
    m.V = resolve_potential(potential, "0", "0.5*(x^2 + y^2)");
    m.S = {{ex("-y"), ex("x"), ex("1")}};
    m.s = {ex("-c")};
    m.guards = {ex("y")};
  } else if (name == "sphere_cylinder") {
    require(params, {"a", "r", "I", "Omega"}, name);
    m.n = 5;
    m.k = 2;
    m.coords = {"z", "gamma", "phi", "psi", "theta"};
    const Expr zero = ex("0");
    m.A = {{ex("1"), zero, zero, zero, zero},
           {zero, ex("r^2"), zero, zero, zero},
           {zero, zero, ex("I"), ex("I*cos(theta)"), zero},
           {zero, zero, ex("I*cos(theta)"), ex("I"), zero},
           {zero, zero, zero, zero, ex("I")}};
    m.b = {zero, zero, zero, zero, zero};
    m.V = resolve_potential(potential, "g*z", "0.5*z^2");
    // Row order (vertical rolling, tangential rolling) so that s = (0, -(r+a)Ω).
    m.S = {{ex("1"), zero, zero, ex("a*sin(theta)*cos(gamma - phi)"), ex("a*sin(gamma - phi)")},
           {zero, ex("r"), ex("a"), ex("a*cos(theta)"), zero}};
    m.s = {zero, ex("-(r + a)*Omega")};
    m.guards = {ex("sin(theta)")};
  } else {
    throw ModelError("unknown built-in model '" + std::string(name) + "'");
  }
  return Model(std::move(m));
}

}  // namespace nhaff
