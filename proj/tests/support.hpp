#pragma once

// Shared fixtures for the unit tests.

#include <Eigen/Dense>
#include <random>

#include "nhaff/model.hpp"
#include "nhaff/reaction.hpp"

namespace nhaff::testing {

inline ExprMatrix parse_matrix(const std::vector<std::vector<std::string>>& rows) {
  ExprMatrix out;
  for (const auto& row : rows) {
    std::vector<Expr> r;
    for (const auto& e : row) r.push_back(parse(e));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<Expr> parse_list(const std::vector<std::string>& items) {
  std::vector<Expr> out;
  for (const auto& e : items) out.push_back(parse(e));
  return out;
}

/// n = 4, k = 2 with configuration-dependent A, b, S and s, so every term of
/// ℓ and σ is exercised. A is diagonally dominant for |w| <= 2.
inline ModelSpec gyro_spec() {
  ModelSpec m;
  m.name = "gyro";
  m.n = 4;
  m.k = 2;
  m.coords = {"x", "y", "w", "u"};
  m.A = parse_matrix({{"2 + 0.5*cos(x)", "0.3*sin(y)", "0", "0.2*cos(u)"},
                      {"0.3*sin(y)", "1.5 + 0.2*x^2", "0.1*w", "0"},
                      {"0", "0.1*w", "1 + 0.5*cos(y)^2", "0"},
                      {"0.2*cos(u)", "0", "0", "1.2 + 0.1*sin(w)"}});
  m.b = parse_list({"y*w", "sin(x)", "x*y", "kappa*u"});
  m.V = parse("x^2*y + cos(w) + kappa*u^2");
  m.S = parse_matrix({{"1", "x", "0", "sin(y)"}, {"0", "cos(w)", "1", "y"}});
  m.s = parse_list({"x*y - 0.5", "sin(u)"});
  m.params = {{"kappa", 0.7}};
  return m;
}

inline Model gyro_model() { return Model(gyro_spec()); }

inline Eigen::VectorXd uniform_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Random configuration for the built-ins and the gyro model, away from guards.
inline Eigen::VectorXd random_q(const Model& m, std::mt19937_64& rng) {
  for (;;) {
    Eigen::VectorXd q = uniform_vector(rng, m.n(), -1.5, 1.5);
    if (m.spec().name == "sphere_cylinder") q[4] = std::uniform_real_distribution<double>(0.3, 2.8)(rng);
    if (m.spec().name == "affine_particle" && std::abs(q[1]) < 0.1) continue;
    if (m.guards_satisfied(q)) return q;
  }
}

/// ξ(q) + K c with c uniform in [−speed, speed]^r.
inline Eigen::VectorXd random_on_constraint(const EvaluatedFrame& f, std::mt19937_64& rng, double speed = 1.0) {
  const Eigen::MatrixXd K = kernel_basis(f);
  return xi(f) + K * uniform_vector(rng, static_cast<int>(K.cols()), -speed, speed);
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

inline ParamMap sphere_params(double omega = 0.5) {
  return {{"a", 1.0}, {"r", 2.0}, {"I", 0.4}, {"Omega", omega}, {"g", 9.8}};
}

/// Same system with (S, s) replaced by (P S, P s).
inline Model with_rows_mixed(const Model& m, const Eigen::MatrixXd& P) {
  ModelSpec spec = m.spec();
  ExprMatrix S(m.k(), std::vector<Expr>(m.n()));
  std::vector<Expr> s(m.k());
  for (int a = 0; a < m.k(); ++a) {
    for (int b = 0; b < m.k(); ++b) {
      for (int i = 0; i < m.n(); ++i) S[a][i] = S[a][i] + Expr::number(P(a, b)) * spec.S[b][i];
      s[a] = s[a] + Expr::number(P(a, b)) * spec.s[b];
    }
  }
  spec.S = S;
  spec.s = s;
  return Model(spec);
}

}  // namespace nhaff::testing
