#include "nhaff/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "nhaff/linalg.hpp"
#include "nhaff/reaction.hpp"

namespace nhaff {

double energy(const EvaluatedFrame& f, const Eigen::VectorXd& v) { return 0.5 * v.dot(f.A * v) + f.V; }

double momentum(const EvaluatedFrame& f, const Eigen::VectorXd& v, const Eigen::VectorXd& Y) {
  return (f.A * v - f.b).dot(Y);
}

Eigen::VectorXd acceleration_extended(const EvaluatedFrame& f, const Eigen::VectorXd& v) {
  const Eigen::VectorXd lambda = multiplier_extended(f, v);
  return f.Ainv * (f.S.transpose() * lambda - ell(f, v));
}

Eigen::VectorXd acceleration(const EvaluatedFrame& f, const Eigen::VectorXd& v, double constraint_tol) {
  require_on_constraint(f, v, constraint_tol);
  return acceleration_extended(f, v);
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Completed: return "completed";
    case Termination::GuardStop: return "guard_stop";
    case Termination::SolverError: return "solver_error";
  }
  return "?";
}

TrajectorySample make_sample(const EvaluatedFrame& f, double t, const Eigen::VectorXd& v) {
  TrajectorySample s;
  s.t = t;
  s.q = f.q;
  s.v = v;
  s.E = energy(f, v);
  s.residual = constraint_residual(f, v);
  s.R = reaction_extended(f, v).R;
  s.work_rate = s.R.dot(v);
  s.xi_work_rate = s.R.dot(xi(f));
  return s;
}

namespace {

bool guard_crossed(const Eigen::VectorXd& g0, const Eigen::VectorXd& g) {
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i]) || std::abs(g[i]) <= kGuardEps) return true;
    if ((g[i] > 0) != (g0[i] > 0)) return true;
  }
  return false;
}

}  // namespace

Trajectory integrate(const Model& m, const State& s0, double t_end, double dt, const IntegrateOptions& opts) {
  if (!(dt > 0.0)) throw ModelError("time step must be positive");
  if (opts.stride < 1) throw ModelError("stride must be at least 1");
  if (s0.q.size() != m.n() || s0.v.size() != m.n()) throw ModelError("initial state has wrong dimension");
  if (!m.guards_satisfied(s0.q)) throw ModelError("initial configuration violates a domain guard");

  Trajectory traj;
  traj.n = m.n();
  traj.dt = dt;
  traj.stride = opts.stride;
  traj.projected = opts.project;

  const Eigen::VectorXd g0 = m.guard_values(s0.q);
  Eigen::VectorXd q = s0.q;
  EvaluatedFrame f = m.evaluate_frame(q);
  Eigen::VectorXd v = project_velocity(f, s0.v);
  traj.initial_projection_delta = (v - s0.v).cwiseAbs().maxCoeff();
  traj.samples.push_back(make_sample(f, 0.0, v));

  const long steps = std::lround(t_end / dt);
  auto rhs = [&](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv) {
    return acceleration_extended(m.evaluate_frame(qq), vv);
  };

  try {
    for (long step = 1; step <= steps; ++step) {
      const Eigen::VectorXd a1 = rhs(q, v);
      const Eigen::VectorXd q2 = q + 0.5 * dt * v, v2 = v + 0.5 * dt * a1;
      const Eigen::VectorXd a2 = rhs(q2, v2);
      const Eigen::VectorXd q3 = q + 0.5 * dt * v2, v3 = v + 0.5 * dt * a2;
      const Eigen::VectorXd a3 = rhs(q3, v3);
      const Eigen::VectorXd q4 = q + dt * v3, v4 = v + dt * a3;
      const Eigen::VectorXd a4 = rhs(q4, v4);
      Eigen::VectorXd q_next = q + (dt / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
      Eigen::VectorXd v_next = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);

      if (!q_next.allFinite() || !v_next.allFinite()) {
        traj.termination = Termination::SolverError;
        traj.message = "non-finite state at t = " + std::to_string(step * dt);
        return traj;
      }
      if (guard_crossed(g0, m.guard_values(q_next))) {
        traj.termination = Termination::GuardStop;
        traj.message = "domain guard reached at t = " + std::to_string(step * dt);
        if (traj.samples.back().t < (step - 1) * dt) traj.samples.push_back(make_sample(f, (step - 1) * dt, v));
        return traj;
      }
      q = std::move(q_next);
      f = m.evaluate_frame(q);
      v = opts.project ? project_velocity(f, v_next) : std::move(v_next);
      if (step % opts.stride == 0 || step == steps) traj.samples.push_back(make_sample(f, step * dt, v));
    }
  } catch (const RankDropError& e) {
    traj.termination = Termination::SolverError;
    traj.message = e.what();
  } catch (const EvalError& e) {
    traj.termination = Termination::SolverError;
    traj.message = e.what();
  }
  return traj;
}

std::vector<double> cumulative_work(const Trajectory& traj) {
  std::vector<double> w(traj.samples.size(), 0.0);
  for (std::size_t j = 1; j < traj.samples.size(); ++j) {
    const auto& a = traj.samples[j - 1];
    const auto& b = traj.samples[j];
    w[j] = w[j - 1] + 0.5 * (b.t - a.t) * (a.work_rate + b.work_rate);
  }
  return w;
}

double energy_balance_residual(const Trajectory& traj) {
  const auto w = cumulative_work(traj);
  double worst = 0.0;
  for (std::size_t j = 0; j < traj.samples.size(); ++j)
    worst = std::max(worst, std::abs(traj.samples[j].E - traj.samples[0].E - w[j]));
  return worst;
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  const int n = traj.n;
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",q" << i;
  for (int i = 1; i <= n; ++i) out << ",v" << i;
  out << ",E,residual";
  for (int i = 1; i <= n; ++i) out << ",R" << i;
  out << ",work_rate,xi_work_rate\n";
  char buf[40];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf;
  };
  for (const auto& s : traj.samples) {
    put(s.t);
    for (int i = 0; i < n; ++i) out << ',', put(s.q[i]);
    for (int i = 0; i < n; ++i) out << ',', put(s.v[i]);
    out << ',', put(s.E);
    out << ',', put(s.residual);
    for (int i = 0; i < n; ++i) out << ',', put(s.R[i]);
    out << ',', put(s.work_rate);
    out << ',', put(s.xi_work_rate);
    out << '\n';
  }
}

}  // namespace nhaff
