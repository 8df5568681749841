#include "nhaff/report.hpp"

#include <cmath>
#include <cstdio>

namespace nhaff {

nlohmann::json to_json_array(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json to_json_matrix(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(to_json_array(m.col(j)));
  return out;
}

namespace {

nlohmann::json witness(const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
  return {{"q", to_json_array(q)}, {"v", to_json_array(v)}};
}

}  // namespace

nlohmann::json report_json(const SectionVerdict& v) {
  return {{"test", "section_of_rad"},
          {"field", v.field},
          {"verdict", v.section ? "section" : "not_section"},
          {"max_violation", v.max_violation},
          {"witness", witness(v.witness_q, v.witness_v)},
          {"grid_size", v.grid_size},
          {"samples_per_point", v.samples_per_point},
          {"tolerances", {{"section", v.opts.tol_section}, {"rank", v.opts.tol_rank}}},
          {"speed", v.opts.speed},
          {"seed", v.opts.seed},
          {"note", "certified only at the tested grid points"}};
}

nlohmann::json report_json(const GaugeVerdict& v) {
  return {{"test", "gauge_symmetry"},
          {"field", v.field},
          {"verdict", v.gauge_symmetry ? "pass" : "fail"},
          {"max_violation", v.max_violation},
          {"witness", witness(v.witness_q, v.witness_v)},
          {"grid_size", v.grid_size},
          {"samples_per_point", v.samples_per_point},
          {"off_constraint", v.off_constraint},
          {"tolerances", {{"gauge", v.tol}}},
          {"note", v.note}};
}

nlohmann::json report_json(const FiberReport& r) {
  return {{"q", to_json_array(r.q)},
          {"samples", r.samples},
          {"rank", r.d},
          {"fiber_dim", r.rad_fiber.cols()},
          {"zero_reaction", r.zero_reaction},
          {"reaction_span", to_json_matrix(r.reaction_span)},
          {"rad_fiber", to_json_matrix(r.rad_fiber)},
          {"tolerances", {{"rank", r.tol_rank}}}};
}

nlohmann::json report_json(const GeneratorProjection& g, const Eigen::VectorXd& q, double tol) {
  const bool ok = std::abs(g.obstruction) <= tol;
  return {{"test", "generator_projection"},
          {"q", to_json_array(q)},
          {"PiAY", to_json_array(g.PiAY)},
          {"obstruction", g.obstruction},
          {"verdict", ok ? "pass" : "fail"},
          {"tolerances", {{"obstruction", tol}}}};
}

nlohmann::json report_json(const DriftReport& d) {
  return {{"J0", d.J0},
          {"max_abs_drift", d.max_abs_drift},
          {"max_rel_drift", d.max_rel_drift},
          {"max_balance_residual", d.max_balance_residual}};
}

namespace {

void dump_value(const nlohmann::json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (const auto& [k, v] : j.items()) {
      if (!first) out += ",\n";
      first = false;
      out += pad_in + nlohmann::json(k).dump() + ": ";
      dump_value(v, out, indent + 1);
    }
    out += "\n" + pad + "}";
  } else if (j.is_array()) {
    bool scalars = true;
    for (const auto& v : j) scalars = scalars && v.is_primitive();
    if (scalars) {
      out += "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ", ";
        dump_value(j[i], out, indent + 1);
      }
      out += "]";
      return;
    }
    out += "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) out += ",\n";
      out += pad_in;
      dump_value(j[i], out, indent + 1);
    }
    out += "\n" + pad + "]";
  } else if (j.is_number_float()) {
    const double x = j.get<double>();
    if (!std::isfinite(x)) {
      out += "null";
      return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out += buf;
  } else {
    out += j.dump();
  }
}

}  // namespace

std::string dump_report(const nlohmann::json& j) {
  std::string out;
  dump_value(j, out, 0);
  out += '\n';
  return out;
}

}  // namespace nhaff
