#include "nhaff/model_io.hpp"

#include <fstream>

namespace nhaff {

namespace {

nlohmann::json exprs(const std::vector<Expr>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : v) out.push_back(to_string(e));
  return out;
}

Expr read_expr(const nlohmann::json& j, const std::string& field) {
  if (j.is_number()) return Expr::number(j.get<double>());
  if (!j.is_string()) throw ModelError("field '" + field + "' must hold expression strings");
  try {
    return parse(j.get<std::string>());
  } catch (const ParseError& e) {
    throw ModelError("field '" + field + "': " + e.what());
  }
}

std::vector<Expr> read_exprs(const nlohmann::json& doc, const std::string& field) {
  std::vector<Expr> out;
  if (!doc.contains(field)) return out;
  const auto& arr = doc.at(field);
  if (!arr.is_array()) throw ModelError("field '" + field + "' must be an array");
  for (const auto& e : arr) out.push_back(read_expr(e, field));
  return out;
}

ExprMatrix read_matrix(const nlohmann::json& doc, const std::string& field) {
  if (!doc.contains(field) || !doc.at(field).is_array())
    throw ModelError("field '" + field + "' must be an array of rows");
  ExprMatrix out;
  for (const auto& row : doc.at(field)) {
    if (!row.is_array()) throw ModelError("field '" + field + "' must be an array of rows");
    std::vector<Expr> r;
    for (const auto& e : row) r.push_back(read_expr(e, field));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

nlohmann::json model_to_json(const Model& m) {
  const ModelSpec& s = m.spec();
  nlohmann::json doc;
  if (!s.name.empty()) doc["name"] = s.name;
  doc["n"] = s.n;
  doc["k"] = s.k;
  doc["coords"] = s.coords;
  doc["A"] = nlohmann::json::array();
  for (const auto& row : s.A) doc["A"].push_back(exprs(row));
  doc["b"] = exprs(s.b);
  doc["V"] = to_string(s.V);
  doc["S"] = nlohmann::json::array();
  for (const auto& row : s.S) doc["S"].push_back(exprs(row));
  doc["s"] = exprs(s.s);
  doc["params"] = nlohmann::json::object();
  for (const auto& [k, v] : s.params) doc["params"][k] = v;
  doc["guards"] = exprs(s.guards);
  return doc;
}

Model model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ModelError("model document must be a JSON object");
  ModelSpec s;
  try {
    s.name = doc.value("name", std::string());
    s.n = doc.at("n").get<int>();
    s.k = doc.at("k").get<int>();
    s.coords = doc.at("coords").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
  s.A = read_matrix(doc, "A");
  s.b = read_exprs(doc, "b");
  if (s.b.empty()) s.b.assign(static_cast<std::size_t>(std::max(s.n, 0)), Expr());
  s.V = doc.contains("V") ? read_expr(doc.at("V"), "V") : Expr();
  s.S = read_matrix(doc, "S");
  s.s = read_exprs(doc, "s");
  if (s.s.empty()) s.s.assign(static_cast<std::size_t>(std::max(s.k, 0)), Expr());
  if (doc.contains("params")) {
    for (const auto& [k, v] : doc.at("params").items()) {
      if (!v.is_number()) throw ModelError("parameter '" + k + "' must be a number");
      s.params[k] = v.get<double>();
    }
  }
  s.guards = read_exprs(doc, "guards");
  return Model(std::move(s));
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("cannot parse model file '" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

void save_model_file(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write model file '" + path + "'");
  out << model_to_json(m).dump(2) << '\n';
}

Model resolve_model(const std::string& source, const ParamMap& overrides,
                    const std::optional<std::string>& potential) {
  constexpr std::string_view prefix = "builtin:";
  if (source.rfind(prefix, 0) == 0) return builtin(source.substr(prefix.size()), overrides, potential);
  Model m = load_model_file(source);
  if (overrides.empty() && !potential) return m;
  ModelSpec s = m.spec();
  for (const auto& [k, v] : overrides) s.params[k] = v;
  if (potential) s.V = parse(*potential);
  return Model(std::move(s));
}

}  // namespace nhaff
