#pragma once

// JSON serialization of analysis results. Section and gauge verdicts use
//   {"verdict":…, "max_violation":…, "witness":{"q":…, "v":…},
//    "grid_size":…, "tolerances":{…}}

#include <string>

#include "json.hpp"
#include "nhaff/analysis.hpp"
#include "nhaff/dynamics.hpp"
#include "nhaff/reaction.hpp"

namespace nhaff {

nlohmann::json to_json_array(const Eigen::VectorXd& v);
nlohmann::json to_json_matrix(const Eigen::MatrixXd& m);  // list of columns

nlohmann::json report_json(const SectionVerdict& v);
nlohmann::json report_json(const GaugeVerdict& v);
nlohmann::json report_json(const FiberReport& r);
nlohmann::json report_json(const GeneratorProjection& g, const Eigen::VectorXd& q, double tol);
nlohmann::json report_json(const DriftReport& d);

/// Pretty-printed JSON with doubles in 17 significant digits.
std::string dump_report(const nlohmann::json& j);

}  // namespace nhaff
