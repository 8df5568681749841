#pragma once

// Model JSON documents:
//   {"n":…, "k":…, "coords":[…], "A":[[expr,…],…], "b":[expr,…], "V":expr,
//    "S":[[expr,…],…], "s":[expr,…], "params":{…}, "guards":[expr,…]}
// Expressions are strings in the expr grammar.

#include <optional>
#include <string>

#include "json.hpp"
#include "nhaff/model.hpp"

namespace nhaff {

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& doc);

Model load_model_file(const std::string& path);
void save_model_file(const Model& m, const std::string& path);

/// "builtin:<name>" or a path to a model JSON document. Parameter overrides
/// replace (or add) entries in params; `potential` replaces V.
Model resolve_model(const std::string& source, const ParamMap& overrides = {},
                    const std::optional<std::string>& potential = std::nullopt);

}  // namespace nhaff
