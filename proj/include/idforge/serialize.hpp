#pragma once

#include "idforge/mlp.hpp"
#include "idforge/rng.hpp"

#include <json.hpp>

namespace idforge {

// Layer-wise JSON encoding shared by every checkpoint format.
nlohmann::json mlp_to_json_obj(const Mlp& net);

// Rebuilds through make_mlp so the result carries a fresh uid, then
// overwrites the parameters. Throws ProtocolError on shape mismatches.
Mlp mlp_from_json_obj(const nlohmann::json& j, Rng& uid_source);

} // namespace idforge
