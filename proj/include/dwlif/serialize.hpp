#pragma once

#include <nlohmann/json.hpp>

#include "dwlif/geometry.hpp"
#include "dwlif/llg.hpp"

namespace dwlif {

// Lengths are stored in metres, as in the structs.
void to_json(nlohmann::json& j, const TrackShape& shape);
void from_json(const nlohmann::json& j, TrackShape& shape);

void to_json(nlohmann::json& j, const MaterialParams& params);
void from_json(const nlohmann::json& j, MaterialParams& params);

}  // namespace dwlif
