#pragma once
#include <json.hpp>
#include <string>

#include "core/rng.hpp"
#include "nets/params.hpp"

namespace phwm::nets {

// Checkpoints are plain JSON. nlohmann serializes doubles with the shortest
// representation that round-trips exactly, so save/load is bit-preserving and two
// runs can be compared byte-for-byte on their checkpoint files.

nlohmann::json params_to_json(const ParamStore& store);
// The stored block layout must match the constructed model exactly.
void params_from_json(ParamStore& store, const nlohmann::json& j);

nlohmann::json adam_to_json(const Adam& opt);
void adam_from_json(Adam& opt, const nlohmann::json& j);

nlohmann::json rng_to_json(const RngRegistry& rng);
void rng_from_json(RngRegistry& rng, const nlohmann::json& j);

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace phwm::nets
