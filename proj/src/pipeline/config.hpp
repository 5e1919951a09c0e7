#pragma once
#include <json.hpp>
#include <string>

#include "ac/ac.hpp"
#include "energy/energy.hpp"
#include "env/env.hpp"
#include "rssm/wm.hpp"

namespace phwm::pipeline {

using nlohmann::json;

// Complete default configuration tree. Every tunable of every module appears
// here; user files and overrides may only touch keys that exist in this tree.
json default_config();

// Parses a user file (if path nonempty) over the defaults, then applies
// KEY=VALUE overrides with dotted paths. Unknown keys or type mismatches are
// Config errors naming the offending key.
json load_config(const std::string& path, const std::vector<std::string>& overrides);

// Applies one KEY=VALUE override in place.
void apply_override(json& cfg, const std::string& spec);

// FNV-1a of the canonical serialization; stable across runs and platforms.
uint64_t config_hash(const json& cfg);

// Typed views into the tree.
env::EnvSpec env_spec_from(const json& cfg);
rssm::WorldModelSpec wm_spec_from(const json& cfg);
energy::EnergySpec energy_spec_from(const json& cfg);
ac::AcSpec ac_spec_from(const json& cfg, int feat_dim, int d_a);

}  // namespace phwm::pipeline
