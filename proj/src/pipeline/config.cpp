#include "pipeline/config.hpp"

#include <fstream>

#include "core/error.hpp"

namespace phwm::pipeline {

json default_config() {
  return json{
      {"seed", 0},
      {"out", "runs/default"},
      {"env",
       {{"name", "pendulum"},
        {"dt", 0.05},
        {"substeps", 100},
        {"episode_len", 200},
        {"constants", json::object()}}},
      {"data",
       {{"episodes", 50},
        {"policy", "random_hold"},  // random_hold | zero
        {"dataset_dir", ""}}},      // train reads prefill from here when set
      {"wm",
       {{"h_dim", 64},
        {"h_phys", 16},
        {"z_dim", 16},
        {"obs_embed", 32},
        {"head_hidden", json::array({64})},
        {"kl_beta", 1.0},
        {"kl_balance", 0.8},
        {"free_bits", 1.0},
        {"ph",
         {{"n", 8},
          {"state_dependent", false},
          {"h_hidden", json::array({64, 64})},
          {"net_hidden", json::array({32, 32})}}},
        {"ph_steps", 1},
        {"lambda_ph_max", 1.0},
        {"warmup_frac", 0.1},
        {"ramp_frac", 0.4},
        {"seq_len", 32},
        {"batch", 16},
        {"lr", 1e-3}}},
      {"em",
       {{"k", 4},
        {"tcn_channels", 32},
        {"hidden", json::array({32, 32})},
        {"enc_hidden", 32},
        {"d_tilde", 0},
        {"batch", 64},
        {"lr", 1e-3},
        {"w_now", 1.0},
        {"w_next", 1.0},
        {"w_momentum", 1.0}}},
      {"ac",
       {{"actor_hidden", json::array({64, 64})},
        {"critic_hidden", json::array({64, 64})},
        {"horizon", 15},
        {"lambda_ret", 0.95},
        {"entropy_eta", 3e-4},
        {"alpha_p", 1.0},
        {"alpha_v", 1.0},
        {"slow_decay", 0.98},
        {"scaler_decay", 0.99},
        {"lr", 3e-4},
        {"eta_lambda", 1e-2},
        {"eps_percentile", 0.6},
        {"calib_batches", 10},
        {"imagine_starts", 256},
        {"constraint_batch", 32}}},
      {"train",
       {{"stage1_steps", 2000},
        {"stage2_steps", 500},
        {"prefill_episodes", 20},
        {"collect_every", 50},
        {"log_every", 10},
        {"checkpoint_every", 500}}},
      {"eval", {{"episodes", 10}, {"alpha", 1.0}, {"beta", 0.01}}},
  };
}

namespace {

// Recursive merge of user values over defaults; any key absent from the
// defaults is a config error, as is a type change.
void merge_checked(json& base, const json& user, const std::string& path) {
  require(user.is_object(), ErrorKind::Config, "config: '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string here = path.empty() ? it.key() : path + "." + it.key();
    // The physics-constant map is an open dictionary, everything else is closed.
    if (!base.contains(it.key())) {
      raise(ErrorKind::Config, "config: unknown key '" + here + "'");
    }
    json& slot = base[it.key()];
    if (slot.is_object() && !(path == "env" && it.key() == "constants")) {
      merge_checked(slot, it.value(), here);
      continue;
    }
    const bool both_numeric = slot.is_number() && it.value().is_number();
    require(both_numeric || slot.type() == it.value().type(), ErrorKind::Config,
            "config: type mismatch at '" + here + "'");
    slot = it.value();
  }
}

json parse_scalar(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (!v.is_discarded()) return v;
  return json(text);  // bare strings need no quotes on the command line
}

}  // namespace

void apply_override(json& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::Config,
          "override '" + spec + "' is not KEY=VALUE");
  const std::string key = spec.substr(0, eq);
  const json value = parse_scalar(spec.substr(eq + 1));

  json* node = &cfg;
  size_t at = 0;
  std::string walked;
  while (true) {
    const auto dot = key.find('.', at);
    const std::string part = key.substr(at, dot == std::string::npos ? dot : dot - at);
    walked = walked.empty() ? part : walked + "." + part;
    const bool open_map = walked.rfind("env.constants", 0) == 0;
    require(open_map || node->contains(part), ErrorKind::Config,
            "config: unknown key '" + walked + "'");
    if (dot == std::string::npos) {
      if (!open_map) {
        json& slot = (*node)[part];
        const bool both_numeric = slot.is_number() && value.is_number();
        require(both_numeric || slot.type() == value.type(), ErrorKind::Config,
                "config: type mismatch at '" + walked + "'");
      }
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    require(node->is_object(), ErrorKind::Config, "config: '" + walked + "' is not a section");
    at = dot + 1;
  }
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "config: cannot open '" + path + "'");
    json user = json::parse(in, nullptr, false);
    require(!user.is_discarded(), ErrorKind::Config, "config: '" + path + "' is not valid JSON");
    merge_checked(cfg, user, "");
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

uint64_t config_hash(const json& cfg) {
  const std::string canon = cfg.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

env::EnvSpec env_spec_from(const json& cfg) {
  const json& e = cfg.at("env");
  env::EnvSpec s;
  s.name = e.at("name").get<std::string>();
  s.dt = e.at("dt").get<double>();
  s.substeps = e.at("substeps").get<int>();
  s.episode_len = e.at("episode_len").get<int>();
  for (auto it = e.at("constants").begin(); it != e.at("constants").end(); ++it)
    s.constants[it.key()] = it.value().get<double>();
  return s;
}

rssm::WorldModelSpec wm_spec_from(const json& cfg) {
  const json& w = cfg.at("wm");
  rssm::WorldModelSpec s;
  s.rssm.h_dim = w.at("h_dim").get<int>();
  s.rssm.h_phys = w.at("h_phys").get<int>();
  s.rssm.z_dim = w.at("z_dim").get<int>();
  s.rssm.obs_embed = w.at("obs_embed").get<int>();
  s.rssm.head_hidden = w.at("head_hidden").get<std::vector<int>>();
  s.rssm.kl_beta = w.at("kl_beta").get<double>();
  s.rssm.kl_balance = w.at("kl_balance").get<double>();
  s.rssm.free_bits = w.at("free_bits").get<double>();
  const json& p = w.at("ph");
  s.ph.n = p.at("n").get<int>();
  s.ph.state_dependent = p.at("state_dependent").get<bool>();
  s.ph.h_hidden = p.at("h_hidden").get<std::vector<int>>();
  s.ph.net_hidden = p.at("net_hidden").get<std::vector<int>>();
  s.ph_steps = w.at("ph_steps").get<int>();
  s.dt = cfg.at("env").at("dt").get<double>();
  return s;
}

energy::EnergySpec energy_spec_from(const json& cfg) {
  const json& e = cfg.at("em");
  energy::EnergySpec s;
  s.k = e.at("k").get<int>();
  s.tcn_channels = e.at("tcn_channels").get<int>();
  s.hidden = e.at("hidden").get<std::vector<int>>();
  s.enc_hidden = e.at("enc_hidden").get<int>();
  s.d_tilde = e.at("d_tilde").get<int>();
  return s;
}

ac::AcSpec ac_spec_from(const json& cfg, int feat_dim, int d_a) {
  const json& a = cfg.at("ac");
  ac::AcSpec s;
  s.feat_dim = feat_dim;
  s.d_a = d_a;
  s.actor_hidden = a.at("actor_hidden").get<std::vector<int>>();
  s.critic_hidden = a.at("critic_hidden").get<std::vector<int>>();
  s.horizon = a.at("horizon").get<int>();
  s.lambda_ret = a.at("lambda_ret").get<double>();
  s.entropy_eta = a.at("entropy_eta").get<double>();
  s.alpha_p = a.at("alpha_p").get<double>();
  s.alpha_v = a.at("alpha_v").get<double>();
  s.slow_decay = a.at("slow_decay").get<double>();
  s.scaler_decay = a.at("scaler_decay").get<double>();
  s.lr = a.at("lr").get<double>();
  return s;
}

}  // namespace phwm::pipeline
