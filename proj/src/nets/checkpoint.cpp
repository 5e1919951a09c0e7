#include "nets/checkpoint.hpp"

#include <fstream>

#include "core/error.hpp"

namespace phwm::nets {

using nlohmann::json;

json params_to_json(const ParamStore& store) {
  json blocks = json::array();
  for (int i = 0; i < store.block_count(); ++i) {
    const ParamBlock& b = store.block(i);
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  return json{{"blocks", blocks}, {"values", store.values()}};
}

void params_from_json(ParamStore& store, const json& j) {
  const json& blocks = j.at("blocks");
  require(static_cast<int>(blocks.size()) == store.block_count(), ErrorKind::Version,
          "checkpoint layout mismatch: block count differs");
  for (int i = 0; i < store.block_count(); ++i) {
    const ParamBlock& b = store.block(i);
    const json& jb = blocks[static_cast<size_t>(i)];
    require(jb.at("name").get<std::string>() == b.name &&
                jb.at("rows").get<int>() == b.rows && jb.at("cols").get<int>() == b.cols,
            ErrorKind::Version,
            "checkpoint layout mismatch at block '" + b.name + "'");
  }
  store.load_values(j.at("values").get<std::vector<double>>());
}

json adam_to_json(const Adam& opt) {
  return json{{"t", opt.steps()}, {"m", opt.m()}, {"v", opt.v()}};
}

void adam_from_json(Adam& opt, const json& j) {
  opt.restore(j.at("t").get<long long>(), j.at("m").get<std::vector<double>>(),
              j.at("v").get<std::vector<double>>());
}

json rng_to_json(const RngRegistry& rng) {
  json streams = json::object();
  for (const auto& [name, ctr] : rng.counters()) streams[name] = ctr;
  return json{{"seed", rng.seed()}, {"streams", streams}};
}

void rng_from_json(RngRegistry& rng, const json& j) {
  require(j.at("seed").get<uint64_t>() == rng.seed(), ErrorKind::Version,
          "rng restore: seed differs from the running registry");
  std::map<std::string, uint64_t> counters;
  for (const auto& [name, ctr] : j.at("streams").items())
    counters[name] = ctr.get<uint64_t>();
  rng.restore(counters);
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::Io, "cannot open for writing: " + path);
  os << j.dump(1, '\t') << "\n";
  require(os.good(), ErrorKind::Io, "write failed: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::Io, "cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    raise(ErrorKind::Io, "malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace phwm::nets
