#include "core/rng.hpp"

#include <cmath>

namespace phwm {

namespace {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t RngStream::next_u64() {
  // key enters through a second scramble round so that streams with nearby keys
  // do not produce correlated output for equal counters.
  uint64_t v = splitmix64(ctr_ ^ splitmix64(key_));
  ++ctr_;
  return v;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  // Box-Muller cosine branch. No cached second value: state stays a pure counter.
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 in [0,1) so arg > 0
  return r * std::cos(2.0 * M_PI * u2);
}

int RngStream::uniform_int(int n) {
  // Bias of the multiply-shift trick is < 2^-53 per draw; irrelevant here, and
  // unlike modulo it keeps the mapping monotone in the raw uniform.
  return static_cast<int>(uniform() * static_cast<double>(n));
}

uint64_t mix_seed(uint64_t seed, const std::string& name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h ^ splitmix64(seed);
}

RngStream& RngRegistry::stream(const std::string& name) {
  auto it = streams_.find(name);
  if (it == streams_.end())
    it = streams_.emplace(name, RngStream(mix_seed(seed_, name))).first;
  return it->second;
}

std::map<std::string, uint64_t> RngRegistry::counters() const {
  std::map<std::string, uint64_t> out;
  for (const auto& [name, s] : streams_) out[name] = s.counter();
  return out;
}

void RngRegistry::restore(const std::map<std::string, uint64_t>& counters) {
  for (const auto& [name, ctr] : counters) stream(name).set_counter(ctr);
}

}  // namespace phwm
