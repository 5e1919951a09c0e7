#pragma once
#include <cstdint>
#include <map>
#include <string>

namespace phwm {

// Counter-based generator: every draw is a pure function of (key, counter), so a
// stream's full state checkpoints as one integer and independent streams never
// interleave. Adding a new named stream to the code leaves all other streams'
// sequences untouched, which is what makes paired ablation runs bit-comparable.
class RngStream {
public:
  RngStream() = default;
  explicit RngStream(uint64_t key, uint64_t counter = 0) : key_(key), ctr_(counter) {}

  uint64_t next_u64();
  double uniform();                     // [0, 1)
  double uniform(double lo, double hi);
  double normal();                      // Box-Muller, two uniforms per draw
  int uniform_int(int n);               // [0, n)

  uint64_t key() const { return key_; }
  uint64_t counter() const { return ctr_; }
  void set_counter(uint64_t c) { ctr_ = c; }

private:
  uint64_t key_ = 0;
  uint64_t ctr_ = 0;
};

// FNV-1a of the stream name folded with the run seed.
uint64_t mix_seed(uint64_t seed, const std::string& name);

// Named streams, created on first use. The snapshot only contains streams that
// were actually touched; restoring re-seeds them at their saved counters.
class RngRegistry {
public:
  explicit RngRegistry(uint64_t seed = 0) : seed_(seed) {}

  RngStream& stream(const std::string& name);
  std::map<std::string, uint64_t> counters() const;
  void restore(const std::map<std::string, uint64_t>& counters);
  uint64_t seed() const { return seed_; }

private:
  uint64_t seed_ = 0;
  std::map<std::string, RngStream> streams_;
};

}  // namespace phwm
