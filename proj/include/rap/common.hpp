#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace rap {

// error taxonomy, mapped to CLI exit codes in tools/rap_main.cpp:
//   FormatError  -> 3 (bad files, bad config, bad data)
//   NumericError -> 4 (non-finite values where finite ones are required)
//   ShapeError / ContractError -> programming or usage errors

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& m) : std::runtime_error(m) {}
};

// counter-based deterministic generator (splitmix64 finalizer over key+counter).
// callers own the state; everything that needs randomness takes one of these,
// nothing reads global state. derive() splits off an independent stream, used
// for per-clip seeds and per-tensor init.
struct Rng {
  uint64_t key = 0;
  uint64_t ctr = 0;

  Rng() = default;
  explicit Rng(uint64_t seed) : key(mix(seed ^ 0x2545f4914f6cdd1dULL)) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() { return mix(key + 0x9e3779b97f4a7c15ULL * ++ctr); }

  Rng derive(uint64_t stream) const {
    Rng r;
    r.key = mix(key ^ mix(stream + 0x6a09e667f3bcc909ULL));
    return r;
  }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // box-muller, cosine branch only so state is just (key, ctr)
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }
};

// worker cap for batch-parallel sections. RAP_THREADS overrides hardware
// concurrency; results are bit-identical for any fixed value.
inline int thread_count() {
  if (const char* env = std::getenv("RAP_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

}  // namespace rap
