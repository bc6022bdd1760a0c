#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace relnmt {

// Error taxonomy. The CLI maps these onto process exit codes:
// config/usage -> 1, data -> 2, numeric/internal -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};

// Deterministic RNG. Distributions are hand-rolled on top of the raw
// mt19937_64 stream so that results do not depend on the standard
// library's unspecified distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_mix_(seed) {}

  std::uint64_t next_u64() { return state_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return state_() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream (e.g. per epoch or per sentence).
  Rng fork(std::uint64_t salt) const {
    std::uint64_t s = seed_mix_ ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    return Rng(s);
  }

  void reseed(std::uint64_t seed) {
    state_.seed(seed);
    seed_mix_ = seed;
    have_spare_ = false;
  }

 private:
  // mt19937_64 itself is fully specified by the standard, so the raw
  // stream is reproducible across platforms.
  std::mt19937_64 state_;
  std::uint64_t seed_mix_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
std::string join(const std::vector<T>& v, const std::string& sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

std::vector<std::string> split_ws(const std::string& s);
std::vector<std::string> split_on(const std::string& s, char delim);
std::string strip(const std::string& s);

}  // namespace relnmt
