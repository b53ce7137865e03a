#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace synprobe {

inline constexpr const char* kVersion = "0.1.0";

/// Raised when an input file or stream does not follow its declared format.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when a tree, matrix, or record violates a structural invariant.
class InvariantError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when the lexicon cannot supply the number of unique stimuli requested.
class CapacityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit generator with portable distributions.
///
/// The standard library distributions are implementation-defined, so the
/// uniform and normal draws are derived directly from the raw engine output.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a stream tag into a seed so sub-components get independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace synprobe
