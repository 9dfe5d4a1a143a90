#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semplaus {

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : std::runtime_error(line ? where + ":" + std::to_string(line) + ": " + what
                                : where + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input that parses but violates a documented precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values reached the optimizer, or training diverged.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded generator used everywhere randomness is needed.
///
/// Only the raw 64-bit stream of std::mt19937_64 is consumed; the
/// distributions are computed here so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling removes modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; turns (base, stream) into a well-mixed derived seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Splits on a single delimiter character, keeping empty fields.
std::vector<std::string> split(const std::string& line, char delim);

/// Splits on runs of ASCII whitespace.
std::vector<std::string> split_ws(const std::string& line);

std::string trim(const std::string& s);
std::string to_lower(std::string s);

/// Strict double parse: whole string must be consumed and finite.
bool parse_double(const std::string& s, double& out);
bool parse_int(const std::string& s, long long& out);

/// FNV-1a 64-bit. Stable across platforms, used for config fingerprints.
std::uint64_t fnv1a64(const std::string& bytes);

std::string hex64(std::uint64_t v);

}  // namespace semplaus
