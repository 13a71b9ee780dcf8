#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ckdseq {

inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError/ArgumentError -> 1, ShapeError/SchemaError/ContractError -> 2,
//   IncompleteInputError -> 3.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IncompleteInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for schema/config hashing and for deriving child RNG seeds.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= static_cast<unsigned char>(value >> (8 * i));
    h *= 0x100000001b3ull;
  }
  return h;
}

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ArgumentError("mean_of: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (n-1 denominator), 0 for a single value.
inline double sd_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ArgumentError("sd_of: empty input");
  if (xs.size() == 1) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace ckdseq
