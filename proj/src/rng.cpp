#include "siamret/rng.hpp"

#include <cmath>
#include <numbers>

#include "siamret/error.hpp"

namespace siamret {

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "uniform_index: empty range");
  const std::uint64_t bound = n;
  // Reject the low residue so every value is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = engine_();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io: return "io_error";
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::config: return "config_error";
    case ErrorCode::checksum: return "checksum_error";
    case ErrorCode::version: return "version_error";
    case ErrorCode::mismatch: return "mismatch_error";
    case ErrorCode::numeric: return "numeric_error";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::tape_reuse: return "tape_reuse";
    case ErrorCode::zero_norm: return "zero_norm";
  }
  return "unknown_error";
}

}  // namespace siamret
