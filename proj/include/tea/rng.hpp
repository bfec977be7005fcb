#pragma once

// Counter-based random stream: value i of a stream is a pure function of
// (seed, stream_id, i), so draw sequences are reproducible no matter how
// work is scheduled across threads. Construction follows SplitMix64: the
// per-stream state walks the golden-ratio sequence through a finalizer.

#include <cmath>
#include <cstdint>

namespace tea {

namespace detail {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  RngStream() = default;
  RngStream(std::uint64_t s, std::uint64_t stream) : seed(s), stream_id(stream) {
    base_ = detail::mix64(detail::mix64(seed + detail::kGolden) ^ stream_id);
  }

  // Independent child stream; the parent's counter is untouched.
  RngStream fork(std::uint64_t key) const {
    return RngStream(seed, detail::mix64(stream_id ^ (key + detail::kGolden)));
  }

  std::uint64_t next_u64() { return detail::mix64(base_ + detail::kGolden * ++counter); }

  // Uniform on [0, 1), 53-bit mantissa.
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare,
  // so the counter advance per call is fixed.
  double normal() {
    double u1 = 1.0 - next_unit();  // (0, 1]
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::uint64_t base_ = 0;
};

}  // namespace tea
