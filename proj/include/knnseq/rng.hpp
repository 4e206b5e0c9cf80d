#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace knnseq {

// Deterministic counter-style random stream. Every consumer derives its own
// stream from (global seed, purpose tag, indices), so the draw order of one
// consumer can never shift the draws of another. This is what makes
// multi-worker runs produce bit-identical outputs.
class RngStream {
 public:
  RngStream() : state_(0x9e3779b97f4a7c15ull) {}
  explicit RngStream(std::uint64_t state) : state_(state) {}

  static RngStream derive(std::uint64_t seed, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();

  // Uniform integer in [0, n); n must be positive.
  std::size_t next_index(std::size_t n);

  // Standard normal via Box-Muller (caches the second deviate).
  double next_gaussian();

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& items);

  // k distinct indices from [0, n), optionally skipping one index.
  // Requires enough candidates; throws otherwise.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                      std::size_t exclude = static_cast<std::size_t>(-1));

 private:
  std::uint64_t state_;
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace knnseq
