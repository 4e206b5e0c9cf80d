#include "knnseq/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace knnseq {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  std::uint64_t x = h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
  return splitmix64(x);
}

}  // namespace

RngStream RngStream::derive(std::uint64_t seed, std::string_view tag,
                            std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = seed;
  h = splitmix64(h);
  for (unsigned char ch : tag) {
    h = hash_combine(h, ch);
  }
  h = hash_combine(h, a);
  h = hash_combine(h, b);
  h = hash_combine(h, c);
  return RngStream(h);
}

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::next_index(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("RngStream::next_index: n must be positive");
  }
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_u64();
  while (v >= limit) {
    v = next_u64();
  }
  return static_cast<std::size_t>(v % n);
}

double RngStream::next_gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  double u1 = next_double();
  while (u1 <= 0.0) {
    u1 = next_double();
  }
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_gaussian_ = r * std::sin(theta);
  has_cached_gaussian_ = true;
  return r * std::cos(theta);
}

void RngStream::shuffle(std::vector<std::size_t>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = next_index(i);
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k,
                                                               std::size_t exclude) {
  const std::size_t available = (exclude < n) ? n - 1 : n;
  if (k > available) {
    throw std::invalid_argument("sample_without_replacement: requested " + std::to_string(k) +
                                " items but only " + std::to_string(available) + " are available");
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  // Floyd's algorithm over the candidate set with `exclude` skipped by remap.
  std::vector<std::size_t> pool(available);
  std::size_t w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != exclude) {
      pool[w++] = i;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + next_index(available - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace knnseq
