#include "coinfake/rng.hpp"

#include <cmath>

namespace coinfake {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0x632be59bd9b4e019ULL;
constexpr std::uint64_t kChildSalt = 0xd1b54a32d192ed03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id), state_(mix64(seed ^ mix64(stream_id + kStreamSalt))) {}

std::uint64_t RngStream::next_u64() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
  // Rejection from the largest multiple of n below 2^64.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::size_t RngStream::categorical(std::span<const double> weights) noexcept {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // u landed on the rounding sliver at the top: take the last positive weight.
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return i - 1;
  }
  return 0;
}

std::vector<double> RngStream::dirichlet(std::size_t k) {
  std::vector<double> out(k);
  double total = 0.0;
  for (auto& v : out) {
    // 1 - u is in (0, 1], so the log is finite.
    v = -std::log(1.0 - uniform());
    total += v;
  }
  if (total <= 0.0) {
    for (auto& v : out) v = 1.0 / static_cast<double>(k);
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

RngStream RngStream::child(std::uint64_t key) const noexcept {
  return RngStream(seed_, mix64(stream_ ^ mix64(key + kChildSalt)));
}

}  // namespace coinfake
