#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace coinfake {

/// Seeded SplitMix64 stream identified by (seed, stream id).
///
/// Every draw is produced by integer arithmetic only, so a given
/// (seed, stream id) yields the same values on every platform. Child streams
/// are cheap to derive, which lets parallel kernels give each work item its
/// own stream and stay bit-identical to the serial path.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Fair {-1, +1} draw.
  int sign() noexcept { return (next_u64() >> 63) ? 1 : -1; }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Index drawn proportionally to non-negative weights (which need not sum to 1).
  std::size_t categorical(std::span<const double> weights) noexcept;
  /// Draw from the flat Dirichlet(1, ..., 1) on k components.
  std::vector<double> dirichlet(std::size_t k);

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  /// Independent stream derived from this stream's identity and `key`. Does not
  /// advance this stream.
  RngStream child(std::uint64_t key) const noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept { return next_u64(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace coinfake
