#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace rerand {

/// Where a stream came from: the master seed and the derivation path below it.
struct Lineage {
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> path;

  bool operator==(const Lineage&) const = default;
};

/// Splittable deterministic random stream.
///
/// A stream is identified by its lineage. Children are keyed off the parent's
/// lineage hash, never its generator state, so deriving does not consume
/// draws and two streams with equal lineage always replay the same sequence.
/// Streams are single-owner values; hand each task its own derived child.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t master_seed);

  /// Child stream whose lineage is this lineage with `element` appended.
  [[nodiscard]] RngStream derive(std::uint64_t element) const;

  result_type operator()() noexcept { return next(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  /// Standard normal draw (Marsaglia polar method).
  double normal() noexcept;
  /// Unit-rate exponential draw.
  double exponential() noexcept;

  const Lineage& lineage() const noexcept { return lineage_; }
  std::uint64_t key() const noexcept { return key_; }

 private:
  RngStream(Lineage lineage, std::uint64_t key);
  void seed_from_key() noexcept;
  result_type next() noexcept;

  Lineage lineage_;
  std::uint64_t key_;
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit finalizer used for lineage keys and content hashes.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable 64-bit FNV-1a hash of a byte string.
std::uint64_t hash_bytes(const void* data, std::size_t size) noexcept;

/// Bit pattern of a double, for using real-valued levels as path elements.
std::uint64_t double_bits(double value) noexcept;

}  // namespace rerand
