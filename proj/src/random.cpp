#include "rerand/random.hpp"

#include <bit>
#include <cmath>

namespace rerand {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_next(std::uint64_t& x) noexcept {
  x += kGolden;
  return mix64(x);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_bytes(const void* data, std::size_t size) noexcept {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t double_bits(double value) noexcept {
  // +0 and -0 name the same level.
  if (value == 0.0) value = 0.0;
  return std::bit_cast<std::uint64_t>(value);
}

RngStream::RngStream(std::uint64_t master_seed)
    : lineage_{master_seed, {}}, key_(mix64(master_seed ^ 0x5EEDF00DCAFEULL)) {
  seed_from_key();
}

RngStream::RngStream(Lineage lineage, std::uint64_t key)
    : lineage_(std::move(lineage)), key_(key) {
  seed_from_key();
}

RngStream RngStream::derive(std::uint64_t element) const {
  Lineage child = lineage_;
  child.path.push_back(element);
  const std::uint64_t child_key =
      mix64(key_ ^ mix64(element + kGolden * (child.path.size() + 1)));
  return RngStream(std::move(child), child_key);
}

void RngStream::seed_from_key() noexcept {
  std::uint64_t s = key_;
  for (auto& word : state_) word = splitmix_next(s);
  // xoshiro must not start from the all-zero state.
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = kGolden;
}

RngStream::result_type RngStream::next() noexcept {
  // xoshiro256**
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() noexcept {
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t bound) noexcept {
  // Lemire's nearly-divisionless rejection method.
  std::uint64_t x = next();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

double RngStream::exponential() noexcept { return -std::log(uniform()); }

}  // namespace rerand
