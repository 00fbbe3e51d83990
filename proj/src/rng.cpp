#include "rtrl/rng.hpp"

#include <cmath>
#include <numbers>

namespace rtrl {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kSeedSalt = 0xD1B54A32D192ED03ull;
constexpr std::uint64_t kStreamSalt = 0x8CB92BA72F3D8DD7ull;
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(splitmix64(splitmix64(seed ^ kSeedSalt) + splitmix64(stream_id ^ kStreamSalt))) {}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return splitmix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() {
  // 53 random bits, offset by half an ulp so 0 and 1 are never returned.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

RngStream RngStream::derive(std::uint64_t sub) const {
  return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(sub + kGolden)));
}

std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ (a + kGolden));
  h = splitmix64(h ^ (b + 2 * kGolden));
  return h;
}

}  // namespace rtrl
