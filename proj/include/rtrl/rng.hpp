#pragma once

#include <cstdint>

namespace rtrl {

/// Counter-based random stream. Draw k of stream (seed, id) is a pure function
/// of (seed, id, k): a SplitMix64 finalizer applied to key + (k+1)*golden, with
/// key mixed from seed and id. Sequences are therefore identical on every
/// platform and independent of which thread consumes them.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; draws come in cached pairs.
  double normal();

  /// Child stream keyed by this stream's identity and `sub`.
  RngStream derive(std::uint64_t sub) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Named stream purposes. Stream ids are built as
/// mix(purpose, a, b) so each (purpose, iteration, index) gets its own stream.
enum class StreamPurpose : std::uint64_t {
  kInit = 0x1001,
  kRollout = 0x2002,
  kEval = 0x3003,
  kOracle = 0x4004,
  kSweep = 0x5005,
  kFisher = 0x6006,
};

std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace rtrl
