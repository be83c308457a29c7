// Copyright 2026 The singval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Counter-based random streams. A stream is addressed by (campaign seed,
// stream index); the Philox4x32-10 bijection maps that address plus a draw
// counter to output bits, so any stream can be opened anywhere without
// coordinating with other workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace singval {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

using PhiloxBlock = std::array<std::uint32_t, 4>;

/// Philox4x32 with 10 rounds.
inline PhiloxBlock philox4x32_10(PhiloxBlock ctr,
                                 std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo32(kM0, ctr[0], hi0, lo0);
    detail::mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// Address of an independent random stream.
struct RngStream {
  std::uint64_t campaign_seed = 0;
  std::uint64_t stream_index = 0;

  /// Derived stream for a sub-task (sample k, path k, ...). Children of
  /// distinct parents or with distinct k have distinct addresses except with
  /// probability ~2^-64.
  RngStream child(std::uint64_t k) const noexcept {
    return {campaign_seed,
            detail::splitmix64(stream_index ^ detail::splitmix64(k + 0x632BE59BD9B4E019ULL))};
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// UniformRandomBitGenerator over one stream. Each 128-bit Philox block
/// yields two 64-bit outputs.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(RngStream stream) noexcept
      : key_{static_cast<std::uint32_t>(stream.campaign_seed),
             static_cast<std::uint32_t>(stream.campaign_seed >> 32)},
        index_(stream.stream_index) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (have_ == 0) refill();
    --have_;
    return buffer_[have_];
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal draw.
  double normal() { return normal_(*this); }

  std::uint64_t blocks_consumed() const noexcept { return counter_; }

 private:
  void refill() noexcept {
    const PhiloxBlock ctr{static_cast<std::uint32_t>(counter_),
                          static_cast<std::uint32_t>(counter_ >> 32),
                          static_cast<std::uint32_t>(index_),
                          static_cast<std::uint32_t>(index_ >> 32)};
    const PhiloxBlock out = philox4x32_10(ctr, key_);
    ++counter_;
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    have_ = 2;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t index_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int have_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace singval
