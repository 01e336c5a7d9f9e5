// Copyright 2026 The IMLS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IMLS_RNG_HPP
#define IMLS_RNG_HPP

#include <cstdint>

namespace imls {

// PCG32 (XSH-RR 64/32, O'Neill 2014) with a fixed stream constant. Pure
// integer arithmetic, so the u32 stream is byte-identical on every platform
// for a given seed. Instances are single-owner; never share across threads.
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed) : state_(0u) {
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + kIncrement;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  // Uniform in [0,1) with 24-bit resolution; exactly representable in float.
  double next_uniform() {
    return static_cast<double>(next_u32() >> 8) * 0x1.0p-24;
  }

  // Standard normal via Box-Muller. Consumes exactly two uniforms per draw;
  // the sine half of the pair is discarded so the stream advance is constant.
  double next_normal();

  // Uniform integer in [lo, hi] via multiply-shift reduction of one u32.
  int64_t next_int(int64_t lo, int64_t hi);

 private:
  static constexpr uint64_t kIncrement = 1442695040888963407ULL;
  uint64_t state_;
};

}  // namespace imls

#endif  // IMLS_RNG_HPP
