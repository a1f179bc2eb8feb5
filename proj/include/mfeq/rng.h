#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mfeq {

using Philox4x32Ctr = std::array<uint32_t, 4>;
using Philox4x32Key = std::array<uint32_t, 2>;

// Philox4x32 with 10 rounds.
Philox4x32Ctr philox4x32(Philox4x32Ctr ctr, Philox4x32Key key);

enum class StreamTag : uint32_t {
    Common = 1,
    Orthogonal = 2,
    IdioInformed = 3,
    IdioStandard = 4,
    InitInformed = 5,
    InitStandard = 6,
    Probe = 7,
    Perturb = 8,
};

// Stream addressed by (seed, index, tag, sub); draws depend only on the
// address and the draw position, never on thread scheduling.
class CounterStream {
  public:
    CounterStream(uint64_t seed, uint64_t index, StreamTag tag, uint32_t sub = 0);

    uint32_t next_u32();
    double uniform(); // open interval (0, 1)
    double normal();

  private:
    void refill();

    Philox4x32Key key_;
    Philox4x32Ctr ctr_;
    std::array<uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mfeq
