#include "mfeq/rng.h"

#include <numbers>

namespace mfeq {

namespace {

constexpr uint32_t kM0 = 0xD2511F53u;
constexpr uint32_t kM1 = 0xCD9E8D57u;
constexpr uint32_t kW0 = 0x9E3779B9u;
constexpr uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

} // namespace

Philox4x32Ctr philox4x32(Philox4x32Ctr c, Philox4x32Key k) {
    for (int r = 0; r < 10; ++r) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c[0], hi0, lo0);
        mulhilo(kM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kW0;
        k[1] += kW1;
    }
    return c;
}

CounterStream::CounterStream(uint64_t seed, uint64_t index, StreamTag tag, uint32_t sub)
    : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
      ctr_{0u, static_cast<uint32_t>(index), static_cast<uint32_t>(tag) | (static_cast<uint32_t>(index >> 32) << 8), sub} {}

void CounterStream::refill() {
    buf_ = philox4x32(ctr_, key_);
    ++ctr_[0];
    pos_ = 0;
}

uint32_t CounterStream::next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
}

double CounterStream::uniform() {
    return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
}

double CounterStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

} // namespace mfeq
