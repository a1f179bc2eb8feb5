#include "doctest.h"

#include <cmath>

#include "mfeq/rng.h"

using namespace mfeq;

TEST_CASE("philox4x32-10 known answers") {
    // Random123 kat_vectors
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == Philox4x32Ctr{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          Philox4x32Ctr{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          Philox4x32Ctr{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are addressed, not sequenced") {
    CounterStream a(42, 7, StreamTag::Common), b(42, 7, StreamTag::Common);
    for (int k = 0; k < 100; ++k) CHECK(a.normal() == b.normal());

    CounterStream c(42, 7, StreamTag::Common), d(42, 7, StreamTag::Orthogonal), e(42, 8, StreamTag::Common),
        f(43, 7, StreamTag::Common), g(42, 7, StreamTag::Common, 1);
    const uint32_t x = c.next_u32();
    CHECK(x != d.next_u32());
    CHECK(x != e.next_u32());
    CHECK(x != f.next_u32());
    CHECK(x != g.next_u32());
}

TEST_CASE("uniform and normal moments") {
    CounterStream rs(1, 0, StreamTag::Probe);
    const int n = 200000;
    double su = 0, mn = 1, mx = 0, s1 = 0, s2 = 0, s4 = 0;
    for (int k = 0; k < n; ++k) {
        const double u = rs.uniform();
        su += u;
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        const double z = rs.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(mn > 0.0);
    CHECK(mx < 1.0);
    // 5 standard errors
    CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(s1 / n) < 5 * std::sqrt(1.0 / n));
    CHECK(std::abs(s2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 5 * std::sqrt(96.0 / n));
}
