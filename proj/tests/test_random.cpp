#include "doctest.h"

#include <cmath>
#include <set>

#include "mleig/random.hpp"

using namespace mleig;

TEST_CASE("philox4x32-10 known-answer vectors") {
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::block(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::block(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::block(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("identical seed and path reproduce the stream") {
    const RandomStream a(42, {1, 3, 7});
    const RandomStream b = RandomStream(42).child(1).child(3).child(7);
    CHECK(a == b);
    auto ea = a.engine();
    auto eb = b.engine();
    for (int i = 0; i < 1000; ++i) CHECK(ea.next_u64() == eb.next_u64());
}

TEST_CASE("distinct paths and seeds give distinct keys") {
    std::set<std::uint64_t> keys;
    for (std::uint64_t level = 0; level < 10; ++level)
        for (std::uint64_t n = 0; n < 200; ++n)
            for (std::uint64_t purpose = 0; purpose < 3; ++purpose)
                keys.insert(RandomStream(1, {1, level, n}).child(purpose).key());
    CHECK(keys.size() == 10 * 200 * 3);
    CHECK(RandomStream(1, {1, 2}).key() != RandomStream(2, {1, 2}).key());
    // prefix paths are keyed differently from their extensions
    CHECK(RandomStream(1, {1}).key() != RandomStream(1, {1, 0}).key());
}

TEST_CASE("uniforms lie in the open unit interval with the right moments") {
    auto e = RandomStream(7, {static_cast<std::uint64_t>(StreamPurpose::kTest)}).engine();
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = e.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        s += u;
        s2 += u * u;
    }
    const double mean = s / n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.005));
    CHECK(s2 / n - mean * mean == doctest::Approx(1.0 / 12.0).epsilon(0.01));
}

TEST_CASE("normals have unit variance and independent streams are uncorrelated") {
    auto a = RandomStream(3, {1}).engine();
    auto b = RandomStream(3, {2}).engine();
    const int n = 200000;
    double sa = 0, sb = 0, saa = 0, sab = 0, sa4 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = a.normal(), y = b.normal();
        sa += x;
        sb += y;
        saa += x * x;
        sab += x * y;
        sa4 += x * x * x * x;
    }
    CHECK(std::abs(sa / n) < 5.0 / std::sqrt(n));
    CHECK(saa / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sa4 / n == doctest::Approx(3.0).epsilon(0.05));
    CHECK(std::abs(sab / n - (sa / n) * (sb / n)) < 5.0 / std::sqrt(n));
}
