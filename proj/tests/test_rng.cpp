#include "doctest.h"
#include "protoscope/rng.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace protoscope;

TEST_CASE("identical (seed, stream) pairs yield identical sequences") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different streams of the same seed diverge") {
    RngStream a(42, 0), b(42, 1);
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    CHECK(equal == 0);
}

TEST_CASE("substream derivation is deterministic") {
    RngStream root(9, 9);
    auto c1 = root.substream(3);
    auto c2 = root.substream(3);
    CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
    RngStream rng(1, 1);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform_int respects the bound and hits every value") {
    RngStream rng(5, 0);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        auto v = rng.uniform_int(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("gaussian has roughly unit variance and zero mean") {
    RngStream rng(11, 0);
    const int n = 40000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        double g = rng.gaussian();
        sum += g;
        sq += g * g;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    auto w = v;
    RngStream a(3, 3), b(3, 3);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::set<int> s(v.begin(), v.end());
    CHECK(s.size() == 50);
}
