#include "mudich/errors.hpp"
#include "mudich/resonance.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace mudich;

namespace {

Spectrum make_spectrum(std::vector<std::pair<double, double>> ivs, double tol = 0.0) {
    Spectrum s;
    for (auto [lo, hi] : ivs) s.intervals.push_back({lo, hi});
    s.tol = tol;
    return s;
}

} // namespace

TEST_CASE("weighted interval sums") {
    const auto s = make_spectrum({{-3.0, -2.0}, {1.0, 2.0}});
    const auto w = weighted_sum(s, {2, 0});
    CHECK(w.lo == doctest::Approx(-6.0));
    CHECK(w.hi == doctest::Approx(-4.0));

    const auto z = weighted_sum(s, {0, 0});
    CHECK(z.lo == 0.0);
    CHECK(z.hi == 0.0);

    const auto p = weighted_sum(make_spectrum({{1.0, 1.0}, {1.0, 1.0}}), {1, 1});
    CHECK(p.lo == doctest::Approx(2.0));
    CHECK(p.hi == doctest::Approx(2.0));
}

TEST_CASE("nonresonance verdicts on worked spectra") {
    const auto s = make_spectrum({{-3.0, -2.0}, {1.0, 2.0}});

    SUBCASE("j = 0, k = (2,0): gap on the left of lambda_1") {
        const auto v = check_nonresonance(s, 0, {2, 0});
        CHECK(v.status == ResonanceStatus::LeftGap);
        CHECK(v.dist == doctest::Approx(1.0));
    }
    SUBCASE("j = 1, k = (0,2): resonant (2 lies in both)") {
        const auto v = check_nonresonance(s, 1, {0, 2});
        CHECK(v.status == ResonanceStatus::Resonant);
    }
    SUBCASE("point spectrum: j = 1, k = (2,0) has a left gap of width 3") {
        const auto pt = make_spectrum({{-1.0, -1.0}, {1.0, 1.0}});
        const auto v = check_nonresonance(pt, 1, {2, 0});
        CHECK(v.status == ResonanceStatus::LeftGap);
        CHECK(v.dist == doctest::Approx(3.0));
    }
    SUBCASE("|k| < 2 is rejected") {
        CHECK_THROWS_AS((void)check_nonresonance(s, 0, {1, 0}), PreconditionError);
    }
    SUBCASE("dimension mismatch is rejected") {
        CHECK_THROWS_AS((void)check_nonresonance(s, 0, {2}), PreconditionError);
    }
}

TEST_CASE("multi-index enumeration is graded-lex and complete") {
    const auto k2 = multi_indices(2, 2);
    REQUIRE(k2.size() == 3);
    CHECK(k2[0] == MultiIndex{2, 0});
    CHECK(k2[1] == MultiIndex{1, 1});
    CHECK(k2[2] == MultiIndex{0, 2});
    CHECK(multi_indices(3, 3).size() == 10);
    CHECK(factorial_of({3, 2}) == doctest::Approx(12.0));
    CHECK(order_of({3, 2}) == 5);
}

TEST_CASE("H3 sweeps") {
    SUBCASE("saddle point spectrum passes at ell = 2 with min dist 1") {
        const auto rep = check_H3(make_spectrum({{-1.0, -1.0}, {1.0, 1.0}}), 2);
        CHECK(rep.pass);
        CHECK(rep.pairs_checked == 6);
        CHECK(rep.min_dist == doctest::Approx(1.0));
    }
    SUBCASE("single positive eigenvalue passes, zero eigenvalue resonates") {
        CHECK(check_H3(make_spectrum({{1.0, 1.0}}), 2).pass);
        const auto rep = check_H3(make_spectrum({{0.0, 0.0}}), 2);
        CHECK_FALSE(rep.pass);
        REQUIRE(rep.violations.size() == 1);
        CHECK(rep.violations[0].position == 0);
        CHECK(rep.violations[0].k == MultiIndex{2});
    }
    SUBCASE("{-2, 3} passes up to ell = 3 with min dist 1") {
        const auto rep = check_H3(make_spectrum({{-2.0, -2.0}, {3.0, 3.0}}), 3);
        CHECK(rep.pass);
        CHECK(rep.pairs_checked == 14);
        CHECK(rep.min_dist == doctest::Approx(1.0));
    }
    SUBCASE("budget cap") {
        CHECK_THROWS_AS((void)check_H3(make_spectrum({{-9, -8}, {-6, -5}, {-3, -2}, {2, 3},
                                                      {5, 6}, {8, 9}, {11, 12}, {14, 15}}),
                                       14, 1000),
                        BudgetError);
    }
}

TEST_CASE("tolerance inflation only shrinks certified gaps") {
    const auto tight = make_spectrum({{-1.0, -1.0}, {1.0, 1.0}}, 0.0);
    const auto loose = make_spectrum({{-1.0, -1.0}, {1.0, 1.0}}, 0.05);
    const auto v0 = check_nonresonance(tight, 1, {2, 0});
    const auto v1 = check_nonresonance(loose, 1, {2, 0});
    CHECK(v1.status == v0.status);
    CHECK(v1.dist < v0.dist);
}

TEST_CASE("oracle equivalence on random spectra") {
    std::mt19937_64 rng(414213);
    std::uniform_real_distribution<double> gap(0.05, 2.0);
    std::uniform_int_distribution<int> n_dist(1, 4);
    std::uniform_int_distribution<int> order_dist(2, 4);

    for (int trial = 0; trial < 1000; ++trial) {
        const int n = n_dist(rng);
        // Random disjoint sorted intervals.
        Spectrum s;
        double cursor = -6.0 + gap(rng);
        for (int i = 0; i < n; ++i) {
            const double lo = cursor + gap(rng);
            const double hi = lo + 0.5 * gap(rng);
            s.intervals.push_back({lo, hi});
            cursor = hi;
        }
        // Random multi-index with |k| in [2, 4].
        MultiIndex k(n, 0);
        const int order = order_dist(rng);
        std::uniform_int_distribution<int> slot(0, n - 1);
        for (int c = 0; c < order; ++c) ++k[slot(rng)];
        const int j = slot(rng);

        // Brute-force overlap oracle.
        double slo = 0.0, shi = 0.0;
        for (int i = 0; i < n; ++i) {
            slo += k[i] * s.intervals[i].lo;
            shi += k[i] * s.intervals[i].hi;
        }
        const double a = s.intervals[j].lo, b = s.intervals[j].hi;
        const bool disjoint = b < slo || a > shi;
        const double set_distance = disjoint ? std::max(slo - b, a - shi) : 0.0;

        const auto v = check_nonresonance(s, j, k);
        if (!disjoint) {
            CHECK(v.status == ResonanceStatus::Resonant);
        } else {
            CHECK(v.status != ResonanceStatus::Resonant);
            CHECK(v.dist == doctest::Approx(set_distance).epsilon(1e-12));
            CHECK(v.dist > 0.0);
        }
    }
}

TEST_CASE("shrinking intervals never turns a pass into a fail") {
    std::mt19937_64 rng(161803);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Spectrum wide = make_spectrum({{-3.0 - u(rng), -2.0}, {1.0, 2.0 + u(rng)}});
        Spectrum narrow = wide;
        for (auto& iv : narrow.intervals) {
            const double mid = 0.5 * (iv.lo + iv.hi);
            iv.lo = mid + (iv.lo - mid) * 0.5;
            iv.hi = mid + (iv.hi - mid) * 0.5;
        }
        for (const auto& k : multi_indices(2, 2))
            for (int j = 0; j < 2; ++j) {
                const auto vw = check_nonresonance(wide, j, k);
                const auto vn = check_nonresonance(narrow, j, k);
                if (vw.status != ResonanceStatus::Resonant)
                    CHECK(vn.status != ResonanceStatus::Resonant);
            }
    }
}
