#include "mudich/errors.hpp"
#include "mudich/homological.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

using namespace mudich;

namespace {

Vector vec1(double v) {
    Vector x(1);
    x(0) = v;
    return x;
}

Matrix scalar(double a) {
    Matrix m(1, 1);
    m(0, 0) = a;
    return m;
}

Spectrum point_spectrum(std::vector<double> points, double tol = 0.0) {
    Spectrum s;
    for (double p : points) s.intervals.push_back({p, p});
    s.tol = tol;
    return s;
}

/// Scalar a == -1, exponential rate, F(t,x) = profile(t) x^2. With a
/// constant profile the conjugation has the closed form h(t,x) = x^2.
struct ScalarFixture {
    std::shared_ptr<const EvolutionOperator> op;
    GrowthRate rate = GrowthRate::exponential();
    Nonlinearity nl;
    Spectrum spectrum = point_spectrum({-1.0});

    explicit ScalarFixture(std::function<double(double)> profile = nullptr,
                           AdmissibleCandidate psi = AdmissibleCandidate::bounded_const(2.0))
        : op(std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
              std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0))}))),
          nl([&] {
              CoeffTensor base = CoeffTensor::zero(0, {2}, {1});
              base.insert({2}, vec1(1.0));
              NonlinearTerm term{std::move(base), profile, profile ? "custom" : "const",
                                 !profile};
              return Nonlinearity::from_terms({1}, 2, {std::move(term)}, std::move(psi));
          }()) {}

    [[nodiscard]] ConjugationMap map() const {
        return ConjugationMap(op, rate, nl, spectrum, 0, {2});
    }
};

/// Manufactured map with zeta == 1: K = 1, n = 1, psi = delta * const.
ConjugationMap unit_zeta_map() {
    auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
        std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0))}));
    ConjugationMap::Pieces p;
    p.op = op;
    p.rate = GrowthRate::exponential();
    CoeffTensor base = CoeffTensor::zero(0, {2}, {1});
    base.insert({2}, vec1(1.0));
    p.coeff = [base](double) { return base; };
    p.psi = AdmissibleCandidate::bounded_const(0.5);
    p.verdict = {ResonanceStatus::LeftGap, 1.0};
    p.position = 0;
    p.k = {2};
    p.K = 1.0;
    p.eps = 1.0 / 6.0;
    return ConjugationMap(std::move(p));
}

} // namespace

TEST_CASE("closed-form scalar scenario: h(t,x) = x^2") {
    ScalarFixture fx;
    const auto map = fx.map();
    CHECK(map.verdict().status == ResonanceStatus::LeftGap);
    CHECK(map.dist() == doctest::Approx(1.0));
    CHECK(map.fitted_K() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(map.epsilon() == doctest::Approx(1.0 / 6.0));
    CHECK(map.zeta(0.3) == doctest::Approx(4.0).epsilon(1e-8));

    std::mt19937_64 rng(31415);
    std::uniform_real_distribution<double> ut(-4.0, 4.0);
    for (int it = 0; it < 50; ++it) {
        const double t = ut(rng);
        std::uniform_real_distribution<double> ux(-map.trumpet_radius(t), map.trumpet_radius(t));
        const double x = ux(rng);
        CHECK(map.h_eval(t, vec1(x))(0) == doctest::Approx(x * x).epsilon(1e-6));
    }
    CHECK(map.h_eval(1.0, vec1(0.0))(0) == 0.0);
}

TEST_CASE("gaussian-coefficient scalar scenario against independent quadrature") {
    ScalarFixture fx([](double t) { return std::exp(-t * t); }, AdmissibleCandidate::gaussian(2.0));
    const auto map = fx.map();

    auto oracle = [](double t, double x) {
        // h = x^2 e^t int_t^inf e^{-s - s^2} ds, and the closed erfc form.
        return x * x * std::exp(t) * std::exp(0.25) * 0.5 * std::sqrt(M_PI) *
               std::erfc(t + 0.5);
    };
    auto brute = [](double t, double x) {
        // Fixed-grid composite rule at ten times the adaptive resolution.
        const int panels = 400000;
        const double hi = t + 40.0;
        double sum = 0.0;
        const double h = (hi - t) / panels;
        for (int i = 0; i <= panels; ++i) {
            const double s = t + i * h;
            const double w = (i == 0 || i == panels) ? 0.5 : 1.0;
            sum += w * std::exp(t - s - s * s);
        }
        return x * x * sum * h;
    };
    for (double t : {-1.5, -0.3, 0.0, 0.9, 2.0}) {
        const double x = 0.05;
        const double h = map.h_eval(t, vec1(x))(0);
        CHECK(h == doctest::Approx(oracle(t, x)).epsilon(1e-6));
        CHECK(h == doctest::Approx(brute(t, x)).epsilon(1e-6));
    }
}

TEST_CASE("two-block right-gap scenario: h_1 = -x_2^2 / 3") {
    auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
        std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0)),
                                      BlockCoefficient::constant_block(scalar(1.0))}));
    CoeffTensor base = CoeffTensor::zero(0, {0, 2}, {1, 1});
    base.insert({0, 2}, vec1(1.0));
    auto nl = Nonlinearity::from_terms({1, 1}, 2, {{std::move(base), nullptr, "const", true}},
                                       AdmissibleCandidate::bounded_const(2.0));
    const auto spectrum = point_spectrum({-1.0, 1.0});
    ConjugationMap map(op, GrowthRate::exponential(), nl, spectrum, 0, {0, 2});

    CHECK(map.verdict().status == ResonanceStatus::RightGap);
    CHECK(map.dist() == doctest::Approx(3.0));

    Vector x(2);
    for (double t : {-2.0, 0.0, 1.5})
        for (double x2 : {-0.1, 0.05, 0.2}) {
            x << 0.3, x2;
            const Vector h = map.h_eval(t, x);
            CHECK(h(0) == doctest::Approx(-x2 * x2 / 3.0).epsilon(1e-8));
            CHECK(h(1) == 0.0);
        }
}

TEST_CASE("derivatives of the conjugation") {
    ScalarFixture fx;
    const auto map = fx.map();

    SUBCASE("d2h vanishes at the origin and matches the closed form") {
        CHECK(map.d2h_eval(0.7, vec1(0.0), vec1(1.0))(0) == doctest::Approx(0.0));
        CHECK(map.d2h_eval(0.7, vec1(1.0), vec1(1.0))(0) == doctest::Approx(2.0).epsilon(1e-6));
    }

    SUBCASE("d2h agrees with finite differences") {
        const double eps = 1e-5;
        for (double t : {-1.0, 0.5})
            for (double x : {0.02, -0.07}) {
                const double fd =
                    (map.h_eval(t, vec1(x + eps))(0) - map.h_eval(t, vec1(x - eps))(0)) /
                    (2.0 * eps);
                CHECK(map.d2h_eval(t, vec1(x), vec1(1.0))(0) ==
                      doctest::Approx(fd).epsilon(1e-5));
            }
    }

    SUBCASE("d1h vanishes for the autonomous closed form") {
        CHECK(std::abs(map.d1h_eval(0.3, vec1(0.08))(0)) < 1e-5);
        CHECK(map.d1h_eval(0.3, vec1(0.0))(0) == 0.0);
    }

    SUBCASE("d1h agrees with finite differences in t for the gaussian profile") {
        ScalarFixture gfx([](double t) { return std::exp(-t * t); },
                          AdmissibleCandidate::gaussian(2.0));
        const auto gmap = gfx.map();
        const double eps = 1e-5;
        for (double t : {-0.8, 0.4})
            for (double x : {0.03, -0.06}) {
                const double fd =
                    (gmap.h_eval(t + eps, vec1(x))(0) - gmap.h_eval(t - eps, vec1(x))(0)) /
                    (2.0 * eps);
                CHECK(gmap.d1h_eval(t, vec1(x))(0) == doctest::Approx(fd).epsilon(1e-4));
            }
    }
}

TEST_CASE("trumpet radius") {
    SUBCASE("unit zeta: |k| = 2, K = 1, n = 1 gives xi = 1/2") {
        const auto map = unit_zeta_map();
        CHECK(map.zeta(0.0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(map.trumpet_radius(0.0) == doctest::Approx(0.5).epsilon(1e-8));
    }
    SUBCASE("xi grows when zeta shrinks") {
        ScalarFixture gfx([](double t) { return std::exp(-t * t); },
                          AdmissibleCandidate::gaussian(2.0));
        const auto map = gfx.map();
        CHECK(map.zeta(6.0) < map.zeta(0.0));
        CHECK(map.trumpet_radius(6.0) > map.trumpet_radius(0.0));
    }
    SUBCASE("on the trumpet boundary the contraction bound 1/2 holds") {
        ScalarFixture fx;
        const auto map = fx.map();
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> ut(-3.0, 3.0);
        for (int it = 0; it < 100; ++it) {
            const double t = ut(rng);
            const double xi = map.trumpet_radius(t);
            const double x = (it % 2 == 0 ? 1.0 : -1.0) * xi;
            CHECK(std::abs(map.d2h_eval(t, vec1(x), vec1(1.0))(0)) <= 0.5 + 1e-6);
        }
    }
}

TEST_CASE("tubular radius") {
    SUBCASE("K = 1, n = 1, M = 1, k = (2) gives rho = 1/2") {
        CHECK(unit_zeta_map().tubular_radius() == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("rho decreases as M grows") {
        ScalarFixture small_psi(nullptr, AdmissibleCandidate::bounded_const(2.0));
        ScalarFixture large_psi(nullptr, AdmissibleCandidate::bounded_const(40.0));
        CHECK(large_psi.map().tubular_radius() < small_psi.map().tubular_radius());
    }
    SUBCASE("invariance on the tubular neighborhood") {
        ScalarFixture fx;
        const auto map = fx.map();
        const double rho = map.tubular_radius();
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> ut(-3.0, 3.0), ux(-rho, rho);
        for (int it = 0; it < 100; ++it) {
            const double t = ut(rng), x = ux(rng);
            const double h = map.h_eval(t, vec1(x))(0);
            CHECK(std::abs(h) <= rho * (1.0 + 1e-9));
            CHECK(std::abs(h) <= 0.5 * std::abs(x) + 1e-12);
        }
    }
}

TEST_CASE("h and D2h domination bounds on random in-trumpet samples") {
    ScalarFixture fx;
    const auto map = fx.map();
    std::mt19937_64 rng(1729);
    std::uniform_real_distribution<double> ut(-3.0, 3.0);
    for (int it = 0; it < 1000; ++it) {
        const double t = ut(rng);
        const double xi = map.trumpet_radius(t);
        std::uniform_real_distribution<double> ux(-xi, xi);
        const double x = ux(rng);
        CHECK(std::abs(map.h_eval(t, vec1(x))(0)) <= map.h_bound(t, vec1(x)) * (1.0 + 1e-9));
        const double d2_bound =
            1.0 * std::pow(map.fitted_K(), 3) * map.zeta(t) * std::abs(x);
        CHECK(std::abs(map.d2h_eval(t, vec1(x), vec1(1.0))(0)) <= d2_bound * (1.0 + 1e-6) + 1e-12);
    }
    CHECK(map.h_bound(0.0, vec1(0.0)) == 0.0);
}

TEST_CASE("vanishing Taylor data of h at the origin") {
    ScalarFixture fx;
    const auto map = fx.map();
    const double h_step = 1e-4;
    for (double t : {-2.0, 0.0, 3.0}) {
        // First derivative at 0 vanishes (m = (1) != k).
        const double d1 = (map.h_eval(t, vec1(h_step))(0) - map.h_eval(t, vec1(-h_step))(0)) /
                          (2.0 * h_step);
        CHECK(std::abs(d1) <= 1e-5);
        // Second derivative stays below n^{|k|} M.
        const double d2 = (map.h_eval(t, vec1(h_step))(0) - 2.0 * map.h_eval(t, vec1(0.0))(0) +
                           map.h_eval(t, vec1(-h_step))(0)) /
                          (h_step * h_step);
        CHECK(std::abs(d2) <= 1.0 * map.zeta_sup() + 1e-6);
    }
}

TEST_CASE("H and H_inverse") {
    const auto map = unit_zeta_map();

    SUBCASE("H is the identity plus h") {
        CHECK(map.H_eval(0.2, vec1(0.0))(0) == 0.0);
        CHECK(map.H_eval(0.2, vec1(1.0))(0) == doctest::Approx(2.0).epsilon(1e-7));
    }

    SUBCASE("quadratic-formula oracle at y = 0.1") {
        const double expect = (-1.0 + std::sqrt(1.4)) / 2.0;
        InverseStats stats;
        const double x = map.H_inverse(0.0, vec1(0.1), &stats)(0);
        CHECK(x == doctest::Approx(expect).epsilon(1e-9));
        CHECK(stats.iterations <= 60);
        CHECK(stats.contraction <= 0.55);
    }

    SUBCASE("y = 0 maps to 0") {
        CHECK(map.H_inverse(1.0, vec1(0.0))(0) == 0.0);
    }

    // The domain guarantees need a map whose psi really dominates the
    // coefficient, so the sampling below runs on the (H2)-sound fixture.
    ScalarFixture fx;
    const auto sound = fx.map();

    SUBCASE("round trip on 100 random in-domain points") {
        const double rho = sound.tubular_radius();
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> ut(-3.0, 3.0), uy(-0.5 * rho, 0.5 * rho);
        for (int it = 0; it < 100; ++it) {
            const double t = ut(rng), y = uy(rng);
            const double x = sound.H_inverse(t, vec1(y))(0);
            CHECK(std::abs(sound.H_eval(t, vec1(x))(0) - y) < 1e-8);
        }
    }

    SUBCASE("Lipschitz constants: 3/2 for H, 2 for H_inverse, 1/2 for h") {
        const double rho = sound.tubular_radius();
        std::mt19937_64 rng(29);
        std::uniform_real_distribution<double> ut(-2.0, 2.0), uy(-0.5 * rho, 0.5 * rho);
        for (int it = 0; it < 200; ++it) {
            const double t = ut(rng), a = uy(rng), b = uy(rng);
            if (a == b) continue;
            const double dh = std::abs(sound.h_eval(t, vec1(a))(0) - sound.h_eval(t, vec1(b))(0));
            CHECK(dh <= 0.5 * std::abs(a - b) + 1e-12);
            const double dH = std::abs(sound.H_eval(t, vec1(a))(0) - sound.H_eval(t, vec1(b))(0));
            CHECK(dH <= 1.5 * std::abs(a - b) + 1e-12);
            const double dInv =
                std::abs(sound.H_inverse(t, vec1(a))(0) - sound.H_inverse(t, vec1(b))(0));
            CHECK(dInv <= 2.0 * std::abs(a - b) + 1e-10);
        }
    }
}

TEST_CASE("quadrature self-consistency under tail-tol halving") {
    ScalarFixture fx([](double t) { return std::exp(-t * t); }, AdmissibleCandidate::gaussian(2.0));
    HomologicalOptions coarse;
    coarse.tail_tol = 1e-6;
    HomologicalOptions fine;
    fine.tail_tol = 5e-7;
    const ConjugationMap m_coarse(fx.op, fx.rate, fx.nl, fx.spectrum, 0, {2}, coarse);
    const ConjugationMap m_fine(fx.op, fx.rate, fx.nl, fx.spectrum, 0, {2}, fine);
    for (double t : {-1.0, 0.0, 2.0}) {
        const double a = m_coarse.h_eval(t, vec1(0.05))(0);
        const double b = m_fine.h_eval(t, vec1(0.05))(0);
        CHECK(std::abs(a - b) < 10.0 * coarse.tail_tol);
    }
}

TEST_CASE("construction guards") {
    ScalarFixture fx;
    SUBCASE("resonant targets are rejected") {
        const auto zero_spec = point_spectrum({0.0});
        CHECK_THROWS_AS(ConjugationMap(fx.op, fx.rate, fx.nl, zero_spec, 0, {2}),
                        PreconditionError);
    }
    SUBCASE("|k| = 1 is rejected") {
        CHECK_THROWS_AS(ConjugationMap(fx.op, fx.rate, fx.nl, fx.spectrum, 0, {1}),
                        PreconditionError);
    }
}

TEST_CASE("vanishing Taylor data of the two-block conjugation") {
    auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
        std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0)),
                                      BlockCoefficient::constant_block(scalar(1.0))}));
    CoeffTensor base = CoeffTensor::zero(0, {0, 2}, {1, 1});
    base.insert({0, 2}, vec1(1.0));
    auto nl = Nonlinearity::from_terms({1, 1}, 2, {{std::move(base), nullptr, "const", true}},
                                       AdmissibleCandidate::bounded_const(2.0));
    const auto spectrum = point_spectrum({-1.0, 1.0});
    ConjugationMap map(op, GrowthRate::exponential(), nl, spectrum, 0, {0, 2});

    // Finite-difference estimates of D_2^m h(t, 0) for every m != k with
    // |m| <= 2 must vanish; h = -x_2^2/3 so only m = (0,2) survives.
    const double h = 1e-4;
    auto at = [&](double t, double x1, double x2) {
        Vector x(2);
        x << x1, x2;
        return map.h_eval(t, x)(0);
    };
    for (double t : {-1.0, 0.0, 2.0}) {
        const double d10 = (at(t, h, 0) - at(t, -h, 0)) / (2 * h);
        const double d01 = (at(t, 0, h) - at(t, 0, -h)) / (2 * h);
        const double d20 = (at(t, h, 0) - 2 * at(t, 0, 0) + at(t, -h, 0)) / (h * h);
        const double d11 = (at(t, h, h) - at(t, h, -h) - at(t, -h, h) + at(t, -h, -h)) /
                           (4 * h * h);
        CHECK(std::abs(d10) <= 1e-5);
        CHECK(std::abs(d01) <= 1e-5);
        CHECK(std::abs(d20) <= 1e-5);
        CHECK(std::abs(d11) <= 1e-5);
        const double d02 = (at(t, 0, h) - 2 * at(t, 0, 0) + at(t, 0, -h)) / (h * h);
        CHECK(d02 == doctest::Approx(-2.0 / 3.0).epsilon(1e-5));
    }
}
