#include "mudich/errors.hpp"
#include "mudich/nonlinearity.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mudich;

namespace {

Vector vec1(double v) {
    Vector x(1);
    x(0) = v;
    return x;
}

/// Scalar F(t,x) = profile(t) * c * x^2 on a single 1-d block.
Nonlinearity scalar_quadratic(double c, std::function<double(double)> profile = nullptr,
                              AdmissibleCandidate psi = AdmissibleCandidate::bounded_const(2.0)) {
    CoeffTensor base = CoeffTensor::zero(0, {2}, {1});
    base.insert({2}, vec1(c));
    NonlinearTerm term{std::move(base), profile, profile ? "custom" : "const", !profile};
    return Nonlinearity::from_terms({1}, 2, {std::move(term)}, std::move(psi));
}

/// Two scalar blocks, F_1(t,x) = c * x_2^2.
Nonlinearity cross_quadratic(double c) {
    CoeffTensor base = CoeffTensor::zero(0, {0, 2}, {1, 1});
    base.insert({0, 2}, vec1(c));
    NonlinearTerm term{std::move(base), nullptr, "const", true};
    return Nonlinearity::from_terms({1, 1}, 2, {std::move(term)},
                                    AdmissibleCandidate::bounded_const(2.0 * std::abs(c)));
}

} // namespace

TEST_CASE("tensor apply on worked examples") {
    SUBCASE("scalar c x^2 at x = 2 gives 4c") {
        CoeffTensor t = CoeffTensor::zero(0, {2}, {1});
        t.insert({2}, vec1(1.5));
        CHECK(taylor_tensor_apply(t, {vec1(2.0)}, {1})(0) == doctest::Approx(6.0));
    }
    SUBCASE("bilinear coupling across two blocks") {
        CoeffTensor t = CoeffTensor::zero(0, {1, 1}, {1, 1});
        t.insert({1, 1}, vec1(0.8));
        const Vector out = taylor_tensor_apply(t, {vec1(1.0), vec1(3.0)}, {1, 1});
        CHECK(out(0) == doctest::Approx(3.0 * 0.8));
    }
    SUBCASE("zero vector in an occupied slot annihilates") {
        CoeffTensor t = CoeffTensor::zero(0, {1, 1}, {1, 1});
        t.insert({1, 1}, vec1(0.8));
        CHECK(taylor_tensor_apply(t, {vec1(0.0), vec1(3.0)}, {1, 1})(0) == 0.0);
    }
    SUBCASE("dimension mismatch raises") {
        CoeffTensor t = CoeffTensor::zero(0, {1, 1}, {1, 1});
        t.insert({1, 1}, vec1(0.8));
        Vector bad(2);
        bad << 1.0, 2.0;
        CHECK_THROWS_AS((void)taylor_tensor_apply(t, {bad, vec1(1.0)}, {1, 1}),
                        PreconditionError);
    }
}

TEST_CASE("tensor scaling and jacobian") {
    // P(w) = w0^2 w1 on a 2-d block + 1-d block split (k = (2,1)).
    CoeffTensor t = CoeffTensor::zero(0, {2, 1}, {2, 1});
    std::vector<int> beta = {2, 0, 1};
    t.insert(beta, (Vector(2) << 1.0, 0.5).finished());

    Vector w(3);
    w << 2.0, -1.0, 3.0;
    const Vector base = t.apply(w);
    CHECK(base(0) == doctest::Approx(12.0));
    CHECK(base(1) == doctest::Approx(6.0));

    SUBCASE("scaling law: apply(s x) = s^{|k|} apply(x)") {
        const double s = 0.37;
        const Vector scaled = t.apply(s * w);
        for (int c = 0; c < 2; ++c)
            CHECK(scaled(c) == doctest::Approx(std::pow(s, 3) * base(c)).epsilon(1e-12));
    }

    SUBCASE("jacobian matches finite differences") {
        std::mt19937_64 rng(99);
        std::normal_distribution<double> gauss;
        for (int it = 0; it < 20; ++it) {
            Vector dir(3);
            for (int c = 0; c < 3; ++c) dir(c) = gauss(rng);
            const double h = 1e-6;
            const Vector fd = (t.apply(w + h * dir) - t.apply(w - h * dir)) / (2.0 * h);
            const Vector an = t.apply_jacobian(w, dir);
            CHECK((fd - an).norm() <= 1e-6 * std::max(1.0, an.norm()));
        }
    }
}

TEST_CASE("eval is consistent with the Taylor data at small radii") {
    auto nl = scalar_quadratic(1.0);
    for (double r : {1e-2, 1e-3}) {
        const double f = nl.eval(0.3, vec1(r))(0);
        CHECK(f == doctest::Approx(r * r).epsilon(1e-12));
    }
    CHECK(nl.time_invariant());

    auto nl2 = scalar_quadratic(1.0, [](double t) { return std::exp(-t * t); });
    CHECK_FALSE(nl2.time_invariant());
    CHECK(nl2.eval(1.0, vec1(0.1))(0) == doctest::Approx(std::exp(-1.0) * 0.01));
    CHECK(nl2.taylor_coeff(0, {2}, 1.0).entries.at({2})(0) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("verify_H2 verdicts") {
    const auto rate = GrowthRate::exponential();

    SUBCASE("gaussian coefficient dominated by matching psi passes") {
        // D2^2 F(t,0) = 2 c(t) with c(t) = e^{-t^2}/2, so the derivative
        // norm equals the gaussian psi exactly.
        auto nl = scalar_quadratic(0.5, [](double t) { return std::exp(-t * t); },
                                   AdmissibleCandidate::gaussian());
        const auto rep = verify_H2(nl, rate, H2Mode::Admissible);
        CHECK(rep.pass);
        CHECK(rep.violations.empty());
        CHECK(rep.origin_residual <= 1e-5);
    }

    SUBCASE("zero nonlinearity with zero psi passes") {
        auto nl = Nonlinearity::from_terms({1}, 2, {}, AdmissibleCandidate::zero());
        CHECK(verify_H2(nl, rate, H2Mode::Admissible).pass);
    }

    SUBCASE("coefficient t*x^2 escapes a gaussian psi at large |t|") {
        auto nl = scalar_quadratic(0.5, [](double t) { return t; },
                                   AdmissibleCandidate::gaussian());
        const auto rep = verify_H2(nl, rate, H2Mode::Admissible);
        CHECK_FALSE(rep.pass);
        CHECK(!rep.violations.empty());
        bool large_t = false;
        for (const auto& v : rep.violations) large_t |= std::abs(v.t) > 1.0;
        CHECK(large_t);
    }

    SUBCASE("uniform mode certifies bounded psi") {
        auto nl = scalar_quadratic(1.0);
        const auto rep = verify_H2(nl, rate, H2Mode::Uniform, {0.5});
        CHECK(rep.pass);
        REQUIRE(rep.uniform.has_value());
        CHECK(rep.uniform->uniform);
    }
}

TEST_CASE("block symmetry: permuting repeated arguments changes nothing") {
    // Symmetric tensor on a 2-d block, k = (2): P(w) = w0 w1 represents the
    // symmetrized form; apply only sees the diagonal, which is invariant.
    CoeffTensor t = CoeffTensor::zero(0, {2}, {2});
    t.insert({1, 1}, (Vector(2) << 1.0, -2.0).finished());
    Vector w(2);
    w << 0.7, -0.3;
    const Vector a = t.apply(w);
    // The multilinear form B(u, v) = (u0 v1 + u1 v0)/2 * coeff is symmetric;
    // its diagonal evaluation equals the monomial value.
    CHECK(a(0) == doctest::Approx(0.7 * -0.3));
}

TEST_CASE("cross-block term evaluates into the right component") {
    auto nl = cross_quadratic(1.0);
    Vector x(2);
    x << 0.5, 0.2;
    const Vector f = nl.eval(0.0, x);
    CHECK(f(0) == doctest::Approx(0.04));
    CHECK(f(1) == 0.0);
}
