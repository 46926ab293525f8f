#include "mudich/errors.hpp"
#include "mudich/homological.hpp"
#include "mudich/nonuniform.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

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

NonuniformContext uniform_ctx() {
    return NonuniformContext::from_constants({-0.2}, {0.2}, {0.0}, {0.0}, 1.0, 0.2);
}

NonuniformContext skewed_ctx(double theta, double nu) {
    return NonuniformContext::from_constants({-0.5}, {0.5}, {theta}, {nu}, 1.2, 0.2);
}

} // namespace

TEST_CASE("context invariants are enforced") {
    CHECK_THROWS_AS((void)NonuniformContext::from_constants({-0.1}, {0.5}, {0.2}, {0.0}, 1.0, 0.1),
                    PreconditionError); // alpha + theta >= 0
    CHECK_THROWS_AS((void)NonuniformContext::from_constants({-0.5}, {0.1}, {0.0}, {0.2}, 1.0, 0.1),
                    PreconditionError); // beta - nu <= 0
    CHECK_THROWS_AS((void)NonuniformContext::from_constants({-0.5}, {0.5}, {0.0}, {0.0}, 0.5, 0.1),
                    PreconditionError); // K < 1
}

TEST_CASE("eta with vanishing nonuniform exponents is identically 1") {
    const auto ctx = uniform_ctx();
    for (const GrowthRate& rate : {GrowthRate::exponential(), GrowthRate::polynomial()})
        for (double t : {-4.0, -0.5, 0.0, 1.0, 6.0}) {
            CHECK(eta_plus(ctx, rate, 0, {2}, t) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(eta_minus(ctx, rate, 0, {2}, t) == doctest::Approx(1.0).epsilon(1e-9));
        }
}

TEST_CASE("eta against the closed-form oracle and the brute-force scan") {
    const auto rate = GrowthRate::exponential();
    const auto ctx = skewed_ctx(0.1, 0.15);

    SUBCASE("closed form: the sup sits at s = t") {
        for (double t : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
            // eta^+ = mu(t)^{sgn(t)(nu_j + sum k_i theta_i)} for decaying exponents.
            const double expect_p = std::exp(sgn(t) * (0.15 + 2 * 0.1) * rate.log_value(t));
            CHECK(eta_plus(ctx, rate, 0, {2}, t) == doctest::Approx(expect_p).epsilon(0.01));
            const double expect_m = std::exp(sgn(t) * (0.1 + 2 * 0.15) * rate.log_value(t));
            CHECK(eta_minus(ctx, rate, 0, {2}, t) == doctest::Approx(expect_m).epsilon(0.01));
        }
    }

    SUBCASE("brute-force 1e5-point scan at t = 0") {
        const double t = 0.0;
        const double E = ctx.beta[0] - 2 * ctx.alpha[0];
        double brute = 0.0;
        for (int i = 0; i < 100000; ++i) {
            const double s = t + 30.0 * i / 99999.0;
            brute = std::max(brute, std::exp(-E * (s - t) + ctx.nu[0] * std::abs(s)));
        }
        CHECK(eta_plus(ctx, rate, 0, {2}, t) == doctest::Approx(brute).epsilon(0.01));
    }

    SUBCASE("sup dominates the member at s = t") {
        for (double t : {-2.0, 0.0, 1.5}) {
            const double member = std::exp(sgn(t) * (0.15 + 0.2) * rate.log_value(t));
            CHECK(eta_plus(ctx, rate, 0, {2}, t) >= member * (1.0 - 1e-9));
        }
    }

    SUBCASE("doubling the theta exponents weakly increases eta_plus") {
        const auto doubled = skewed_ctx(0.2, 0.15);
        for (double t : {-2.0, 0.0, 1.5})
            CHECK(eta_plus(doubled, rate, 0, {2}, t) >=
                  eta_plus(ctx, rate, 0, {2}, t) * (1.0 - 1e-9));
    }
}

TEST_CASE("nonuniform h bound") {
    const auto rate = GrowthRate::exponential();
    const auto psi = AdmissibleCandidate::bounded_const(2.0);
    const ResonanceVerdict left{ResonanceStatus::LeftGap, 1.0};

    SUBCASE("x = 0 gives 0") {
        const auto ctx = uniform_ctx();
        CHECK(nonuniform_h_bound(ctx, rate, psi, left, 0, {2}, 0.5, vec1(0.0), {1}) == 0.0);
    }

    SUBCASE("theta = nu = 0 coincides with the uniform bound within 1%") {
        // The closed-form scalar scenario of the homological module.
        auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
            std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0))}));
        ConjugationMap::Pieces p;
        p.op = op;
        p.rate = rate;
        CoeffTensor base = CoeffTensor::zero(0, {2}, {1});
        base.insert({2}, vec1(1.0));
        p.coeff = [base](double) { return base; };
        p.psi = psi;
        p.verdict = left;
        p.position = 0;
        p.k = {2};
        p.K = 1.0;
        p.eps = 1.0 / 6.0;
        const ConjugationMap map(std::move(p));

        const auto ctx = NonuniformContext::from_constants({-1.0 / 6}, {1.0 / 6}, {0.0}, {0.0},
                                                           1.0, 1.0 / 6.0);
        for (double t : {-2.0, 0.0, 1.5})
            for (double x : {0.05, -0.1}) {
                const double uniform = map.h_bound(t, vec1(x));
                const double degraded =
                    nonuniform_h_bound(ctx, rate, psi, left, 0, {2}, t, vec1(x), {1});
                CHECK(degraded == doctest::Approx(uniform).epsilon(0.01));
            }
    }

    SUBCASE("a genuinely nonuniform context dominates sampled h values") {
        auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
            std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0))}));
        ConjugationMap::Pieces p;
        p.op = op;
        p.rate = rate;
        CoeffTensor base = CoeffTensor::zero(0, {2}, {1});
        base.insert({2}, vec1(1.0));
        p.coeff = [base](double) { return base; };
        p.psi = psi;
        p.verdict = left;
        p.position = 0;
        p.k = {2};
        p.K = 1.0;
        p.eps = 1.0 / 6.0;
        const ConjugationMap map(std::move(p));

        const auto ctx = skewed_ctx(0.05, 0.05);
        for (double t : {-1.0, 0.0, 2.0})
            for (double x : {0.04, -0.08}) {
                const double h = std::abs(map.h_eval(t, vec1(x))(0));
                CHECK(nonuniform_h_bound(ctx, rate, psi, left, 0, {2}, t, vec1(x), {1}) >=
                      h * (1.0 - 1e-9));
            }
    }
}

TEST_CASE("shrinkage report") {
    const auto rate = GrowthRate::exponential();
    const auto psi = AdmissibleCandidate::bounded_const(2.0);
    const ResonanceVerdict left{ResonanceStatus::LeftGap, 1.0};
    const std::vector<double> grid = {-2.0, -1.0, 0.0, 1.0, 2.0};

    SUBCASE("theta = nu = 0 gives ratio 1 within 1%") {
        const auto rows = shrinkage_report(uniform_ctx(), rate, psi, left, 0, {2}, grid);
        REQUIRE(rows.size() == grid.size());
        for (const auto& row : rows) {
            CHECK(row.ratio == doctest::Approx(1.0).epsilon(0.01));
            CHECK(row.xi_uniform > 0.0);
        }
    }

    SUBCASE("positive theta shrinks the trumpet somewhere") {
        const auto rows = shrinkage_report(skewed_ctx(0.2, 0.2), rate, psi, left, 0, {2}, grid);
        bool shrunk = false;
        for (const auto& row : rows) shrunk |= row.ratio < 0.99;
        CHECK(shrunk);
    }

    SUBCASE("empty grid gives an empty report") {
        CHECK(shrinkage_report(uniform_ctx(), rate, psi, left, 0, {2}, {}).empty());
    }
}

TEST_CASE("fitting the context from a system") {
    const auto rate = GrowthRate::exponential();

    SUBCASE("constant scalar block") {
        auto op = std::make_shared<EvolutionOperator>(std::make_shared<BlockSystem>(
            std::vector<BlockCoefficient>{BlockCoefficient::constant_block(scalar(-1.0))}));
        Spectrum spec;
        spec.intervals.push_back({-1.0, -1.0});
        const auto ctx = NonuniformContext::fit(*op, rate, spec, 0.25);
        CHECK(ctx.alpha[0] == doctest::Approx(-0.25).epsilon(0.05));
        CHECK(ctx.beta[0] == doctest::Approx(0.25).epsilon(0.05));
        CHECK(ctx.theta[0] == doctest::Approx(0.0).epsilon(0.02));
        CHECK(ctx.nu[0] == doctest::Approx(0.0).epsilon(0.02));
        CHECK(ctx.K >= 1.0);
    }

    SUBCASE("oscillating coefficient fits with a bigger envelope") {
        auto op = std::make_shared<EvolutionOperator>(
            std::make_shared<BlockSystem>(std::vector<BlockCoefficient>{
                BlockCoefficient::smooth_block(
                    [](double t) { return Matrix(scalar(-1.0 + 0.3 * std::cos(t))); }, 1)}));
        Spectrum spec;
        spec.intervals.push_back({-1.0, -1.0});
        DichotomyOptions opts;
        opts.horizon_u = 12.0;
        const auto ctx = NonuniformContext::fit(*op, rate, spec, 0.3, opts);
        CHECK(ctx.alpha[0] + ctx.theta[0] < 0.0);
        CHECK(ctx.beta[0] - ctx.nu[0] > 0.0);
        CHECK(ctx.theta[0] >= 0.0);
    }
}
