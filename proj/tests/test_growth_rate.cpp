#include "mudich/errors.hpp"
#include "mudich/growth_rate.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace mudich;

namespace {
const std::vector<double> sample_grid = {-8.0, -3.0, -1.0, -0.5, 0.0, 0.25, 1.0, 3.0, 7.5};
}

TEST_CASE("built-in rates satisfy the growth-rate axioms on a grid") {
    for (const GrowthRate& r : {GrowthRate::exponential(), GrowthRate::polynomial()}) {
        CHECK(r.value(0.0) == doctest::Approx(1.0).epsilon(1e-14));
        for (std::size_t i = 0; i < sample_grid.size(); ++i) {
            CHECK(r.value(sample_grid[i]) > 0.0);
            CHECK(r.deriv(sample_grid[i]) > 0.0);
            if (i > 0) CHECK(r.value(sample_grid[i - 1]) < r.value(sample_grid[i]));
        }
    }
}

TEST_CASE("log_ratio closed forms and identities") {
    const auto exp_rate = GrowthRate::exponential();
    const auto poly = GrowthRate::polynomial();

    CHECK(log_ratio(exp_rate, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(log_ratio(poly, 3.0, 0.0) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(log_ratio(poly, 2.5, 2.5) == 0.0);

    // Antisymmetry and the chain identity.
    for (double t : sample_grid)
        for (double s : sample_grid) {
            CHECK(log_ratio(poly, t, s) == doctest::Approx(-log_ratio(poly, s, t)).epsilon(1e-13));
            for (double u : {-2.0, 0.5, 4.0})
                CHECK(log_ratio(poly, t, s) + log_ratio(poly, s, u) ==
                      doctest::Approx(log_ratio(poly, t, u)).epsilon(1e-12));
        }
}

TEST_CASE("shift_coefficient equals the derivative of log mu") {
    const auto exp_rate = GrowthRate::exponential();
    CHECK(shift_coefficient(exp_rate, 5.0) == doctest::Approx(1.0).epsilon(1e-12));

    const auto poly = GrowthRate::polynomial();
    CHECK(shift_coefficient(poly, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(shift_coefficient(poly, -1.0) == doctest::Approx(0.5).epsilon(1e-12));

    // Central finite difference of log mu as the independent check.
    const double h = 1e-6;
    for (const GrowthRate& r : {GrowthRate::exponential(), GrowthRate::polynomial()})
        for (double t : {-4.0, -0.75, 0.5, 2.0, 6.0}) {
            const double fd = (r.log_value(t + h) - r.log_value(t - h)) / (2.0 * h);
            CHECK(shift_coefficient(r, t) == doctest::Approx(fd).epsilon(1e-6));
        }
}

TEST_CASE("induced rates") {
    SUBCASE("nu(t) = t + 1 reproduces the polynomial rate") {
        auto r = GrowthRate::induced([](double t) { return t + 1.0; },
                                     [](double) { return 1.0; });
        CHECK(r.value(-3.0) == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(r.value(3.0) == doctest::Approx(4.0).epsilon(1e-14));
    }
    SUBCASE("nu(t) = e^t reproduces the exponential rate") {
        auto r = GrowthRate::induced([](double t) { return std::exp(t); },
                                     [](double t) { return std::exp(t); });
        for (double t : sample_grid)
            CHECK(r.log_value(t) == doctest::Approx(t).epsilon(1e-12));
    }
    SUBCASE("nu(t) = (t+1)^2") {
        auto r = GrowthRate::induced([](double t) { return (t + 1.0) * (t + 1.0); },
                                     [](double t) { return 2.0 * (t + 1.0); });
        CHECK(r.value(2.0) == doctest::Approx(9.0).epsilon(1e-14));
        CHECK(r.value(-2.0) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    }
    SUBCASE("mu(-t) = 1/mu(t) for induced rates") {
        auto r = GrowthRate::induced([](double t) { return (t + 1.0) * (t + 1.0); },
                                     [](double t) { return 2.0 * (t + 1.0); });
        for (double t : sample_grid)
            CHECK(r.value(-t) == doctest::Approx(1.0 / r.value(t)).epsilon(1e-13));
    }
    SUBCASE("nu(0) != 1 is rejected") {
        CHECK_THROWS_AS((void)GrowthRate::induced([](double t) { return t + 2.0; },
                                                  [](double) { return 1.0; }),
                        PreconditionError);
    }
    SUBCASE("missing derivative requires explicit approval") {
        CHECK_THROWS_AS((void)GrowthRate::induced([](double t) { return t + 1.0; }),
                        PreconditionError);
        auto r = GrowthRate::induced([](double t) { return t + 1.0; }, nullptr, true);
        CHECK(shift_coefficient(r, 1.0) == doctest::Approx(0.5).epsilon(1e-5));
    }
}

TEST_CASE("inverse_log round trip") {
    for (const GrowthRate& r : {GrowthRate::exponential(), GrowthRate::polynomial(),
                                GrowthRate::induced([](double t) { return (t + 1.0) * (t + 1.0); },
                                                    [](double t) { return 2.0 * (t + 1.0); })}) {
        for (double v : {-6.0, -1.0, 0.0, 0.3, 2.0, 9.0})
            CHECK(r.log_value(r.inverse_log(v)) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("tabulated induced rate") {
    std::vector<double> ts, nus;
    for (int i = 0; i <= 40; ++i) {
        const double t = i * 0.5;
        ts.push_back(t);
        nus.push_back(std::exp(t));
    }
    auto r = GrowthRate::induced_from_table(ts, nus);
    CHECK(r.log_value(3.25) == doctest::Approx(3.25).epsilon(1e-9));
    CHECK(r.log_value(-3.25) == doctest::Approx(-3.25).epsilon(1e-9));
    CHECK(shift_coefficient(r, 2.3) == doctest::Approx(1.0).epsilon(1e-6));
}
