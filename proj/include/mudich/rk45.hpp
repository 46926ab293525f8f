#pragma once

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mudich {

/// Dormand-Prince 5(4) coefficients.
struct Dp54 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                            e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

/// Adaptive Dormand-Prince step loop for any vector-space state (Eigen
/// vectors and matrices both fit). `norm` returns the max-abs scale of a
/// state. Throws NumericalError on step underflow.
template <class State, class Rhs, class NormFn>
State rk45_integrate(Rhs&& rhs, double t0, double t1, State y, double rel_tol, double abs_tol,
                     NormFn&& norm, const char* what = "rk45") {
    if (t1 == t0) return y;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    double tau = t0;
    double h = dir * std::min(1.0, std::abs(t1 - t0));
    int steps = 0, rejections = 0;
    while (dir * (t1 - tau) > 0.0) {
        if (++steps > 2000000) throw NumericalError(std::string(what) + ": step budget exhausted");
        const double remaining = t1 - tau;
        if (std::abs(remaining) <= 8.0 * std::numeric_limits<double>::epsilon() *
                                       std::max({1.0, std::abs(tau), std::abs(t1)}))
            break;
        if (dir * (tau + h) > dir * t1) h = remaining;

        const State k1 = rhs(tau, y);
        const State k2 = rhs(tau + Dp54::c2 * h, State(y + h * (Dp54::a21 * k1)));
        const State k3 =
            rhs(tau + Dp54::c3 * h, State(y + h * (Dp54::a31 * k1 + Dp54::a32 * k2)));
        const State k4 = rhs(tau + Dp54::c4 * h,
                             State(y + h * (Dp54::a41 * k1 + Dp54::a42 * k2 + Dp54::a43 * k3)));
        const State k5 =
            rhs(tau + Dp54::c5 * h, State(y + h * (Dp54::a51 * k1 + Dp54::a52 * k2 +
                                                   Dp54::a53 * k3 + Dp54::a54 * k4)));
        const State k6 =
            rhs(tau + h, State(y + h * (Dp54::a61 * k1 + Dp54::a62 * k2 + Dp54::a63 * k3 +
                                        Dp54::a64 * k4 + Dp54::a65 * k5)));
        const State y5 = y + h * (Dp54::b1 * k1 + Dp54::b3 * k3 + Dp54::b4 * k4 + Dp54::b5 * k5 +
                                  Dp54::b6 * k6);
        const State k7 = rhs(tau + h, y5);
        const State err_state = h * (Dp54::e1 * k1 + Dp54::e3 * k3 + Dp54::e4 * k4 +
                                     Dp54::e5 * k5 + Dp54::e6 * k6 + Dp54::e7 * k7);

        const double scale = abs_tol + rel_tol * std::max(norm(y), norm(y5));
        const double err = norm(err_state) / scale;
        if (err <= 1.0) {
            tau += h;
            y = y5;
            rejections = 0;
        } else if (++rejections > 80) {
            std::ostringstream os;
            os << what << ": step underflow near tau = " << tau << " on [" << t0 << ", " << t1
               << "]";
            throw NumericalError(os.str());
        }
        const double factor =
            std::isfinite(err) && err > 0.0 ? 0.9 * std::pow(err, -0.2) : (err > 0.0 ? 0.2 : 5.0);
        h *= std::clamp(factor, 0.2, 5.0);
    }
    return y;
}

} // namespace mudich
