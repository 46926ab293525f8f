#pragma once

#include "mudich/errors.hpp"

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

namespace mudich {

struct QuadratureOptions {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int max_panels = 20000;
};

namespace detail {

// Gauss-Kronrod 7-15 pair. Positive abscissae; Gauss points sit at the
// even indices.
inline constexpr double gk_x[8] = {
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};
inline constexpr double gk_wk[8] = {
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};
inline constexpr double gk_wg[4] = {
    0.417959183673469387755102040816327, // x = 0
    0.381830050505118944950369775488975, // x = gk_x[2]
    0.279705391489276667901467771423780, // x = gk_x[4]
    0.129484966168869693270611432679082};// x = gk_x[6]

} // namespace detail

/// One Gauss-Kronrod 7-15 panel on [a, b]. Returns the K15 estimate and
/// stores the norm of the K15-G7 difference in err.
template <class T, class F, class NormFn>
T gauss_kronrod_panel(F&& f, double a, double b, NormFn&& norm, double& err) {
    using namespace detail;
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);

    T f0 = f(c);
    T k15 = gk_wk[0] * f0;
    T g7 = gk_wg[0] * f0;
    for (int i = 1; i < 8; ++i) {
        const double dx = h * gk_x[i];
        T fi = f(c + dx) + f(c - dx);
        k15 = k15 + gk_wk[i] * fi;
        if (i % 2 == 0) g7 = g7 + gk_wg[i / 2] * fi;
    }
    k15 = h * k15;
    g7 = h * g7;
    err = norm(k15 - g7);
    return k15;
}

/// Adaptive bisection quadrature on a finite interval. `zero` supplies the
/// additive identity (it carries the vector dimension for vector-valued
/// integrands).
template <class T, class F, class NormFn>
T adaptive_integrate(F&& f, double a, double b, const QuadratureOptions& opts,
                     NormFn&& norm, T zero) {
    if (a == b) return zero;

    struct Panel {
        double a, b;
    };
    std::vector<Panel> stack{{a, b}};
    const double total_width = std::abs(b - a);

    double err0 = 0.0;
    T first = gauss_kronrod_panel<T>(f, a, b, norm, err0);
    double scale = norm(first);

    T sum = std::move(zero);
    int panels = 0;
    double worst_a = a, worst_b = b, worst_err = 0.0;
    while (!stack.empty()) {
        const Panel p = stack.back();
        stack.pop_back();
        if (++panels > opts.max_panels) {
            std::ostringstream os;
            os << "adaptive quadrature: panel budget exceeded on [" << worst_a
               << ", " << worst_b << "] (err " << worst_err << ", partial sum norm "
               << norm(sum) << ")";
            throw NumericalError(os.str());
        }
        double err = 0.0;
        T value = gauss_kronrod_panel<T>(f, p.a, p.b, norm, err);
        scale = std::max(scale, norm(value));
        const double budget =
            std::max(opts.abs_tol, opts.rel_tol * scale) * (std::abs(p.b - p.a) / total_width);
        if (err <= budget || std::abs(p.b - p.a) < 1e-14 * total_width) {
            sum = sum + value;
            continue;
        }
        if (err > worst_err) {
            worst_err = err;
            worst_a = p.a;
            worst_b = p.b;
        }
        const double mid = 0.5 * (p.a + p.b);
        stack.push_back({p.a, mid});
        stack.push_back({mid, p.b});
    }
    return sum;
}

/// Scalar convenience wrapper.
template <class F>
double adaptive_integrate(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
    return adaptive_integrate<double>(std::forward<F>(f), a, b, opts,
                                      [](double v) { return std::abs(v); }, 0.0);
}

} // namespace mudich
