#include "mudich/growth_rate.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace mudich {

double GrowthRate::value(double t) const {
    return std::exp(log_eval_(t));
}

double GrowthRate::log_value(double t) const {
    return log_eval_(t);
}

double GrowthRate::deriv(double t) const {
    return deriv_(t);
}

double GrowthRate::inverse_log(double v) const {
    if (inverse_log_) return inverse_log_(v);
    // Monotone bracketing search on log mu.
    double lo = -1.0, hi = 1.0;
    while (log_eval_(lo) > v) { lo *= 2.0; if (lo < -1e12) throw NumericalError("growth rate inverse: bracket underflow"); }
    while (log_eval_(hi) < v) { hi *= 2.0; if (hi > 1e12) throw NumericalError("growth rate inverse: bracket overflow"); }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (log_eval_(mid) < v ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

GrowthRate GrowthRate::exponential() {
    GrowthRate r;
    r.kind_ = RateKind::Exponential;
    r.name_ = "exp";
    r.log_eval_ = [](double t) { return t; };
    r.deriv_ = [](double t) { return std::exp(t); };
    r.inverse_log_ = [](double v) { return v; };
    return r;
}

GrowthRate GrowthRate::polynomial() {
    GrowthRate r;
    r.kind_ = RateKind::Polynomial;
    r.name_ = "poly";
    r.log_eval_ = [](double t) {
        return t >= 0.0 ? std::log1p(t) : -std::log1p(-t);
    };
    // For t <= 0, mu(t) = 1/(1 - t), so mu'(t) = (1 - t)^{-2}.
    r.deriv_ = [](double t) {
        return t >= 0.0 ? 1.0 : 1.0 / ((1.0 - t) * (1.0 - t));
    };
    r.inverse_log_ = [](double v) {
        return v >= 0.0 ? std::expm1(v) : -std::expm1(-v);
    };
    return r;
}

GrowthRate GrowthRate::induced(std::function<double(double)> nu,
                               std::function<double(double)> nu_deriv,
                               bool approve_finite_difference,
                               std::string name) {
    if (!nu) throw PreconditionError("induced rate: nu is null");
    const double nu0 = nu(0.0);
    if (!(std::abs(nu0 - 1.0) <= 1e-9))
        throw PreconditionError("induced rate: nu(0) must equal 1, got " + std::to_string(nu0));
    if (!nu_deriv) {
        if (!approve_finite_difference)
            throw PreconditionError("induced rate: supply nu' or approve finite differencing");
        auto base = nu;
        nu_deriv = [base](double u) {
            const double h = 1e-6;
            const double lo = std::max(0.0, u - h);
            return (base(u + h) - base(lo)) / (u + h - lo);
        };
    }

    GrowthRate r;
    r.kind_ = RateKind::Induced;
    r.name_ = std::move(name);
    r.log_eval_ = [nu](double t) {
        return t >= 0.0 ? std::log(nu(t)) : -std::log(nu(-t));
    };
    // mu(t) = 1/nu(-t) on t <= 0 gives mu'(t) = nu'(-t)/nu(-t)^2.
    r.deriv_ = [nu, nu_deriv](double t) {
        if (t >= 0.0) return nu_deriv(t);
        const double n = nu(-t);
        return nu_deriv(-t) / (n * n);
    };
    return r;
}

GrowthRate GrowthRate::induced_from_table(const std::vector<double>& ts,
                                          const std::vector<double>& nus) {
    if (ts.size() != nus.size() || ts.size() < 2)
        throw PreconditionError("induced table: need >= 2 (t, nu) samples");
    if (ts.front() != 0.0 || std::abs(nus.front() - 1.0) > 1e-9)
        throw PreconditionError("induced table: first sample must be (0, 1)");
    std::vector<double> lt(ts), ln(nus.size());
    for (std::size_t i = 0; i < nus.size(); ++i) {
        if (i > 0 && !(ts[i] > ts[i - 1] && nus[i] > nus[i - 1]))
            throw PreconditionError("induced table: samples must be strictly increasing");
        ln[i] = std::log(nus[i]);
    }
    auto log_nu = [lt, ln](double u) {
        auto it = std::upper_bound(lt.begin(), lt.end(), u);
        std::size_t hi = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - lt.begin(), 1), lt.size() - 1);
        const std::size_t lo = hi - 1;
        const double w = (u - lt[lo]) / (lt[hi] - lt[lo]);
        return ln[lo] + w * (ln[hi] - ln[lo]);
    };
    auto nu = [log_nu](double u) { return std::exp(log_nu(u)); };
    auto nu_deriv = [lt, ln, nu](double u) {
        auto it = std::upper_bound(lt.begin(), lt.end(), u);
        std::size_t hi = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - lt.begin(), 1), lt.size() - 1);
        const std::size_t lo = hi - 1;
        const double slope = (ln[hi] - ln[lo]) / (lt[hi] - lt[lo]); // d(log nu)/dt
        return slope * nu(u);
    };
    return induced(nu, nu_deriv, false, "induced-table");
}

double log_ratio(const GrowthRate& rate, double t, double s) {
    const double lt = rate.log_value(t);
    const double ls = rate.log_value(s);
    if (!std::isfinite(lt) || !std::isfinite(ls))
        throw DomainError("log_ratio: non-finite growth rate evaluation");
    return lt - ls;
}

double shift_coefficient(const GrowthRate& rate, double t) {
    const double mu = rate.value(t);
    if (!(mu > 0.0))
        throw Error("shift_coefficient: growth rate invariant mu > 0 violated");
    const double d = rate.deriv(t);
    if (!std::isfinite(d))
        throw PreconditionError("shift_coefficient: mu'(t) is not finite");
    return d / mu;
}

} // namespace mudich
