#include "mudich/admissibility.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mudich {

AdmissibleCandidate AdmissibleCandidate::zero() {
    return {[](double) { return 0.0; }, {}, "zero"};
}

AdmissibleCandidate AdmissibleCandidate::gaussian(double amplitude) {
    return {[amplitude](double s) { return amplitude * std::exp(-s * s); },
            {0.0, 0.0, 1.0},
            "gaussian"};
}

AdmissibleCandidate AdmissibleCandidate::exp_tent(double amplitude, double lambda) {
    return {[amplitude, lambda](double s) { return amplitude * std::exp(-lambda * std::abs(s)); },
            {0.0, lambda, 0.0},
            "exp-tent"};
}

AdmissibleCandidate AdmissibleCandidate::bounded_const(double c) {
    if (c < 0.0) throw PreconditionError("bounded-const psi: c must be nonnegative");
    return {[c](double) { return c; }, {}, "bounded-const"};
}

AdmissibleCandidate AdmissibleCandidate::poly(std::vector<double> coeffs) {
    if (coeffs.empty()) throw PreconditionError("poly psi: empty coefficient list");
    const double degree = static_cast<double>(coeffs.size() - 1);
    auto eval = [coeffs](double s) {
        double v = 0.0;
        for (std::size_t i = coeffs.size(); i-- > 0;) v = v * s + coeffs[i];
        return std::abs(v);
    };
    return {eval, {degree, 0.0, 0.0}, "poly"};
}

AdmissibleCandidate AdmissibleCandidate::tabulated(std::vector<double> ts,
                                                   std::vector<double> values,
                                                   DecayDescriptor decay) {
    if (ts.size() != values.size() || ts.size() < 2)
        throw PreconditionError("tabulated psi: need >= 2 samples");
    if (!std::is_sorted(ts.begin(), ts.end()))
        throw PreconditionError("tabulated psi: sample times must be sorted");
    for (double v : values)
        if (v < 0.0) throw PreconditionError("tabulated psi: values must be nonnegative");

    auto decay_weight = [decay](double s) {
        const double a = std::abs(s);
        return std::pow(1.0 + a, decay.poly_power) *
               std::exp(-decay.exp_rate * a - decay.gauss_rate * s * s);
    };
    auto eval = [ts, values, decay_weight](double s) {
        if (s <= ts.front())
            return values.front() * decay_weight(s) / decay_weight(ts.front());
        if (s >= ts.back())
            return values.back() * decay_weight(s) / decay_weight(ts.back());
        const auto it = std::upper_bound(ts.begin(), ts.end(), s);
        const std::size_t hi = it - ts.begin();
        const std::size_t lo = hi - 1;
        const double w = (s - ts[lo]) / (ts[hi] - ts[lo]);
        return values[lo] + w * (values[hi] - values[lo]);
    };
    return {eval, decay, "tabulated"};
}

AdmissibleCandidate AdmissibleCandidate::callable(std::function<double(double)> psi,
                                                  DecayDescriptor decay, std::string name) {
    if (!psi) throw PreconditionError("callable psi: null function");
    return {std::move(psi), decay, std::move(name)};
}

namespace {

/// Convergence precheck of int psi * mu^{-delta} over a half line from
/// the declared decay; only decidable for the built-in rate kinds.
/// Returns false when the integral provably diverges.
bool decay_admits(const DecayDescriptor& d, const GrowthRate& rate, double delta) {
    if (d.gauss_rate > 0.0) return true;
    switch (rate.kind()) {
        case RateKind::Exponential: {
            const double rate_sum = d.exp_rate + delta;
            if (rate_sum > 0.0) return true;
            if (rate_sum < 0.0) return false;
            return d.poly_power < -1.0;
        }
        case RateKind::Polynomial: {
            if (d.exp_rate > 0.0) return true;
            if (d.exp_rate < 0.0) return false;
            return delta - d.poly_power > 1.0;
        }
        case RateKind::Induced:
            return true; // no closed form; the panel Cauchy test governs
    }
    return true;
}

/// Shared panel scheme for both zeta integrals. `sign` = +1 integrates
/// [t, +inf) against mu^{-delta}; -1 integrates (-inf, t] against mu^{+delta}.
double zeta_impl(const AdmissibleCandidate& psi, const GrowthRate& rate, double delta, double t,
                 int sign, const ZetaOptions& opts, const char* what) {
    if (!(delta > 0.0)) throw PreconditionError(std::string(what) + ": delta must be positive");
    if (!psi.psi) throw PreconditionError(std::string(what) + ": psi is null");
    if (!decay_admits(psi.decay, rate, delta)) {
        std::ostringstream os;
        os << what << ": integral of " << psi.name << " * mu^{" << (sign > 0 ? '-' : '+') << delta
           << "} diverges by its decay descriptor";
        throw DivergenceError(os.str());
    }

    // The weight e^{sign * -delta * log mu(s)} decays along the integration
    // direction; panels are uniform in log mu so the decay per panel is
    // geometric once psi stops growing.
    auto integrand = [&](double s) {
        return psi.psi(s) * std::exp(-sign * delta * rate.log_value(s));
    };

    const double u0 = rate.log_value(t);
    double acc = 0.0;
    double prev_panel = -1.0;
    double tail_ok_streak = 0;
    double s_lo = t;
    for (double k = 1.0; k * opts.panel_u <= opts.horizon_u; k += 1.0) {
        const double s_hi = rate.inverse_log(u0 + sign * k * opts.panel_u);
        const double panel = sign > 0 ? adaptive_integrate(integrand, s_lo, s_hi, opts.quad)
                                      : adaptive_integrate(integrand, s_hi, s_lo, opts.quad);
        acc += panel;
        const double tol = std::max(opts.quad.abs_tol, opts.quad.rel_tol * std::abs(acc));
        const double p = std::abs(panel);
        if (prev_panel >= 0.0) {
            const double ratio = prev_panel > 0.0 ? p / prev_panel : 0.0;
            if (ratio < opts.tail_ratio_max) {
                const double tail_bound =
                    ratio > 0.0 ? p * ratio / (1.0 - ratio) : p;
                if (tail_bound <= tol && ++tail_ok_streak >= 2) return acc;
            } else {
                tail_ok_streak = 0;
            }
        }
        prev_panel = p;
        s_lo = s_hi;
    }
    std::ostringstream os;
    os << what << ": partial sums not Cauchy before the horizon cap (accumulated " << acc
       << ", last panel " << prev_panel << ")";
    throw DivergenceError(os.str());
}

} // namespace

double zeta_plus(const AdmissibleCandidate& psi, const GrowthRate& rate, double delta, double t,
                 const ZetaOptions& opts) {
    return zeta_impl(psi, rate, delta, t, +1, opts, "zeta_plus");
}

double zeta_minus(const AdmissibleCandidate& psi, const GrowthRate& rate, double delta, double t,
                  const ZetaOptions& opts) {
    return zeta_impl(psi, rate, delta, t, -1, opts, "zeta_minus");
}

UniformAdmissibility check_uniform_admissibility(const AdmissibleCandidate& psi,
                                                 const GrowthRate& rate, double delta,
                                                 const std::vector<double>& t_grid,
                                                 const ZetaOptions& opts) {
    if (t_grid.size() < 10)
        throw PreconditionError("check_uniform_admissibility: grid too small");
    if (t_grid.front() >= 0.0 || t_grid.back() <= 0.0)
        throw PreconditionError("check_uniform_admissibility: grid must span both signs");

    std::vector<double> value(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        const double w = delta * rate.log_value(t);
        value[i] = std::exp(w) * zeta_plus(psi, rate, delta, t, opts) +
                   std::exp(-w) * zeta_minus(psi, rate, delta, t, opts);
    }

    double sup = 0.0;
    for (double v : value) sup = std::max(sup, v);

    // Running max over the inner 90% of the grid versus the whole grid.
    const std::size_t inner_lo = t_grid.size() / 20;
    const std::size_t inner_hi = t_grid.size() - 1 - t_grid.size() / 20;
    double inner_sup = 0.0;
    for (std::size_t i = inner_lo; i <= inner_hi; ++i) inner_sup = std::max(inner_sup, value[i]);

    UniformAdmissibility out;
    out.sup_value = sup;
    out.uniform = sup <= inner_sup * 1.01 + 1e-300;
    if (!out.uniform) {
        // Distinguish a sup sitting at the edge and still rising from a
        // plain interior violation: the former is undecidable on this grid.
        const bool rising_right = value[value.size() - 1] > value[value.size() - 2] &&
                                  value[value.size() - 2] > value[value.size() - 3];
        const bool rising_left = value[0] > value[1] && value[1] > value[2];
        if ((sup == value.back() && rising_right) || (sup == value.front() && rising_left)) {
            std::ostringstream os;
            os << "check_uniform_admissibility: sup still growing at the grid edge (last values "
               << value[value.size() - 3] << ", " << value[value.size() - 2] << ", "
               << value.back() << "); enlarge the horizon or treat as non-uniform";
            throw InconclusiveError(os.str(), t_grid.back());
        }
    }
    return out;
}

std::vector<double> admissibility_grid(const GrowthRate& rate, double horizon_u, int points) {
    std::vector<double> grid;
    grid.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double u = -horizon_u + 2.0 * horizon_u * i / (points - 1);
        grid.push_back(rate.inverse_log(u));
    }
    return grid;
}

} // namespace mudich
