#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mudich {

/// sgn with sgn(0) = 0, so that mu(s)^{sgn(s)*theta} == 1 at s == 0.
[[nodiscard]] inline double sgn(double a) noexcept {
    return (a > 0.0) - (a < 0.0);
}

enum class RateKind { Exponential, Polynomial, Induced };

/// A differentiable growth rate: strictly increasing, mu(0) = 1,
/// mu(-inf) = 0, mu(+inf) = +inf. Stored through log(mu) for stable
/// evaluation of the ratios that appear in every dichotomy exponent.
///
/// Immutable after construction; safe for unrestricted concurrent reads.
class GrowthRate {
public:
    /// mu(t).
    [[nodiscard]] double value(double t) const;
    /// log mu(t).
    [[nodiscard]] double log_value(double t) const;
    /// mu'(t).
    [[nodiscard]] double deriv(double t) const;
    /// t such that log mu(t) == v (monotone inverse; bracketing search
    /// for induced rates without a closed form).
    [[nodiscard]] double inverse_log(double v) const;

    [[nodiscard]] RateKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

    /// mu(t) = e^t.
    [[nodiscard]] static GrowthRate exponential();
    /// Rate induced by nu(t) = t + 1 (polynomial dichotomy scale).
    [[nodiscard]] static GrowthRate polynomial();
    /// Rate induced by a strictly increasing surjective nu: [0,inf) -> [1,inf)
    /// with nu(0) = 1: mu(t) = nu(t) for t >= 0 and mu(t) = 1/nu(|t|) for
    /// t <= 0. The caller supplies nu' or approves central differencing
    /// with step 1e-6.
    [[nodiscard]] static GrowthRate induced(std::function<double(double)> nu,
                                            std::function<double(double)> nu_deriv = nullptr,
                                            bool approve_finite_difference = false,
                                            std::string name = "induced");
    /// Induced rate from tabulated (t, nu(t)) samples, t >= 0 increasing,
    /// nu(0) = 1; log nu interpolated piecewise-linearly and extrapolated
    /// with the last slope.
    [[nodiscard]] static GrowthRate induced_from_table(const std::vector<double>& ts,
                                                       const std::vector<double>& nus);

private:
    GrowthRate() = default;

    RateKind kind_ = RateKind::Exponential;
    std::string name_;
    std::function<double(double)> log_eval_;
    std::function<double(double)> deriv_;
    std::function<double(double)> inverse_log_; // may be null -> bisection
};

/// log(mu(t)/mu(s)) evaluated without forming the ratio; antisymmetric
/// in (t, s).
[[nodiscard]] double log_ratio(const GrowthRate& rate, double t, double s);

/// mu'(t)/mu(t), the coefficient of the spectral shift gamma*mu'/mu*Id.
[[nodiscard]] double shift_coefficient(const GrowthRate& rate, double t);

} // namespace mudich
