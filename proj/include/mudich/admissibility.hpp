#pragma once

#include "mudich/growth_rate.hpp"
#include "mudich/quadrature.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mudich {

/// Improper integral diverged (or could not be shown Cauchy before the
/// horizon cap); the admissibility check failed.
class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Eventual upper bound psi(s) <= C (1+|s|)^p exp(-lambda |s| - g s^2),
/// declared by the caller. Improper-integral convergence is not decidable
/// from samples, so truncation horizons derive from this.
struct DecayDescriptor {
    double poly_power = 0.0; ///< p (positive means growth)
    double exp_rate = 0.0;   ///< lambda (negative means growth)
    double gauss_rate = 0.0; ///< g >= 0
};

/// A nonnegative candidate for the dominating function psi of (H2),
/// together with its decay descriptor.
struct AdmissibleCandidate {
    std::function<double(double)> psi;
    DecayDescriptor decay;
    std::string name = "psi";

    [[nodiscard]] double operator()(double s) const { return psi(s); }

    [[nodiscard]] static AdmissibleCandidate zero();
    [[nodiscard]] static AdmissibleCandidate gaussian(double amplitude = 1.0);
    /// amplitude * e^{-lambda |t|}. Negative lambda declares growth.
    [[nodiscard]] static AdmissibleCandidate exp_tent(double amplitude = 1.0, double lambda = 1.0);
    [[nodiscard]] static AdmissibleCandidate bounded_const(double c);
    /// |c_0 + c_1 t + ... + c_m t^m|.
    [[nodiscard]] static AdmissibleCandidate poly(std::vector<double> coeffs);
    /// Linear interpolation of nonnegative samples; continued beyond the
    /// table by the declared decay. The descriptor is mandatory.
    [[nodiscard]] static AdmissibleCandidate tabulated(std::vector<double> ts,
                                                       std::vector<double> values,
                                                       DecayDescriptor decay);
    [[nodiscard]] static AdmissibleCandidate callable(std::function<double(double)> psi,
                                                      DecayDescriptor decay,
                                                      std::string name = "psi");
};

struct ZetaOptions {
    QuadratureOptions quad;      ///< per-panel adaptive quadrature controls
    double panel_u = 1.0;        ///< panel width in log-mu units
    double horizon_u = 400.0;    ///< Cauchy-failure cap, in log-mu units past t
    double tail_ratio_max = 0.95;///< panel ratio above this is treated as non-Cauchy
};

/// zeta^+_{psi,mu,delta}(t) = int_t^inf psi(s) mu(s)^{-delta} ds.
/// Throws DivergenceError when the declared decay rules out convergence or
/// the panel sums fail the Cauchy test before the horizon cap.
[[nodiscard]] double zeta_plus(const AdmissibleCandidate& psi, const GrowthRate& rate, double delta,
                               double t, const ZetaOptions& opts = {});

/// zeta^-_{psi,mu,delta}(t) = int_{-inf}^t psi(s) mu(s)^{+delta} ds.
[[nodiscard]] double zeta_minus(const AdmissibleCandidate& psi, const GrowthRate& rate,
                                double delta, double t, const ZetaOptions& opts = {});

struct UniformAdmissibility {
    bool uniform = false;
    double sup_value = 0.0; ///< observed sup of mu^delta zeta^+ + mu^-delta zeta^-
};

/// Evaluate t -> mu(t)^delta zeta^+(t) + mu(t)^{-delta} zeta^-(t) on the
/// grid; uniform iff the running max stabilizes (increase over the last
/// tenth of the grid below 1%). Non-stabilizing growth at the grid edge
/// throws InconclusiveError with the observed trend.
[[nodiscard]] UniformAdmissibility check_uniform_admissibility(const AdmissibleCandidate& psi,
                                                               const GrowthRate& rate, double delta,
                                                               const std::vector<double>& t_grid,
                                                               const ZetaOptions& opts = {});

/// Default uniformity grid: n points, uniform in log mu over [-U, U]
/// (t in [-30, 30] for the exponential rate).
[[nodiscard]] std::vector<double> admissibility_grid(const GrowthRate& rate,
                                                     double horizon_u = 30.0, int points = 301);

} // namespace mudich
