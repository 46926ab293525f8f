#pragma once

#include "mudich/admissibility.hpp"
#include "mudich/dichotomy.hpp"
#include "mudich/nonlinearity.hpp"
#include "mudich/quadrature.hpp"
#include "mudich/resonance.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <optional>

namespace mudich {

struct HomologicalOptions {
    double tail_tol = 1e-10;   ///< truncation target for the dichotomy decay factor
    double horizon_cap = 1e3;  ///< |s*| cap of the improper-integral horizon
    QuadratureOptions quad{1e-9, 1e-12, 20000};
    double inverse_tol = 1e-12;
    int inverse_max_iter = 60;
    double fit_horizon_u = 20.0; ///< pair grid for the K envelope
    int fit_nodes = 13;
};

struct InverseStats {
    int iterations = 0;
    double contraction = 0.0; ///< max ratio of successive increments
};

/// The conjugation data of one elimination target (j, k): the map
/// h = (0,...,h_j,...,0) defined by the dichotomy-weighted improper
/// integral of the (j,k) Taylor coefficient, H = id + h, its derivatives,
/// the trumpet/tubular domains and the fixed-point inverse.
///
/// Immutable after construction; evaluations are pure against the shared
/// read-only evolution-operator cache.
class ConjugationMap {
public:
    /// Explicit construction pieces (tests and diagnostics set K and the
    /// coefficient directly; eliminate_term assembles them from a scenario).
    struct Pieces {
        std::shared_ptr<const EvolutionOperator> op;
        GrowthRate rate = GrowthRate::exponential();
        std::function<CoeffTensor(double)> coeff; ///< s -> D2^k F_j(s,0)/k!
        AdmissibleCandidate psi;
        ResonanceVerdict verdict;
        int position = 0;
        MultiIndex k;
        double K = 1.0;
        double eps = 0.0;
        HomologicalOptions opts;
    };

    explicit ConjugationMap(Pieces pieces);

    /// Fit K from the dichotomy envelopes at the shifted exponents
    /// a_i - eps, b_i + eps (spectral endpoints inflated by the spectrum
    /// tolerance) and build the map for the (position, k) term of nl.
    ConjugationMap(std::shared_ptr<const EvolutionOperator> op, const GrowthRate& rate,
                   const Nonlinearity& nl, const Spectrum& spectrum, int position, MultiIndex k,
                   HomologicalOptions opts = {});

    /// h(t, x). Only block `position` is nonzero. Membership of (t, x) in
    /// the trumpet is not enforced; check in_trumpet when it matters.
    [[nodiscard]] Vector h_eval(double t, const Vector& x) const;
    /// The bound (K^{|k|+1}/k!) zeta(t) prod ||x_i||^{k_i} dominating h.
    [[nodiscard]] double h_bound(double t, const Vector& x) const;
    /// D2 h(t,x) applied to a direction vector.
    [[nodiscard]] Vector d2h_eval(double t, const Vector& x, const Vector& dir) const;
    /// D1 h(t,x): the three-term formula -c(t)[x]^k + A_j(t) h_j(t,x) minus
    /// the D2h integral taken in the direction A(t) x. t should be a
    /// continuity point of A (breakpoints evaluate the right limit).
    [[nodiscard]] Vector d1h_eval(double t, const Vector& x) const;

    /// xi(t) = (2 K^{|k|+1} n zeta(t))^{1/(1-|k|)}; +inf when zeta(t) = 0.
    [[nodiscard]] double trumpet_radius(double t) const;
    /// Uniform-mode tubular radius rho from M = sup_t zeta(t); requires the
    /// uniform admissibility of psi (throws otherwise).
    [[nodiscard]] double tubular_radius() const;

    [[nodiscard]] Vector H_eval(double t, const Vector& x) const;
    /// Fixed-point solve of x + h(t,x) = y from x_0 = y. Throws DomainError
    /// when an iterate escapes the trumpet and NumericalError when the
    /// iteration does not converge within the cap.
    [[nodiscard]] Vector H_inverse(double t, const Vector& y, InverseStats* stats = nullptr) const;

    [[nodiscard]] bool in_trumpet(double t, const Vector& x) const;

    /// zeta of the applicable branch: mu(t)^{+delta} zeta^+ (left gap) or
    /// mu(t)^{-delta} zeta^- (right gap), delta = dist/2.
    [[nodiscard]] double zeta(double t) const;
    /// sup of zeta over the admissibility grid (cached).
    [[nodiscard]] double zeta_sup() const;

    [[nodiscard]] double fitted_K() const noexcept { return pieces_.K; }
    [[nodiscard]] double epsilon() const noexcept { return pieces_.eps; }
    [[nodiscard]] double dist() const noexcept { return pieces_.verdict.dist; }
    [[nodiscard]] double delta() const noexcept { return 0.5 * pieces_.verdict.dist; }
    [[nodiscard]] const ResonanceVerdict& verdict() const noexcept { return pieces_.verdict; }
    [[nodiscard]] int position() const noexcept { return pieces_.position; }
    [[nodiscard]] const MultiIndex& target() const noexcept { return pieces_.k; }
    [[nodiscard]] const EvolutionOperator& op() const noexcept { return *pieces_.op; }
    [[nodiscard]] const GrowthRate& rate() const noexcept { return pieces_.rate; }
    [[nodiscard]] const HomologicalOptions& options() const noexcept { return pieces_.opts; }
    [[nodiscard]] CoeffTensor coeff(double s) const { return pieces_.coeff(s); }
    [[nodiscard]] bool time_invariant() const noexcept { return time_invariant_; }

private:
    [[nodiscard]] double integration_limit(double t) const;
    [[nodiscard]] Vector integral(double t, const Vector& x, const Vector* dir) const;
    [[nodiscard]] Vector propagate(double s, double t, const Vector& x) const;

    Pieces pieces_;
    int order_ = 0;          ///< |k|
    double k_factorial_ = 1;
    double amp_ = 1.0;       ///< K^{|k|+1}/k!
    bool forward_ = true;    ///< left gap -> integral over [t, inf)
    bool time_invariant_ = false;
    mutable std::optional<double> zeta_sup_cache_;
    mutable std::mutex sup_mutex_;
};

/// Envelope constant K of the conjugation: the max over blocks and both time
/// directions of ||Phi_i(t,s)|| (mu(t)/mu(s))^{-shift} with shift b_i + eps
/// forward and a_i - eps backward, over a log-mu-uniform pair grid.
[[nodiscard]] double fit_dichotomy_envelope(const EvolutionOperator& op, const GrowthRate& rate,
                                            const std::vector<double>& a_hat,
                                            const std::vector<double>& b_hat, double horizon_u,
                                            int nodes);

} // namespace mudich
