#pragma once

#include "mudich/homological.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mudich {

struct TransformOptions {
    /// Derived coefficients divide evaluation noise by stencil-radius
    /// powers, so the elimination pipeline runs the quadratures and the
    /// fixed-point inverse tighter than the standalone defaults.
    HomologicalOptions homological{.quad = {1e-11, 1e-14, 40000}, .inverse_tol = 1e-13};
    double elimination_threshold = 1e-4;  ///< coefficient norm counting as eliminated
    std::vector<double> verify_times = {-2.0, 0.0, 3.0};
    std::vector<double> stencil_radii = {1e-2, 5e-3, 2.5e-3};
    /// Stencil radii are scaled by this per order above 2 (the 1/h^|m|
    /// noise amplification of third and higher derivatives wants wider
    /// stencils), then clamped to fit the trumpet.
    double stencil_growth = 2.0;
    double derived_lattice_step = 0.0625; ///< t-spacing of cached derived coefficients
};

/// Shrink the stencil proportionally until its widest point (offset 2h on
/// every active coordinate) stays within 60% of the domain radius.
[[nodiscard]] std::vector<double> fit_radii_to_domain(std::vector<double> radii, int dim,
                                                      double domain_radius);

struct CoeffEstimate {
    CoeffTensor tensor;
    double error_bar = 0.0;
};

/// Estimate the (1/m!) D_2^m field_j(t,0) monomial coefficients by mixed
/// central differences on the stencil radii with two-stage Richardson
/// extrapolation. `domain_radius` guards the stencil (DomainError when the
/// widest stencil point would leave it; pass +inf to disable).
[[nodiscard]] CoeffEstimate estimate_origin_coeff(
    const std::function<Vector(double, const Vector&)>& field, const std::vector<int>& block_dims,
    int position, const MultiIndex& m, double t,
    const std::vector<double>& radii = {1e-2, 5e-3, 2.5e-3},
    double domain_radius = std::numeric_limits<double>::infinity());

/// The transformed field of one elimination step: G~ by the conjugation
/// identity route, R by its explicit formula, and G = G~ - A x in
/// the cancellation-free form G_i = F_i(t,u), G_j = F_j(t,u) - c(t)[u]^k
/// + D2h_j(t,u) F(t,u), u = H^{-1}(t,x).
class TransformedSystem {
public:
    TransformedSystem(std::shared_ptr<const ConjugationMap> map, Nonlinearity base,
                      TransformOptions opts = {});

    /// G~(t, x) = D1H(t,u) + D2H(t,u) [A(t) u + F(t, u)].
    [[nodiscard]] Vector transformed_rhs(double t, const Vector& x) const;
    /// Remainder R(t, x) of the transformed field; R(t,0) = 0.
    [[nodiscard]] Vector remainder_R(double t, const Vector& x) const;
    /// G(t, x) = G~(t, x) - A(t) x, evaluated without the A x cancellation.
    [[nodiscard]] Vector G_eval(double t, const Vector& x) const;

    /// Taylor table of G: orders <= |k| copy F with the (j, k) entry
    /// zeroed; higher orders are estimated on demand and cached on a
    /// t-lattice (a single cached estimate when everything in sight is
    /// autonomous).
    [[nodiscard]] CoeffTensor taylor_coeff(int position, const MultiIndex& m, double t) const;

    /// Fit psi~(t) = scale * max(psi(t), 1) covering the estimated
    /// derivative norms of G up to order ell on the verify grid.
    [[nodiscard]] AdmissibleCandidate fit_derived_psi() const;

    [[nodiscard]] const ConjugationMap& map() const noexcept { return *map_; }
    [[nodiscard]] const Nonlinearity& base() const noexcept { return base_; }
    [[nodiscard]] const TransformOptions& options() const noexcept { return opts_; }
    [[nodiscard]] bool time_invariant() const noexcept { return time_invariant_; }

private:
    struct Cache;

    [[nodiscard]] CoeffTensor derived_coeff(int position, const MultiIndex& m, double t) const;
    [[nodiscard]] CoeffTensor estimate_at(int position, const MultiIndex& m, double t) const;

    std::shared_ptr<const ConjugationMap> map_;
    Nonlinearity base_;
    TransformOptions opts_;
    bool time_invariant_ = false;
    std::shared_ptr<Cache> cache_;
};

/// Package the G field of a step as a Nonlinearity for the next round,
/// dominated by psi_new; shares the step's coefficient cache.
[[nodiscard]] Nonlinearity derived_nonlinearity(std::shared_ptr<const TransformedSystem> ts,
                                                AdmissibleCandidate psi_new);

/// Residual of the conjugacy along one trajectory. Forward: integrate the
/// base system, push through H, compare the finite-difference derivative
/// against G~. Reverse (Step 8): integrate G~, pull back through H^{-1},
/// compare against the base field. Throws DomainError (with the exit time)
/// when the trajectory leaves the trumpet.
struct ConjugacyOptions {
    int grid_points = 101;
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    bool reverse = false;
};

[[nodiscard]] double conjugacy_residual(const TransformedSystem& ts, double t0, const Vector& x0,
                                        double horizon, const ConjugacyOptions& opts = {});

/// Transcript entry of one elimination.
struct EliminationStep {
    int position = 0;
    MultiIndex k;
    std::string direction; ///< "left-gap" or "right-gap"
    double dist = 0.0;
    double eps = 0.0;
    double K = 1.0;
    double delta = 0.0;
    double xi_at_origin = 0.0;
    double coeff_before = 0.0; ///< sup over verify times of the target coefficient norm
    double coeff_after = 0.0;
    double roundtrip_residual = 0.0;
};

struct EliminationResult {
    Nonlinearity transformed;
    EliminationStep step;
    std::shared_ptr<const TransformedSystem> system;
};

/// One application of the elimination lemma to the (position, k) term.
/// Preconditions: the pair is nonresonant for the given spectrum and
/// verify_H2 passes for nl (checked; PreconditionError otherwise).
[[nodiscard]] EliminationResult eliminate_term(std::shared_ptr<const EvolutionOperator> op,
                                               const GrowthRate& rate, const Nonlinearity& nl,
                                               const Spectrum& spectrum, int position,
                                               MultiIndex k, const TransformOptions& opts = {},
                                               bool check_h2 = true);

struct NormalFormResult {
    Nonlinearity final_nl;
    std::vector<EliminationStep> transcript;
    /// The transformed system of each transcript entry, in order; the
    /// composed conjugation is their H maps applied left to right.
    std::vector<std::shared_ptr<const TransformedSystem>> systems;
    bool verified = false;        ///< all origin coefficients of order 2..ell below threshold
    double max_coeff_norm = 0.0;  ///< over orders 2..ell and verify times, after the sweep
    double domain_radius = 0.0;   ///< min tubular radius across the transcript
    double psi_tilde_scale = 0.0; ///< emitted psi~ = scale * max(psi, 1)
    bool aborted = false;         ///< an elimination failed; transcript holds the steps so far
    std::string abort_kind;       ///< "precondition" | "numerical" when aborted
    std::string abort_reason;
};

/// Iterate eliminate_term over orders 2..ell (graded-lex in k, positions
/// ascending), skipping terms already below the threshold. Requires
/// check_H3 to pass and (H2') to hold (PreconditionError otherwise). A
/// failure inside a single elimination aborts the sweep and returns the
/// transcript so far with `aborted` set.
[[nodiscard]] NormalFormResult normal_form(std::shared_ptr<const EvolutionOperator> op,
                                           const GrowthRate& rate, const Nonlinearity& nl,
                                           const Spectrum& spectrum, int ell,
                                           const TransformOptions& opts = {});

} // namespace mudich
