#pragma once

#include "mudich/growth_rate.hpp"
#include "mudich/linear_flow.hpp"

#include <vector>

namespace mudich {

enum class DichotomyMode { Uniform, Nonuniform };

struct DichotomyOptions {
    double horizon_u = 20.0; ///< sampling horizon in log-mu units (t up to mu^{-1}(e^U))
    int nodes = 13;          ///< time-grid nodes, uniform in log mu
    double margin = 0.02;    ///< exponent separation margin
};

/// Fitted dichotomy data for one shifted system. When `admits` holds,
/// alpha + theta < 0 and beta - nu > 0 with the configured margin; the
/// uniform mode forces theta = nu = 0.
struct DichotomyEstimate {
    bool admits = false;
    int rank = 0;      ///< rank of the invariant projector (sum of stable block dims)
    double K = 1.0;
    double alpha = 0.0;
    double beta = 0.0;
    double theta = 0.0;
    double nu = 0.0;
    double slack = 0.0; ///< min(-(alpha+theta), beta-nu) of the best candidate
};

struct SpectralInterval {
    double lo = 0.0;
    double hi = 0.0;
};

/// One probe of the gamma scan, kept for reporting.
struct SpectrumProbe {
    double gamma = 0.0;
    bool admits = false;
    int rank = 0;
    double alpha = 0.0;
    double beta = 0.0;
};

/// Union of spectral intervals with the projector rank in each gap.
struct Spectrum {
    std::vector<SpectralInterval> intervals; ///< sorted ascending, disjoint
    std::vector<int> gap_ranks;              ///< intervals.size() + 1, strictly increasing
    double tol = 0.0;                        ///< endpoint uncertainty of the computation
    bool growth_warning = false;             ///< mu-bounded-growth precheck did not pass
    std::vector<SpectrumProbe> probes;       ///< scan log (sorted by gamma)

    [[nodiscard]] int count() const noexcept { return static_cast<int>(intervals.size()); }
};

/// Decide whether the gamma-shifted system admits a (uniform or nonuniform)
/// mu-dichotomy. Candidate projectors are coordinate projections onto
/// unions of blocks; both defining inequalities are fitted in log
/// coordinates over sampled pairs and the best candidate is returned.
[[nodiscard]] DichotomyEstimate test_dichotomy(const EvolutionOperator& op, const GrowthRate& rate,
                                               double gamma, DichotomyMode mode,
                                               const DichotomyOptions& opts = {});

/// Scan [lo, hi] for the dichotomy spectrum: classify a coarse grid,
/// detect rank jumps, and refine every interval endpoint by bisection to
/// width <= tol. Throws WindowError when the window boundary is spectral
/// or carries a partial rank (the spectrum continues outside).
[[nodiscard]] Spectrum compute_spectrum(const EvolutionOperator& op, const GrowthRate& rate,
                                        double lo, double hi, double tol,
                                        DichotomyMode mode = DichotomyMode::Uniform,
                                        const DichotomyOptions& opts = {});

} // namespace mudich
