#include "mudich/dichotomy.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

namespace mudich {

namespace {

struct PairSample {
    double L = 0.0; ///< log mu(t) - log mu(s)
    double g = 0.0; ///< |log mu(s)|, regressor of the nonuniform factor
    std::vector<double> block_log_norm;
};

/// log||Phi_i|| on every ordered node pair of a log-mu-uniform grid.
std::vector<PairSample> sample_pairs(const EvolutionOperator& op, const GrowthRate& rate,
                                     const DichotomyOptions& opts) {
    const int n = op.system().block_count();
    std::vector<double> us, ts;
    for (int i = 0; i < opts.nodes; ++i) {
        const double u = -opts.horizon_u + 2.0 * opts.horizon_u * i / (opts.nodes - 1);
        us.push_back(u);
        ts.push_back(rate.inverse_log(u));
    }
    // Chain transitions t_k -> t_{k+1} once per block, then compose.
    std::vector<std::vector<Matrix>> chain(n);
    for (int b = 0; b < n; ++b) {
        chain[b].reserve(ts.size() - 1);
        for (std::size_t k = 0; k + 1 < ts.size(); ++k)
            chain[b].push_back(op.evolve_block(b, ts[k + 1], ts[k]));
    }
    std::vector<PairSample> out;
    for (std::size_t a = 0; a < ts.size(); ++a) {
        std::vector<Matrix> acc(n);
        for (int b = 0; b < n; ++b) acc[b] = Matrix::Identity(op.system().block_dim(b),
                                                              op.system().block_dim(b));
        for (std::size_t c = a; c < ts.size(); ++c) {
            if (c > a)
                for (int b = 0; b < n; ++b) acc[b] = chain[b][c - 1] * acc[b];
            if (a == c) continue;
            // Forward pair (t_c >= t_a) and its reverse.
            PairSample fwd, bwd;
            fwd.L = us[c] - us[a];
            fwd.g = std::abs(us[a]);
            bwd.L = us[a] - us[c];
            bwd.g = std::abs(us[c]);
            for (int b = 0; b < n; ++b) {
                fwd.block_log_norm.push_back(std::log(std::max(operator_norm(acc[b]), 1e-300)));
                const Matrix inv = acc[b].partialPivLu().solve(
                    Matrix::Identity(acc[b].rows(), acc[b].cols()));
                bwd.block_log_norm.push_back(std::log(std::max(operator_norm(inv), 1e-300)));
            }
            out.push_back(std::move(fwd));
            out.push_back(std::move(bwd));
        }
    }
    return out;
}

struct SideFit {
    double slope = 0.0;   ///< exponent of (mu(t)/mu(s))
    double nonuni = 0.0;  ///< exponent of mu(s)^{sgn(s) * }
    double log_k = 0.0;   ///< envelope constant
    double residual = 0.0;
    double max_absL = 0.0;
};

/// Least squares of y over (1, L[, g]) plus the envelope constant that
/// makes the bound an inequality over all samples.
SideFit fit_side(const std::vector<double>& y, const std::vector<double>& L,
                 const std::vector<double>& g, bool with_nonuniform) {
    SideFit fit;
    const std::size_t m = y.size();
    if (m == 0) return fit;

    // Normal equations for up to three regressors.
    double s1 = static_cast<double>(m), sl = 0, sg = 0, sll = 0, slg = 0, sgg = 0;
    double sy = 0, sly = 0, sgy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sl += L[i];
        sg += g[i];
        sll += L[i] * L[i];
        slg += L[i] * g[i];
        sgg += g[i] * g[i];
        sy += y[i];
        sly += L[i] * y[i];
        sgy += g[i] * y[i];
    }
    double c = 0, slope = 0, nonuni = 0;
    if (with_nonuniform && sgg > 1e-12) {
        Eigen::Matrix3d a;
        a << s1, sl, sg, sl, sll, slg, sg, slg, sgg;
        Eigen::Vector3d b(sy, sly, sgy);
        Eigen::Vector3d x = a.fullPivLu().solve(b);
        c = x(0);
        slope = x(1);
        nonuni = x(2);
    }
    if (!with_nonuniform || nonuni < 0.0 || sgg <= 1e-12) {
        // Uniform fit (also the clamped refit when the nonuniform exponent
        // came out negative; theta, nu >= 0 by definition).
        const double det = s1 * sll - sl * sl;
        if (std::abs(det) < 1e-12) {
            slope = 0.0;
            c = sy / s1;
        } else {
            slope = (s1 * sly - sl * sy) / det;
            c = (sy - slope * sl) / s1;
        }
        nonuni = 0.0;
    }
    fit.slope = slope;
    fit.nonuni = nonuni;
    for (std::size_t i = 0; i < m; ++i) {
        const double r = y[i] - c - slope * L[i] - nonuni * g[i];
        fit.log_k = std::max(fit.log_k, c + r);
        fit.residual = std::max(fit.residual, std::abs(r));
        fit.max_absL = std::max(fit.max_absL, std::abs(L[i]));
    }
    return fit;
}

} // namespace

DichotomyEstimate test_dichotomy(const EvolutionOperator& op, const GrowthRate& rate, double gamma,
                                 DichotomyMode mode, const DichotomyOptions& opts) {
    auto shifted_sys = std::make_shared<BlockSystem>(shifted(op.system(), rate, gamma));
    EvolutionOperator sop(shifted_sys, op.options());
    const int n = shifted_sys->block_count();
    const auto samples = sample_pairs(sop, rate, opts);
    const bool nonuniform = mode == DichotomyMode::Nonuniform;

    DichotomyEstimate best;
    double best_slack = -1e300;
    double worst_resolution = 0.0;

    for (int mask = 0; mask < (1 << n); ++mask) {
        // Stable part: blocks in the candidate, pairs with t >= s.
        std::vector<double> ys, Ls, gs, yu, Lu, gu;
        for (const auto& p : samples) {
            double stable = -1e300, unstable = -1e300;
            for (int b = 0; b < n; ++b) {
                if (mask & (1 << b))
                    stable = std::max(stable, p.block_log_norm[b]);
                else
                    unstable = std::max(unstable, p.block_log_norm[b]);
            }
            if (p.L >= 0.0 && stable > -1e300) {
                ys.push_back(stable);
                Ls.push_back(p.L);
                gs.push_back(p.g);
            }
            if (p.L <= 0.0 && unstable > -1e300) {
                yu.push_back(unstable);
                Lu.push_back(p.L);
                gu.push_back(p.g);
            }
        }
        const SideFit stable_fit = fit_side(ys, Ls, gs, nonuniform);
        const SideFit unstable_fit = fit_side(yu, Lu, gu, nonuniform);

        const bool has_stable = mask != 0;
        const bool has_unstable = mask != (1 << n) - 1;
        const double m_stable =
            has_stable ? -(stable_fit.slope + stable_fit.nonuni) : 1e300;
        const double m_unstable =
            has_unstable ? unstable_fit.slope - unstable_fit.nonuni : 1e300;
        const double slack = std::min(m_stable, m_unstable);

        if (has_stable && stable_fit.max_absL > 0.0)
            worst_resolution = std::max(worst_resolution,
                                        2.0 * stable_fit.residual / stable_fit.max_absL);
        if (has_unstable && unstable_fit.max_absL > 0.0)
            worst_resolution = std::max(worst_resolution,
                                        2.0 * unstable_fit.residual / unstable_fit.max_absL);

        if (slack > best_slack) {
            best_slack = slack;
            best.admits = slack > opts.margin;
            best.rank = 0;
            for (int b = 0; b < n; ++b)
                if (mask & (1 << b)) best.rank += shifted_sys->block_dim(b);
            best.alpha = has_stable ? stable_fit.slope : 0.0;
            best.theta = has_stable ? stable_fit.nonuni : 0.0;
            best.beta = has_unstable ? unstable_fit.slope : 0.0;
            best.nu = has_unstable ? unstable_fit.nonuni : 0.0;
            best.K = std::exp(std::max({stable_fit.log_k, unstable_fit.log_k, 0.0}));
            best.slack = std::min(slack, 1e300);
        }
    }

    if (worst_resolution > opts.margin && std::abs(best_slack) <= worst_resolution) {
        std::ostringstream os;
        os << "test_dichotomy: horizon too small to separate exponents at gamma = " << gamma
           << " (resolution " << worst_resolution << " exceeds margin " << opts.margin << ")";
        throw InconclusiveError(os.str(), gamma);
    }
    return best;
}

namespace {

struct Classifier {
    const EvolutionOperator& op;
    const GrowthRate& rate;
    DichotomyMode mode;
    const DichotomyOptions& opts;
    std::map<double, DichotomyEstimate> log;

    const DichotomyEstimate& at(double gamma) {
        auto it = log.find(gamma);
        if (it == log.end())
            it = log.emplace(gamma, test_dichotomy(op, rate, gamma, mode, opts)).first;
        return it->second;
    }
};

} // namespace

Spectrum compute_spectrum(const EvolutionOperator& op, const GrowthRate& rate, double lo,
                          double hi, double tol, DichotomyMode mode,
                          const DichotomyOptions& opts) {
    if (!(tol > 0.0)) throw PreconditionError("compute_spectrum: tol must be positive");
    if (!(hi > lo)) throw PreconditionError("compute_spectrum: empty window");

    Spectrum spectrum;
    spectrum.tol = tol;
    const auto growth = fit_bounded_growth(op, rate, growth_fit_pairs(rate, opts.horizon_u / 2.0));
    spectrum.growth_warning = !growth.admits;

    Classifier cls{op, rate, mode, opts, {}};
    const int d = op.system().dim();

    // Coarse scan.
    const int coarse = std::max(33, std::min(161, static_cast<int>((hi - lo) / tol) + 1));
    std::vector<double> gammas;
    for (int i = 0; i < coarse; ++i) gammas.push_back(lo + (hi - lo) * i / (coarse - 1));
    for (double g : gammas) cls.at(g);

    const auto& first = cls.at(lo);
    const auto& last = cls.at(hi);
    if (!first.admits || first.rank != 0)
        throw WindowError("compute_spectrum: spectrum reaches the lower window boundary; widen the window");
    if (!last.admits || last.rank != d)
        throw WindowError("compute_spectrum: spectrum reaches the upper window boundary; widen the window");

    // Event detection: spectral runs and silent rank jumps.
    struct Event {
        double left_res;   // resolvent gamma left of the interval
        double right_res;  // resolvent gamma right of the interval
        double witness_lo; // leftmost spectral evidence
        double witness_hi; // rightmost spectral evidence
        bool degenerate = false;
    };
    std::vector<Event> events;
    std::size_t i = 0;
    while (i < gammas.size()) {
        const auto& est = cls.at(gammas[i]);
        if (!est.admits) {
            const std::size_t begin = i;
            while (i < gammas.size() && !cls.at(gammas[i]).admits) ++i;
            Event e;
            e.left_res = gammas[begin - 1];
            e.right_res = gammas[i]; // scan cannot end spectral: boundary admits
            e.witness_lo = gammas[begin];
            e.witness_hi = gammas[i - 1];
            events.push_back(e);
            continue;
        }
        if (i + 1 < gammas.size()) {
            const auto& next = cls.at(gammas[i + 1]);
            if (next.admits && next.rank != est.rank) {
                // Hidden interval between two resolvent probes: bisect for a
                // spectral witness.
                double a = gammas[i], b = gammas[i + 1];
                const int ra = est.rank;
                bool found = false;
                double witness = 0.5 * (a + b);
                while (b - a > tol * 1e-3) {
                    const double mid = 0.5 * (a + b);
                    const auto& m = cls.at(mid);
                    if (!m.admits) {
                        witness = mid;
                        found = true;
                        break;
                    }
                    (m.rank == ra ? a : b) = mid;
                }
                Event e;
                e.left_res = gammas[i];
                e.right_res = gammas[i + 1];
                e.witness_lo = e.witness_hi = found ? witness : 0.5 * (a + b);
                e.degenerate = !found;
                events.push_back(e);
            }
        }
        ++i;
    }

    // Refine endpoints by bisection on the classification.
    auto bisect_edge = [&](double res_side, double spec_side) {
        while (std::abs(spec_side - res_side) > 0.5 * tol) {
            const double mid = 0.5 * (res_side + spec_side);
            (cls.at(mid).admits ? res_side : spec_side) = mid;
        }
        return 0.5 * (res_side + spec_side);
    };

    for (const auto& e : events) {
        SpectralInterval iv;
        if (e.degenerate) {
            iv.lo = iv.hi = e.witness_lo;
        } else {
            iv.lo = bisect_edge(e.left_res, e.witness_lo);
            iv.hi = bisect_edge(e.right_res, e.witness_hi);
        }
        spectrum.intervals.push_back(iv);
    }
    std::sort(spectrum.intervals.begin(), spectrum.intervals.end(),
              [](const SpectralInterval& a, const SpectralInterval& b) { return a.lo < b.lo; });

    // Gap ranks from the resolvent probes between intervals.
    std::vector<double> cuts{lo - 1.0};
    for (const auto& iv : spectrum.intervals) {
        cuts.push_back(iv.lo);
        cuts.push_back(iv.hi);
    }
    cuts.push_back(hi + 1.0);
    for (std::size_t gpos = 0; gpos + 1 < cuts.size(); gpos += 2) {
        const double a = cuts[gpos], b = cuts[gpos + 1];
        int rank = -1;
        for (const auto& [gamma, est] : cls.log)
            if (gamma > a && gamma < b && est.admits) rank = std::max(rank, est.rank);
        if (rank < 0) {
            const double mid = std::clamp(0.5 * (a + b), lo, hi);
            rank = cls.at(mid).rank;
        }
        spectrum.gap_ranks.push_back(rank);
    }
    for (std::size_t k = 0; k + 1 < spectrum.gap_ranks.size(); ++k)
        if (spectrum.gap_ranks[k] >= spectrum.gap_ranks[k + 1])
            throw NumericalError("compute_spectrum: resolvent ranks are not strictly increasing");
    if (static_cast<int>(spectrum.intervals.size()) > d)
        throw NumericalError("compute_spectrum: more intervals than the dimension allows");

    for (const auto& [gamma, est] : cls.log)
        spectrum.probes.push_back({gamma, est.admits, est.rank, est.alpha, est.beta});
    return spectrum;
}

} // namespace mudich
