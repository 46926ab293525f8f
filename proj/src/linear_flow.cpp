#include "mudich/linear_flow.hpp"

#include "mudich/errors.hpp"
#include "mudich/rk45.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mudich {

double operator_norm(const Matrix& m) {
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    return m.jacobiSvd().singularValues()(0);
}

// ---------------------------------------------------------------------------
// BlockCoefficient
// ---------------------------------------------------------------------------

int BlockCoefficient::dim() const { return dim_; }

Matrix BlockCoefficient::at(double t) const {
    switch (kind) {
        case CoefficientKind::Constant:
            return constant;
        case CoefficientKind::PiecewiseConstant: {
            // Right limit at a breakpoint: first piece whose interval
            // [bp_{k-1}, bp_k) contains t, with t == bp_k belonging to piece k+1.
            std::size_t idx = std::upper_bound(breakpoints.begin(), breakpoints.end(), t) -
                              breakpoints.begin();
            return pieces[idx];
        }
        case CoefficientKind::Smooth:
            return smooth(t);
    }
    throw Error("unreachable coefficient kind");
}

BlockCoefficient BlockCoefficient::constant_block(Matrix a, std::string label) {
    if (a.rows() != a.cols() || a.rows() < 1)
        throw PreconditionError("constant block: matrix must be square and nonempty");
    BlockCoefficient b;
    b.kind = CoefficientKind::Constant;
    b.dim_ = static_cast<int>(a.rows());
    b.constant = std::move(a);
    b.label = std::move(label);
    return b;
}

BlockCoefficient BlockCoefficient::piecewise_block(std::vector<double> breakpoints,
                                                   std::vector<Matrix> pieces,
                                                   std::string label) {
    if (pieces.size() != breakpoints.size() + 1)
        throw PreconditionError("piecewise block: need breakpoints.size() + 1 matrices");
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
        throw PreconditionError("piecewise block: breakpoints must be sorted");
    const auto rows = pieces.front().rows();
    for (const auto& p : pieces)
        if (p.rows() != rows || p.cols() != rows)
            throw PreconditionError("piecewise block: inconsistent matrix dimensions");
    BlockCoefficient b;
    b.kind = CoefficientKind::PiecewiseConstant;
    b.dim_ = static_cast<int>(rows);
    b.breakpoints = std::move(breakpoints);
    b.pieces = std::move(pieces);
    b.label = std::move(label);
    return b;
}

BlockCoefficient BlockCoefficient::smooth_block(std::function<Matrix(double)> a, int dim,
                                                std::string label, std::vector<double> kinks) {
    if (!a) throw PreconditionError("smooth block: callable is null");
    if (dim < 1) throw PreconditionError("smooth block: dimension must be positive");
    BlockCoefficient b;
    b.kind = CoefficientKind::Smooth;
    b.dim_ = dim;
    b.smooth = std::move(a);
    b.smooth_breakpoints = std::move(kinks);
    std::sort(b.smooth_breakpoints.begin(), b.smooth_breakpoints.end());
    b.label = std::move(label);
    return b;
}

// ---------------------------------------------------------------------------
// BlockSystem
// ---------------------------------------------------------------------------

BlockSystem::BlockSystem(std::vector<BlockCoefficient> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw PreconditionError("block system: needs at least one block");
    offsets_.reserve(blocks_.size());
    time_invariant_ = true;
    for (const auto& b : blocks_) {
        offsets_.push_back(dim_);
        dim_ += b.dim();
        if (b.kind != CoefficientKind::Constant) time_invariant_ = false;
    }
}

Matrix BlockSystem::at(double t) const {
    Matrix a = Matrix::Zero(dim_, dim_);
    for (int i = 0; i < block_count(); ++i)
        a.block(offsets_[i], offsets_[i], blocks_[i].dim(), blocks_[i].dim()) = blocks_[i].at(t);
    return a;
}

Vector BlockSystem::block_of(const Vector& x, int i) const {
    if (x.size() != dim_) throw PreconditionError("block_of: vector dimension mismatch");
    return x.segment(offsets_.at(i), blocks_.at(i).dim());
}

BlockSystem shifted(const BlockSystem& system, const GrowthRate& rate, double gamma) {
    std::vector<BlockCoefficient> out;
    out.reserve(system.block_count());
    for (int i = 0; i < system.block_count(); ++i) {
        const BlockCoefficient& b = system.block(i);
        const int d = b.dim();
        if (gamma == 0.0) {
            out.push_back(b);
            continue;
        }
        if (rate.kind() == RateKind::Exponential) {
            // mu'/mu == 1: the shift is a constant multiple of the identity.
            const Matrix shift = gamma * Matrix::Identity(d, d);
            switch (b.kind) {
                case CoefficientKind::Constant:
                    out.push_back(BlockCoefficient::constant_block(b.constant - shift, b.label));
                    break;
                case CoefficientKind::PiecewiseConstant: {
                    std::vector<Matrix> pieces = b.pieces;
                    for (auto& p : pieces) p -= shift;
                    out.push_back(
                        BlockCoefficient::piecewise_block(b.breakpoints, std::move(pieces), b.label));
                    break;
                }
                case CoefficientKind::Smooth: {
                    auto base = b.smooth;
                    out.push_back(BlockCoefficient::smooth_block(
                        [base, shift](double t) { return Matrix(base(t) - shift); }, d, b.label,
                        b.smooth_breakpoints));
                    break;
                }
            }
            continue;
        }
        // General rate: the shift varies with t.
        std::vector<double> kinks = b.smooth_breakpoints;
        if (b.kind == CoefficientKind::PiecewiseConstant) kinks = b.breakpoints;
        auto base = b;
        out.push_back(BlockCoefficient::smooth_block(
            [base, rate, gamma, d](double t) {
                return Matrix(base.at(t) -
                              gamma * shift_coefficient(rate, t) * Matrix::Identity(d, d));
            },
            d, b.label, std::move(kinks)));
    }
    return BlockSystem(std::move(out));
}

// ---------------------------------------------------------------------------
// EvolutionOperator
// ---------------------------------------------------------------------------

EvolutionOperator::EvolutionOperator(std::shared_ptr<const BlockSystem> system,
                                     IntegratorOptions opts)
    : system_(std::move(system)), opts_(opts) {
    if (!system_) throw PreconditionError("evolution operator: null system");
    unit_cache_.resize(system_->block_count());
}

Matrix EvolutionOperator::evolve(double t, double s) const {
    const int d = system_->dim();
    Matrix phi = Matrix::Zero(d, d);
    for (int i = 0; i < system_->block_count(); ++i) {
        const int off = system_->block_offset(i);
        const int di = system_->block_dim(i);
        phi.block(off, off, di, di) = evolve_block(i, t, s);
    }
    return phi;
}

Vector EvolutionOperator::apply(double t, double s, const Vector& x) const {
    Vector out(system_->dim());
    for (int i = 0; i < system_->block_count(); ++i) {
        const int off = system_->block_offset(i);
        const int di = system_->block_dim(i);
        out.segment(off, di) = evolve_block(i, t, s) * x.segment(off, di);
    }
    return out;
}

Matrix EvolutionOperator::evolve_block(int i, double t, double s) const {
    if (i < 0 || i >= system_->block_count())
        throw PreconditionError("evolve_block: block index out of range");
    if (!std::isfinite(t) || !std::isfinite(s))
        throw PreconditionError("evolve_block: times must be finite");
    const BlockCoefficient& b = system_->block(i);
    if (t == s) return Matrix::Identity(b.dim(), b.dim());
    switch (b.kind) {
        case CoefficientKind::Constant:
            return Matrix(((t - s) * b.constant).exp());
        case CoefficientKind::PiecewiseConstant:
            return piecewise_transition(i, t, s);
        case CoefficientKind::Smooth:
            return smooth_transition(i, t, s);
    }
    throw Error("unreachable coefficient kind");
}

Matrix EvolutionOperator::piecewise_transition(int i, double t, double s) const {
    const BlockCoefficient& b = system_->block(i);
    const double lo = std::min(s, t), hi = std::max(s, t);
    // Segment boundaries: s, interior breakpoints, t.
    std::vector<double> cuts{lo};
    for (double bp : b.breakpoints)
        if (bp > lo && bp < hi) cuts.push_back(bp);
    cuts.push_back(hi);

    Matrix phi = Matrix::Identity(b.dim(), b.dim());
    if (t >= s) {
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const Matrix a = b.at(cuts[k]); // right limit rules the cell
            phi = Matrix(((cuts[k + 1] - cuts[k]) * a).exp()) * phi;
        }
    } else {
        for (std::size_t k = cuts.size() - 1; k > 0; --k) {
            const Matrix a = b.at(cuts[k - 1]);
            phi = Matrix(((cuts[k - 1] - cuts[k]) * a).exp()) * phi;
        }
    }
    return phi;
}

Matrix EvolutionOperator::unit_step(int i, long long cell) const {
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = unit_cache_[i].find(cell);
        if (it != unit_cache_[i].end()) return it->second;
    }
    Matrix step = integrate_block(i, static_cast<double>(cell), static_cast<double>(cell + 1));
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        unit_cache_[i].emplace(cell, step);
    }
    return step;
}

Matrix EvolutionOperator::smooth_transition(int i, double t, double s) const {
    const BlockCoefficient& b = system_->block(i);
    // Compose cached integer-aligned checkpoints when the path lies in the
    // cached span; otherwise integrate directly.
    if (std::abs(t - s) < 2.0 || std::max(std::abs(t), std::abs(s)) > cache_span_)
        return integrate_block(i, s, t);

    const bool forward = t > s;
    const double a = forward ? s : t;
    const double c = forward ? t : s;
    const long long first = static_cast<long long>(std::ceil(a));
    const long long last = static_cast<long long>(std::floor(c));

    Matrix phi = integrate_block(i, a, static_cast<double>(first));
    for (long long cell = first; cell < last; ++cell) phi = unit_step(i, cell) * phi;
    phi = integrate_block(i, static_cast<double>(last), c) * phi;

    if (forward) return phi;
    // Phi(t, s) = Phi(s, t)^{-1}; blocks are small, the solve is exact enough.
    return phi.partialPivLu().solve(Matrix::Identity(b.dim(), b.dim()));
}

Matrix EvolutionOperator::integrate_block(int i, double s, double t) const {
    const BlockCoefficient& b = system_->block(i);
    const int d = b.dim();
    Matrix x = Matrix::Identity(d, d);
    if (t == s) return x;

    // Split at declared kinks so the error estimate stays meaningful.
    std::vector<double> cuts{std::min(s, t)};
    for (double bp : b.smooth_breakpoints)
        if (bp > cuts.front() && bp < std::max(s, t)) cuts.push_back(bp);
    cuts.push_back(std::max(s, t));
    if (t < s) std::reverse(cuts.begin(), cuts.end());

    auto rhs = [&](double tau, const Matrix& m) { return Matrix(b.at(tau) * m); };
    auto norm = [](const Matrix& m) { return m.cwiseAbs().maxCoeff(); };
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg)
        x = rk45_integrate(rhs, cuts[seg], cuts[seg + 1], std::move(x), opts_.rel_tol,
                           opts_.abs_tol, norm, "evolution integrator");
    return x;
}

// ---------------------------------------------------------------------------
// Bounded growth fit
// ---------------------------------------------------------------------------

GrowthFit fit_bounded_growth(const EvolutionOperator& op, const GrowthRate& rate,
                             const std::vector<std::pair<double, double>>& pairs,
                             double fit_tol, double eps_max) {
    if (pairs.size() < 10)
        throw PreconditionError("fit_bounded_growth: need at least 10 (t, s) pairs");
    bool has_fwd = false, has_bwd = false, has_pos = false, has_neg = false, nondegenerate = false;
    for (const auto& [t, s] : pairs) {
        has_fwd |= t > s;
        has_bwd |= t < s;
        has_pos |= s > 0;
        has_neg |= s < 0;
        nondegenerate |= t != s;
    }
    if (!nondegenerate) throw PreconditionError("fit_bounded_growth: degenerate grid (all t == s)");
    if (!has_fwd || !has_bwd || !has_pos || !has_neg)
        throw PreconditionError("fit_bounded_growth: grid must cover t >= s, t <= s and both signs of s");

    struct Sample {
        double y, absL, g;
    };
    std::vector<Sample> samples;
    samples.reserve(pairs.size());
    double max_absL = 0.0;
    for (const auto& [t, s] : pairs) {
        if (t == s) continue;
        const double y = std::log(std::max(operator_norm(op.evolve(t, s)), 1e-300));
        const double absL = std::abs(log_ratio(rate, t, s));
        const double g = std::abs(rate.log_value(s));
        samples.push_back({y, absL, g});
        max_absL = std::max(max_absL, absL);
    }

    // Envelope slope over the far pairs, and its drift against the next
    // scale down; a growing required slope means no linear bound fits.
    auto env_slope = [&](double lo_frac, double hi_frac) {
        double a = 0.0;
        for (const auto& smp : samples)
            if (smp.absL > lo_frac * max_absL && smp.absL <= hi_frac * max_absL && smp.absL > 1e-9)
                a = std::max(a, smp.y / smp.absL);
        return a;
    };
    const double a_far = env_slope(0.5, 1.0);
    const double a_near = env_slope(0.25, 0.5);
    const double slack = std::abs(a_far - a_near);

    GrowthFit fit;
    fit.a = std::max(a_far, 0.0);
    fit.slack = slack;

    // epsilon from the s-dependent residual, least squares over pairs with
    // a usable |log mu(s)| regressor.
    double sgg = 0.0, sgr = 0.0;
    for (const auto& smp : samples) {
        const double r = smp.y - fit.a * smp.absL;
        if (smp.g > 0.5) {
            sgg += smp.g * smp.g;
            sgr += smp.g * r;
        }
    }
    fit.epsilon = sgg > 0.0 ? std::max(0.0, sgr / sgg) : 0.0;

    double log_k = 0.0;
    for (const auto& smp : samples)
        log_k = std::max(log_k, smp.y - fit.a * smp.absL - fit.epsilon * smp.g);
    fit.K = std::exp(log_k);

    fit.admits = slack <= fit_tol && fit.epsilon <= eps_max;
    return fit;
}

std::vector<std::pair<double, double>> growth_fit_pairs(const GrowthRate& rate, double horizon_u,
                                                        int nodes) {
    std::vector<double> ts;
    ts.reserve(nodes);
    for (int i = 0; i < nodes; ++i) {
        const double u = -horizon_u + 2.0 * horizon_u * i / (nodes - 1);
        ts.push_back(rate.inverse_log(u));
    }
    std::vector<std::pair<double, double>> pairs;
    for (double t : ts)
        for (double s : ts)
            if (t != s) pairs.emplace_back(t, s);
    return pairs;
}

} // namespace mudich
