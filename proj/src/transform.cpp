#include "mudich/transform.hpp"

#include "mudich/errors.hpp"
#include "mudich/rk45.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

namespace mudich {

// ---------------------------------------------------------------------------
// Origin coefficient estimation
// ---------------------------------------------------------------------------

namespace {

/// Central-difference stencil (offset, weight) pairs for d^q/dx^q, O(h^2).
const std::vector<std::pair<int, double>>& stencil_for(int q) {
    static const std::vector<std::vector<std::pair<int, double>>> table = {
        {{0, 1.0}},
        {{-1, -0.5}, {1, 0.5}},
        {{-1, 1.0}, {0, -2.0}, {1, 1.0}},
        {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}},
        {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}},
    };
    if (q < 0 || q >= static_cast<int>(table.size()))
        throw PreconditionError("origin coefficient stencil: order beyond the supported range");
    return table[q];
}

/// All coordinate exponents beta (length d) whose per-block degree sums
/// equal the block multi-index m.
std::vector<std::vector<int>> coordinate_exponents(const MultiIndex& m,
                                                   const std::vector<int>& dims) {
    std::vector<std::vector<int>> out{std::vector<int>{}};
    for (std::size_t b = 0; b < dims.size(); ++b) {
        std::vector<std::vector<int>> next;
        // Compositions of m[b] over dims[b] coordinates.
        std::vector<int> comp(dims[b], 0);
        std::function<void(int, int)> fill = [&](int slot, int remaining) {
            if (slot == dims[b] - 1) {
                comp[slot] = remaining;
                for (const auto& prefix : out) {
                    auto beta = prefix;
                    beta.insert(beta.end(), comp.begin(), comp.end());
                    next.push_back(std::move(beta));
                }
                return;
            }
            for (int v = remaining; v >= 0; --v) {
                comp[slot] = v;
                fill(slot + 1, remaining - v);
            }
        };
        fill(0, m[b]);
        out = std::move(next);
    }
    return out;
}

/// Mixed central difference of d^beta field_j at x = 0 with step h.
Vector mixed_difference(const std::function<Vector(double, const Vector&)>& field, int dim,
                        int offset, int out_dim, const std::vector<int>& beta, double t, double h,
                        double domain_radius) {
    std::vector<int> active;
    for (std::size_t c = 0; c < beta.size(); ++c)
        if (beta[c] > 0) active.push_back(static_cast<int>(c));

    Vector acc = Vector::Zero(out_dim);
    std::function<void(std::size_t, double, Vector&)> walk = [&](std::size_t idx, double weight,
                                                                 Vector& point) {
        if (idx == active.size()) {
            if (point.norm() > domain_radius)
                throw DomainError("estimate_origin_coeff: stencil exits the working domain");
            acc += weight * field(t, point).segment(offset, out_dim);
            return;
        }
        const int c = active[idx];
        for (const auto& [off, w] : stencil_for(beta[c])) {
            point(c) = off * h;
            walk(idx + 1, weight * w, point);
        }
        point(c) = 0.0;
    };
    Vector origin = Vector::Zero(dim);
    walk(0, 1.0, origin);
    return acc / std::pow(h, order_of(beta));
}

} // namespace

CoeffEstimate estimate_origin_coeff(const std::function<Vector(double, const Vector&)>& field,
                                    const std::vector<int>& block_dims, int position,
                                    const MultiIndex& m, double t,
                                    const std::vector<double>& radii, double domain_radius) {
    if (radii.empty()) throw PreconditionError("estimate_origin_coeff: no stencil radii");
    if (order_of(m) < 1) throw PreconditionError("estimate_origin_coeff: |m| must be >= 1");
    int dim = 0, offset = 0;
    for (std::size_t b = 0; b < block_dims.size(); ++b) {
        if (static_cast<int>(b) == position) offset = dim;
        dim += block_dims[b];
    }
    const int out_dim = block_dims.at(position);

    CoeffEstimate est;
    est.tensor = CoeffTensor::zero(position, m, block_dims);
    for (const auto& beta : coordinate_exponents(m, block_dims)) {
        // One difference per radius, then two Richardson stages.
        std::vector<Vector> e;
        for (double h : radii)
            e.push_back(mixed_difference(field, dim, offset, out_dim, beta, t, h, domain_radius));
        Vector value;
        double bar = 0.0;
        if (e.size() >= 3) {
            const Vector r1 = (4.0 * e[1] - e[0]) / 3.0;
            const Vector r2 = (4.0 * e[2] - e[1]) / 3.0;
            value = (16.0 * r2 - r1) / 15.0;
            bar = (r2 - r1).cwiseAbs().maxCoeff() / 15.0 + (value - r2).cwiseAbs().maxCoeff();
        } else if (e.size() == 2) {
            value = (4.0 * e[1] - e[0]) / 3.0;
            bar = (e[1] - e[0]).cwiseAbs().maxCoeff() / 3.0;
        } else {
            value = e[0];
            bar = value.cwiseAbs().maxCoeff();
        }
        double beta_fact = 1.0;
        for (int bc : beta)
            for (int q = 2; q <= bc; ++q) beta_fact *= q;
        value /= beta_fact;
        est.error_bar = std::max(est.error_bar, bar / beta_fact);
        if (value.cwiseAbs().maxCoeff() > 0.0) est.tensor.insert(beta, value);
    }
    return est;
}

std::vector<double> fit_radii_to_domain(std::vector<double> radii, int dim, double domain_radius) {
    if (radii.empty() || !std::isfinite(domain_radius)) return radii;
    double widest = 0.0;
    for (double r : radii) widest = std::max(widest, 2.0 * r * std::sqrt(static_cast<double>(dim)));
    const double cap = 0.6 * domain_radius;
    if (widest > cap && widest > 0.0)
        for (double& r : radii) r *= cap / widest;
    return radii;
}

// ---------------------------------------------------------------------------
// TransformedSystem
// ---------------------------------------------------------------------------

struct TransformedSystem::Cache {
    std::mutex mutex;
    std::map<std::tuple<int, MultiIndex, long long>, CoeffTensor> lattice;
};

TransformedSystem::TransformedSystem(std::shared_ptr<const ConjugationMap> map, Nonlinearity base,
                                     TransformOptions opts)
    : map_(std::move(map)), base_(std::move(base)), opts_(std::move(opts)),
      cache_(std::make_shared<Cache>()) {
    if (!map_) throw PreconditionError("transformed system: null conjugation map");
    if (base_.dim() != map_->op().system().dim())
        throw PreconditionError("transformed system: nonlinearity dimension mismatch");
    time_invariant_ = base_.time_invariant() && map_->time_invariant();
}

Vector TransformedSystem::transformed_rhs(double t, const Vector& x) const {
    const Vector u = map_->H_inverse(t, x);
    const Vector au_f = map_->op().system().at(t) * u + base_.eval(t, u);
    return au_f + map_->d1h_eval(t, u) + map_->d2h_eval(t, u, au_f);
}

Vector TransformedSystem::remainder_R(double t, const Vector& x) const {
    const BlockSystem& sys = map_->op().system();
    const int j = map_->position();
    const Vector u = map_->H_inverse(t, x);
    const Vector fu = base_.eval(t, u);
    Vector r = fu - base_.eval(t, x);
    const CoeffTensor c = map_->coeff(t);
    r.segment(sys.block_offset(j), sys.block_dim(j)) +=
        map_->d2h_eval(t, u, fu).segment(sys.block_offset(j), sys.block_dim(j)) + c.apply(x) -
        c.apply(u);
    return r;
}

Vector TransformedSystem::G_eval(double t, const Vector& x) const {
    // G_i = F_i(t,u); G_j = F_j(t,u) - c(t)[u]^k + D2h_j(t,u) F(t,u).
    // Algebraically G~ - A x, with the A-terms cancelled symbolically
    // rather than in floating point.
    const BlockSystem& sys = map_->op().system();
    const int j = map_->position();
    const Vector u = map_->H_inverse(t, x);
    const Vector fu = base_.eval(t, u);
    Vector g = fu;
    g.segment(sys.block_offset(j), sys.block_dim(j)) +=
        map_->d2h_eval(t, u, fu).segment(sys.block_offset(j), sys.block_dim(j)) -
        map_->coeff(t).apply(u);
    return g;
}

CoeffTensor TransformedSystem::estimate_at(int position, const MultiIndex& m, double t) const {
    std::vector<double> radii = opts_.stencil_radii;
    const int excess = std::max(0, order_of(m) - 2);
    for (double& r : radii) r *= std::pow(opts_.stencil_growth, excess);
    radii = fit_radii_to_domain(std::move(radii), base_.dim(), map_->trumpet_radius(t));
    auto field = [this](double tt, const Vector& xx) { return G_eval(tt, xx); };
    return estimate_origin_coeff(field, base_.block_dims(), position, m, t, radii,
                                 map_->trumpet_radius(t))
        .tensor;
}

CoeffTensor TransformedSystem::derived_coeff(int position, const MultiIndex& m, double t) const {
    auto fetch = [&](long long idx, double at) -> CoeffTensor {
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            auto it = cache_->lattice.find({position, m, idx});
            if (it != cache_->lattice.end()) return it->second;
        }
        CoeffTensor c = estimate_at(position, m, at);
        std::lock_guard<std::mutex> lock(cache_->mutex);
        return cache_->lattice.emplace(std::make_tuple(position, m, idx), std::move(c))
            .first->second;
    };

    if (time_invariant_) return fetch(0, 0.0);

    // Cubic Lagrange interpolation on the four surrounding lattice points.
    const double step = opts_.derived_lattice_step;
    const long long i0 = static_cast<long long>(std::floor(t / step));
    CoeffTensor out = CoeffTensor::zero(position, m, base_.block_dims());
    double weights[4];
    const double s = t / step - static_cast<double>(i0);
    weights[0] = -s * (s - 1.0) * (s - 2.0) / 6.0;
    weights[1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    weights[2] = -(s + 1.0) * s * (s - 2.0) / 2.0;
    weights[3] = (s + 1.0) * s * (s - 1.0) / 6.0;
    for (int q = 0; q < 4; ++q) {
        const long long idx = i0 - 1 + q;
        if (weights[q] == 0.0) continue;
        const CoeffTensor node = fetch(idx, static_cast<double>(idx) * step);
        for (const auto& [beta, a] : node.entries) out.insert(beta, weights[q] * a);
    }
    return out;
}

CoeffTensor TransformedSystem::taylor_coeff(int position, const MultiIndex& m, double t) const {
    const int target_order = order_of(map_->target());
    if (order_of(m) <= target_order) {
        if (position == map_->position() && m == map_->target())
            return CoeffTensor::zero(position, m, base_.block_dims());
        return base_.taylor_coeff(position, m, t);
    }
    if (order_of(m) > base_.order())
        throw PreconditionError("taylor_coeff: order beyond the declared ell");
    return derived_coeff(position, m, t);
}

AdmissibleCandidate TransformedSystem::fit_derived_psi() const {
    const int n = base_.block_count();
    double scale = 1e-6;
    for (int ord = 2; ord <= base_.order(); ++ord) {
        double mfact = 1.0;
        for (int q = 2; q <= ord; ++q) mfact *= q;
        for (double t : opts_.verify_times) {
            double total = 0.0;
            for (int j = 0; j < n; ++j)
                for (const auto& k : multi_indices(n, ord))
                    total += taylor_coeff(j, k, t).norm_estimate();
            const double denom = std::max(base_.psi()(t), 1.0);
            scale = std::max(scale, mfact * total / denom);
        }
    }
    auto psi = base_.psi();
    auto fn = [psi, scale](double t) { return scale * std::max(psi(t), 1.0); };
    return AdmissibleCandidate::callable(fn, {0.0, 0.0, 0.0}, "derived");
}

Nonlinearity derived_nonlinearity(std::shared_ptr<const TransformedSystem> ts,
                                  AdmissibleCandidate psi_new) {
    const auto& base = ts->base();
    auto eval = [ts](double t, const Vector& x) { return ts->G_eval(t, x); };
    auto taylor = [ts](int position, const MultiIndex& m, double t) {
        return ts->taylor_coeff(position, m, t);
    };
    return Nonlinearity::custom(base.block_dims(), base.order(), eval, taylor, std::move(psi_new),
                                ts->time_invariant());
}

// ---------------------------------------------------------------------------
// Conjugacy residual
// ---------------------------------------------------------------------------

double conjugacy_residual(const TransformedSystem& ts, double t0, const Vector& x0, double horizon,
                          const ConjugacyOptions& opts) {
    if (opts.grid_points < 5) throw PreconditionError("conjugacy_residual: need >= 5 grid points");
    const ConjugationMap& map = ts.map();
    const BlockSystem& sys = map.op().system();
    auto vec_norm = [](const Vector& v) { return v.cwiseAbs().maxCoeff(); };

    auto base_rhs = [&](double t, const Vector& u) -> Vector {
        return sys.at(t) * u + ts.base().eval(t, u);
    };
    auto transformed = [&](double t, const Vector& v) -> Vector {
        return ts.transformed_rhs(t, v);
    };

    const int n = opts.grid_points;
    const double dt = horizon / (n - 1);
    std::vector<Vector> traj(n);
    traj[0] = x0;
    for (int i = 0; i + 1 < n; ++i) {
        const double a = t0 + i * dt, b = t0 + (i + 1) * dt;
        traj[i + 1] = opts.reverse
                          ? rk45_integrate(transformed, a, b, traj[i], opts.rel_tol, opts.abs_tol,
                                           vec_norm, "conjugacy integrator")
                          : rk45_integrate(base_rhs, a, b, traj[i], opts.rel_tol, opts.abs_tol,
                                           vec_norm, "conjugacy integrator");
        const double radius = map.trumpet_radius(b);
        const Vector inside = opts.reverse ? map.H_inverse(b, traj[i + 1]) : traj[i + 1];
        if (inside.norm() > radius) {
            std::ostringstream os;
            os << "conjugacy_residual: trajectory left the trumpet at t = " << b << " (|x| = "
               << inside.norm() << " > " << radius << ")";
            throw DomainError(os.str());
        }
    }

    // Map the trajectory through H (or H^{-1}) and compare the central
    // finite-difference derivative against the other field.
    std::vector<Vector> mapped(n);
    for (int i = 0; i < n; ++i) {
        const double t = t0 + i * dt;
        mapped[i] = opts.reverse ? map.H_inverse(t, traj[i]) : map.H_eval(t, traj[i]);
    }
    double residual = 0.0;
    for (int i = 1; i + 1 < n; ++i) {
        const double t = t0 + i * dt;
        const Vector fd = (mapped[i + 1] - mapped[i - 1]) / (2.0 * dt);
        const Vector rhs = opts.reverse ? base_rhs(t, mapped[i]) : transformed(t, mapped[i]);
        residual = std::max(residual, (fd - rhs).norm());
    }
    return residual;
}

// ---------------------------------------------------------------------------
// Elimination pipeline
// ---------------------------------------------------------------------------

EliminationResult eliminate_term(std::shared_ptr<const EvolutionOperator> op,
                                 const GrowthRate& rate, const Nonlinearity& nl,
                                 const Spectrum& spectrum, int position, MultiIndex k,
                                 const TransformOptions& opts, bool check_h2) {
    const auto verdict = check_nonresonance(spectrum, position, k);
    if (verdict.status == ResonanceStatus::Resonant) {
        std::ostringstream os;
        os << "eliminate_term: target (j = " << position + 1 << ", k = (";
        for (std::size_t i = 0; i < k.size(); ++i) os << (i ? "," : "") << k[i];
        os << ")) is resonant";
        throw PreconditionError(os.str());
    }
    if (check_h2) {
        std::vector<double> grid = opts.verify_times;
        for (double t : {-5.0, -1.0, 1.0, 5.0}) grid.push_back(t);
        std::sort(grid.begin(), grid.end());
        const auto h2 = verify_H2(nl, rate, H2Mode::Admissible, {0.5 * verdict.dist}, grid);
        if (!h2.pass) {
            std::ostringstream os;
            os << "eliminate_term: (H2) failed";
            if (!h2.violations.empty())
                os << " at order " << h2.violations.front().order << ", t = "
                   << h2.violations.front().t << " (|D^m F| = "
                   << h2.violations.front().derivative_norm << " > psi = "
                   << h2.violations.front().psi_value << ")";
            if (h2.origin_residual > 1e-5)
                os << "; origin residual " << h2.origin_residual;
            throw PreconditionError(os.str());
        }
    }

    auto map = std::make_shared<const ConjugationMap>(op, rate, nl, spectrum, position, k,
                                                      opts.homological);
    auto ts = std::make_shared<const TransformedSystem>(map, nl, opts);

    EliminationStep step;
    step.position = position;
    step.k = k;
    step.direction = verdict.status == ResonanceStatus::LeftGap ? "left-gap" : "right-gap";
    step.dist = verdict.dist;
    step.eps = map->epsilon();
    step.K = map->fitted_K();
    step.delta = map->delta();
    step.xi_at_origin = map->trumpet_radius(0.0);

    for (double t : opts.verify_times) {
        step.coeff_before =
            std::max(step.coeff_before, nl.taylor_coeff(position, k, t).norm_estimate());
        const auto after = estimate_origin_coeff(
            [&ts](double tt, const Vector& xx) { return ts->G_eval(tt, xx); }, nl.block_dims(),
            position, k, t,
            fit_radii_to_domain(opts.stencil_radii, nl.dim(), map->trumpet_radius(t)),
            map->trumpet_radius(t));
        step.coeff_after = std::max(step.coeff_after, after.tensor.norm_estimate());
    }

    // Round-trip spot check at half the trumpet radius.
    {
        const double t = 0.0;
        const double r = 0.5 * std::min(map->trumpet_radius(t), 1.0);
        Vector y = Vector::Constant(nl.dim(), r / std::sqrt(static_cast<double>(nl.dim())));
        const Vector x = map->H_inverse(t, y);
        step.roundtrip_residual = (map->H_eval(t, x) - y).norm();
    }

    EliminationResult result{derived_nonlinearity(ts, ts->fit_derived_psi()), std::move(step), ts};
    return result;
}

NormalFormResult normal_form(std::shared_ptr<const EvolutionOperator> op, const GrowthRate& rate,
                             const Nonlinearity& nl, const Spectrum& spectrum, int ell,
                             const TransformOptions& opts) {
    if (ell < 2 || ell > nl.order())
        throw PreconditionError("normal_form: ell must lie in [2, the declared order]");
    const auto h3 = check_H3(spectrum, ell);
    if (!h3.pass) {
        std::ostringstream os;
        os << "normal_form: (H3) fails with " << h3.violations.size()
           << " resonant pair(s); first at position " << h3.violations.front().position + 1;
        throw PreconditionError(os.str());
    }
    const auto h2 = verify_H2(nl, rate, H2Mode::Uniform, {0.5 * h3.min_dist});
    if (!h2.pass)
        throw PreconditionError("normal_form: (H2') fails (uniform admissibility or domination)");

    NormalFormResult result{nl, {}, {}, false, 0.0, std::numeric_limits<double>::infinity(),
                            0.0, false, "", ""};
    const int n = nl.block_count();
    Nonlinearity current = nl;
    for (int ord = 2; ord <= ell && !result.aborted; ++ord) {
        for (const auto& k : multi_indices(n, ord)) {
            for (int j = 0; j < n && !result.aborted; ++j) {
                try {
                    double sup = 0.0;
                    for (double t : opts.verify_times)
                        sup = std::max(sup, current.taylor_coeff(j, k, t).norm_estimate());
                    if (sup <= opts.elimination_threshold) continue;
                    auto res = eliminate_term(op, rate, current, spectrum, j, k, opts, true);
                    current = std::move(res.transformed);
                    result.domain_radius =
                        std::min(result.domain_radius, res.system->map().tubular_radius());
                    result.transcript.push_back(std::move(res.step));
                    result.systems.push_back(std::move(res.system));
                } catch (const PreconditionError& e) {
                    result.aborted = true;
                    result.abort_kind = "precondition";
                    result.abort_reason = e.what();
                } catch (const Error& e) {
                    result.aborted = true;
                    result.abort_kind = "numerical";
                    result.abort_reason = e.what();
                }
            }
        }
    }
    if (result.aborted) {
        result.final_nl = std::move(current);
        return result;
    }

    // Verify the sweep on the final field itself, not on its bookkeeping.
    auto field = [&current](double t, const Vector& x) { return current.eval(t, x); };
    const double domain =
        std::isfinite(result.domain_radius) ? result.domain_radius : 1.0;
    for (int ord = 2; ord <= ell; ++ord) {
        std::vector<double> radii = opts.stencil_radii;
        for (double& r : radii) r *= std::pow(opts.stencil_growth, std::max(0, ord - 2));
        radii = fit_radii_to_domain(std::move(radii), nl.dim(), domain);
        for (const auto& k : multi_indices(n, ord))
            for (int j = 0; j < n; ++j)
                for (double t : opts.verify_times) {
                    const auto est =
                        estimate_origin_coeff(field, nl.block_dims(), j, k, t, radii, domain);
                    result.max_coeff_norm =
                        std::max(result.max_coeff_norm, est.tensor.norm_estimate());
                }
    }
    result.verified = result.max_coeff_norm <= opts.elimination_threshold;
    result.final_nl = std::move(current);

    // The emitted psi~: final_nl carries scale * max(psi, 1); report the scale.
    for (double t : opts.verify_times)
        result.psi_tilde_scale = std::max(result.psi_tilde_scale,
                                          result.final_nl.psi()(t) / std::max(nl.psi()(t), 1.0));
    return result;
}

} // namespace mudich
