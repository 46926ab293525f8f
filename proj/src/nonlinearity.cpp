#include "mudich/nonlinearity.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

namespace mudich {

namespace {

double monomial(const Vector& w, const std::vector<int>& beta) {
    double v = 1.0;
    for (std::size_t c = 0; c < beta.size(); ++c)
        for (int p = 0; p < beta[c]; ++p) v *= w(static_cast<Eigen::Index>(c));
    return v;
}

} // namespace

Vector CoeffTensor::apply(const Vector& w) const {
    if (w.size() != in_dim) throw PreconditionError("tensor apply: dimension mismatch");
    Vector out = Vector::Zero(out_dim);
    for (const auto& [beta, a] : entries) out += monomial(w, beta) * a;
    return out;
}

Vector CoeffTensor::apply_jacobian(const Vector& w, const Vector& dir) const {
    if (w.size() != in_dim || dir.size() != in_dim)
        throw PreconditionError("tensor apply_jacobian: dimension mismatch");
    Vector out = Vector::Zero(out_dim);
    for (const auto& [beta, a] : entries) {
        for (std::size_t c = 0; c < beta.size(); ++c) {
            if (beta[c] == 0) continue;
            std::vector<int> reduced = beta;
            --reduced[c];
            out += beta[c] * monomial(w, reduced) * dir(static_cast<Eigen::Index>(c)) * a;
        }
    }
    return out;
}

double CoeffTensor::norm_estimate(std::uint64_t seed, int samples) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double best = 0.0;
    for (int it = 0; it < samples; ++it) {
        Vector v(in_dim);
        for (int c = 0; c < in_dim; ++c) v(c) = gauss(rng);
        const double n = v.norm();
        if (n < 1e-12) continue;
        v /= n;
        best = std::max(best, apply(v).norm());
    }
    return best;
}

bool CoeffTensor::is_zero(double tol) const {
    for (const auto& [beta, a] : entries)
        if (a.cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

CoeffTensor CoeffTensor::scaled(double factor) const {
    CoeffTensor out = *this;
    for (auto& [beta, a] : out.entries) a *= factor;
    return out;
}

void CoeffTensor::insert(std::vector<int> beta, Vector value) {
    if (static_cast<int>(beta.size()) != in_dim)
        throw PreconditionError("tensor insert: exponent length must equal the dimension");
    if (value.size() != out_dim)
        throw PreconditionError("tensor insert: value must live in the output block");
    auto it = entries.find(beta);
    if (it != entries.end())
        it->second += value;
    else
        entries.emplace(std::move(beta), std::move(value));
}

CoeffTensor CoeffTensor::zero(int position, MultiIndex k, const std::vector<int>& block_dims) {
    if (position < 0 || position >= static_cast<int>(block_dims.size()))
        throw PreconditionError("tensor: position out of range");
    if (k.size() != block_dims.size())
        throw PreconditionError("tensor: multi-index length mismatch");
    CoeffTensor t;
    t.position = position;
    t.k = std::move(k);
    t.out_dim = block_dims[position];
    t.in_dim = 0;
    for (int d : block_dims) t.in_dim += d;
    return t;
}

Vector taylor_tensor_apply(const CoeffTensor& tensor, const std::vector<Vector>& block_vectors,
                           const std::vector<int>& block_dims) {
    if (block_vectors.size() != block_dims.size() || tensor.k.size() != block_dims.size())
        throw PreconditionError("taylor_tensor_apply: block multiplicities do not match k");
    Vector w = Vector::Zero(tensor.in_dim);
    int off = 0;
    for (std::size_t i = 0; i < block_dims.size(); ++i) {
        if (tensor.k[i] > 0) {
            if (block_vectors[i].size() != block_dims[i])
                throw PreconditionError("taylor_tensor_apply: block vector dimension mismatch");
            w.segment(off, block_dims[i]) = block_vectors[i];
        }
        off += block_dims[i];
    }
    return tensor.apply(w);
}

// ---------------------------------------------------------------------------
// Nonlinearity
// ---------------------------------------------------------------------------

namespace {

void validate_tensor_signature(const CoeffTensor& t, const std::vector<int>& dims) {
    if (order_of(t.k) < 2)
        throw PreconditionError("nonlinearity term: Taylor order must be >= 2 (F(t,0) = D2F(t,0) = 0)");
    for (const auto& [beta, a] : t.entries) {
        int off = 0;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            int deg = 0;
            for (int c = 0; c < dims[i]; ++c) deg += beta[off + c];
            if (deg != t.k[i])
                throw PreconditionError(
                    "nonlinearity term: monomial exponent does not match the block multi-index");
            off += dims[i];
        }
        (void)a;
    }
}

} // namespace

Nonlinearity Nonlinearity::from_terms(std::vector<int> block_dims, int order,
                                      std::vector<NonlinearTerm> terms, AdmissibleCandidate psi,
                                      EvalFn remainder) {
    Nonlinearity nl;
    nl.dims_ = std::move(block_dims);
    for (int d : nl.dims_) {
        nl.offsets_.push_back(nl.dim_);
        nl.dim_ += d;
    }
    nl.order_ = order;
    nl.psi_ = std::move(psi);
    nl.time_invariant_ = !remainder;
    for (auto& term : terms) {
        validate_tensor_signature(term.base, nl.dims_);
        if (order_of(term.base.k) > order)
            throw PreconditionError("nonlinearity term: order exceeds the declared ell");
        if (!term.profile) {
            term.profile = [](double) { return 1.0; };
            term.profile_constant = true;
        }
        nl.time_invariant_ = nl.time_invariant_ && term.profile_constant;
    }

    auto dims = nl.dims_;
    auto offsets = nl.offsets_;
    const int dim = nl.dim_;
    auto shared_terms = std::make_shared<std::vector<NonlinearTerm>>(std::move(terms));

    nl.eval_ = [shared_terms, offsets, dim, remainder](double t, const Vector& x) {
        if (x.size() != dim) throw PreconditionError("nonlinearity eval: dimension mismatch");
        Vector out = Vector::Zero(dim);
        for (const auto& term : *shared_terms)
            out.segment(offsets[term.base.position], term.base.out_dim) +=
                term.profile(t) * term.base.apply(x);
        if (remainder) out += remainder(t, x);
        return out;
    };
    nl.taylor_ = [shared_terms, dims](int position, const MultiIndex& k, double t) {
        CoeffTensor acc = CoeffTensor::zero(position, k, dims);
        for (const auto& term : *shared_terms) {
            if (term.base.position != position || term.base.k != k) continue;
            const double p = term.profile(t);
            for (const auto& [beta, a] : term.base.entries) acc.insert(beta, p * a);
        }
        return acc;
    };
    return nl;
}

Nonlinearity Nonlinearity::custom(std::vector<int> block_dims, int order, EvalFn eval,
                                  TaylorFn taylor, AdmissibleCandidate psi, bool time_invariant) {
    if (!eval || !taylor) throw PreconditionError("nonlinearity: null eval/taylor");
    Nonlinearity nl;
    nl.dims_ = std::move(block_dims);
    for (int d : nl.dims_) {
        nl.offsets_.push_back(nl.dim_);
        nl.dim_ += d;
    }
    nl.order_ = order;
    nl.psi_ = std::move(psi);
    nl.eval_ = std::move(eval);
    nl.taylor_ = std::move(taylor);
    nl.time_invariant_ = time_invariant;
    return nl;
}

Vector Nonlinearity::eval_block(double t, const Vector& x, int position) const {
    return eval_(t, x).segment(offsets_.at(position), dims_.at(position));
}

CoeffTensor Nonlinearity::taylor_coeff(int position, const MultiIndex& k, double t) const {
    if (position < 0 || position >= block_count())
        throw PreconditionError("taylor_coeff: position out of range");
    if (static_cast<int>(k.size()) != block_count())
        throw PreconditionError("taylor_coeff: multi-index length mismatch");
    return taylor_(position, k, t);
}

// ---------------------------------------------------------------------------
// (H2) / (H2')
// ---------------------------------------------------------------------------

H2Report verify_H2(const Nonlinearity& nl, const GrowthRate& rate, H2Mode mode,
                   const std::vector<double>& deltas, const std::vector<double>& t_grid,
                   std::uint64_t seed) {
    std::vector<double> grid = t_grid;
    if (grid.empty()) grid = admissibility_grid(rate, 10.0, 41);

    H2Report report;
    const int d = nl.dim();

    // F(t,0) = 0 and D2 F(t,0) = 0, sampled by central differences.
    for (double t : {grid.front(), 0.0, grid.back()}) {
        report.origin_residual =
            std::max(report.origin_residual, nl.eval(t, Vector::Zero(d)).norm());
        const double h = 1e-6;
        for (int c = 0; c < d; ++c) {
            Vector e = Vector::Zero(d);
            e(c) = h;
            const double fd = (nl.eval(t, e) - nl.eval(t, -e)).norm() / (2.0 * h);
            report.origin_residual = std::max(report.origin_residual, fd);
        }
    }

    // ||D2^m F(t,0)|| = m! * sup_{|v|=1} |H_m(t, v)| with H_m the degree-m
    // Taylor part, sampled over seeded unit directions.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Vector> dirs(200);
    for (auto& v : dirs) {
        v.resize(d);
        for (int c = 0; c < d; ++c) v(c) = gauss(rng);
        const double n = v.norm();
        if (n > 1e-12) v /= n;
    }

    const int n = nl.block_count();
    for (int m = 2; m <= nl.order(); ++m) {
        double mfact = 1.0;
        for (int q = 2; q <= m; ++q) mfact *= q;
        const auto ks = multi_indices(n, m);
        for (double t : grid) {
            std::vector<CoeffTensor> tensors;
            for (int j = 0; j < n; ++j)
                for (const auto& k : ks) {
                    auto c = nl.taylor_coeff(j, k, t);
                    if (!c.is_zero()) tensors.push_back(std::move(c));
                }
            if (tensors.empty()) continue;
            double sup = 0.0;
            for (const auto& v : dirs) {
                Vector val = Vector::Zero(d);
                for (const auto& c : tensors)
                    val.segment(nl.block_offset(c.position), c.out_dim) += c.apply(v);
                sup = std::max(sup, val.norm());
            }
            const double derivative_norm = mfact * sup;
            const double bound = nl.psi()(t);
            if (derivative_norm > bound * (1.0 + 1e-9) + 1e-12)
                report.violations.push_back({m, t, derivative_norm, bound});
        }
    }

    for (double delta : deltas) {
        const double z =
            zeta_plus(nl.psi(), rate, delta, 0.0) + zeta_minus(nl.psi(), rate, delta, 0.0);
        report.zeta_values[delta] = z;
    }
    if (mode == H2Mode::Uniform) {
        const double delta = deltas.empty() ? 1.0 : deltas.front();
        report.uniform = check_uniform_admissibility(nl.psi(), rate, delta,
                                                     admissibility_grid(rate));
    }

    report.pass = report.violations.empty() && report.origin_residual <= 1e-5 &&
                  (!report.uniform || report.uniform->uniform);
    return report;
}

} // namespace mudich
