#include "mudich/homological.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mudich {

double fit_dichotomy_envelope(const EvolutionOperator& op, const GrowthRate& rate,
                              const std::vector<double>& a_hat, const std::vector<double>& b_hat,
                              double horizon_u, int nodes) {
    const int n = op.system().block_count();
    if (static_cast<int>(a_hat.size()) != n || static_cast<int>(b_hat.size()) != n)
        throw PreconditionError("fit_dichotomy_envelope: per-block shift count mismatch");
    std::vector<double> ts;
    for (int i = 0; i < nodes; ++i)
        ts.push_back(rate.inverse_log(-horizon_u + 2.0 * horizon_u * i / (nodes - 1)));

    double K = 1.0;
    for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < ts.size(); ++p)
            for (std::size_t q = 0; q < ts.size(); ++q) {
                if (p == q) continue;
                const double t = ts[p], s = ts[q];
                const double L = log_ratio(rate, t, s);
                const double norm = operator_norm(op.evolve_block(b, t, s));
                const double shift = t >= s ? b_hat[b] : a_hat[b];
                K = std::max(K, norm * std::exp(-shift * L));
            }
    }
    return K;
}

ConjugationMap::ConjugationMap(Pieces pieces) : pieces_(std::move(pieces)) {
    if (!pieces_.op) throw PreconditionError("conjugation map: null evolution operator");
    if (!pieces_.coeff) throw PreconditionError("conjugation map: null coefficient source");
    if (pieces_.verdict.status == ResonanceStatus::Resonant)
        throw PreconditionError("conjugation map: the (j,k) pair is resonant");
    if (!(pieces_.verdict.dist > 0.0))
        throw PreconditionError("conjugation map: dist must be positive");
    const int n = pieces_.op->system().block_count();
    if (static_cast<int>(pieces_.k.size()) != n)
        throw PreconditionError("conjugation map: multi-index length mismatch");
    if (pieces_.position < 0 || pieces_.position >= n)
        throw PreconditionError("conjugation map: position out of range");
    order_ = order_of(pieces_.k);
    if (order_ < 2)
        throw PreconditionError("conjugation map: |k| >= 2 required (|k| = 1 leaves the trumpet "
                                "exponent 1/(1-|k|) undefined)");
    if (!(pieces_.eps > 0.0) || pieces_.eps > dist() / (2.0 * (order_ + 1)) + 1e-12)
        throw PreconditionError(
            "conjugation map: eps must lie in (0, dist/(2(|k|+1))] to keep the dist/2 decay");
    k_factorial_ = factorial_of(pieces_.k);
    amp_ = std::pow(pieces_.K, order_ + 1) / k_factorial_;
    forward_ = pieces_.verdict.status == ResonanceStatus::LeftGap;
    time_invariant_ = pieces_.op->system().time_invariant();
    if (time_invariant_) {
        // A constant profile keeps the whole construction autonomous.
        const CoeffTensor c0 = pieces_.coeff(0.0);
        const CoeffTensor c1 = pieces_.coeff(0.7315);
        for (const auto& [beta, a] : c0.entries) {
            const auto it = c1.entries.find(beta);
            if (it == c1.entries.end() || (it->second - a).cwiseAbs().maxCoeff() > 1e-13)
                time_invariant_ = false;
        }
        if (c0.entries.size() != c1.entries.size()) time_invariant_ = false;
    }
}

namespace {

std::function<CoeffTensor(double)> coeff_of(const Nonlinearity& nl, int position, MultiIndex k) {
    return [nl, position, k](double s) { return nl.taylor_coeff(position, k, s); };
}

} // namespace

ConjugationMap::ConjugationMap(std::shared_ptr<const EvolutionOperator> op, const GrowthRate& rate,
                               const Nonlinearity& nl, const Spectrum& spectrum, int position,
                               MultiIndex k, HomologicalOptions opts)
    : ConjugationMap([&] {
          if (!op) throw PreconditionError("conjugation map: null evolution operator");
          const auto verdict = check_nonresonance(spectrum, position, k);
          if (verdict.status == ResonanceStatus::Resonant)
              throw PreconditionError("conjugation map: target (j,k) is resonant");
          const int ord = order_of(k);
          const double eps = verdict.dist / (2.0 * (ord + 1));
          std::vector<double> a_hat, b_hat;
          for (const auto& iv : spectrum.intervals) {
              a_hat.push_back(iv.lo - spectrum.tol - eps);
              b_hat.push_back(iv.hi + spectrum.tol + eps);
          }
          Pieces p;
          p.op = std::move(op);
          p.rate = rate;
          p.coeff = coeff_of(nl, position, k);
          p.psi = nl.psi();
          p.verdict = verdict;
          p.position = position;
          p.k = std::move(k);
          p.eps = eps;
          p.opts = opts;
          p.K = fit_dichotomy_envelope(*p.op, rate, a_hat, b_hat, opts.fit_horizon_u,
                                       opts.fit_nodes);
          return p;
      }()) {}

double ConjugationMap::integration_limit(double t) const {
    // Solve (mu(t)/mu(s*))^{dist/2} = tail_tol through the rate's inverse,
    // capped at |s*| <= horizon_cap.
    const double du = std::log(1.0 / pieces_.opts.tail_tol) / delta();
    const double u_star = pieces_.rate.log_value(t) + (forward_ ? du : -du);
    double s_star = pieces_.rate.inverse_log(u_star);
    s_star = std::clamp(s_star, -pieces_.opts.horizon_cap, pieces_.opts.horizon_cap);
    if (forward_ && s_star < t) s_star = t;
    if (!forward_ && s_star > t) s_star = t;
    return s_star;
}

Vector ConjugationMap::propagate(double s, double t, const Vector& x) const {
    const BlockSystem& sys = pieces_.op->system();
    Vector w = Vector::Zero(sys.dim());
    for (int i = 0; i < sys.block_count(); ++i) {
        if (pieces_.k[i] == 0) continue; // unused by the monomials
        w.segment(sys.block_offset(i), sys.block_dim(i)) =
            pieces_.op->evolve_block(i, s, t) * sys.block_of(x, i);
    }
    return w;
}

Vector ConjugationMap::integral(double t, const Vector& x, const Vector* dir) const {
    const BlockSystem& sys = pieces_.op->system();
    const int j = pieces_.position;
    const int dj = sys.block_dim(j);
    const double s_star = integration_limit(t);

    auto integrand = [&](double s) -> Vector {
        const CoeffTensor c = pieces_.coeff(s);
        const Vector w = propagate(s, t, x);
        Vector val;
        if (dir) {
            const Vector v = propagate(s, t, *dir);
            val = c.apply_jacobian(w, v);
        } else {
            val = c.apply(w);
        }
        return pieces_.op->evolve_block(j, t, s) * val;
    };
    auto vec_norm = [](const Vector& v) { return v.cwiseAbs().maxCoeff(); };

    Vector result = forward_ ? adaptive_integrate<Vector>(integrand, t, s_star, pieces_.opts.quad,
                                                          vec_norm, Vector::Zero(dj))
                             : Vector(-adaptive_integrate<Vector>(integrand, s_star, t,
                                                                  pieces_.opts.quad, vec_norm,
                                                                  Vector::Zero(dj)));

    // When the cap bit into the horizon, bound the dropped tail through the
    // zeta evaluator and refuse quietly wrong answers.
    if (std::abs(s_star) >= pieces_.opts.horizon_cap - 1e-9) {
        double prod = 1.0;
        for (int i = 0; i < sys.block_count(); ++i)
            prod *= std::pow(sys.block_of(x, i).norm(), pieces_.k[i]);
        const double mu_w = std::exp((forward_ ? delta() : -delta()) *
                                     pieces_.rate.log_value(t));
        const double tail_zeta = forward_
                                     ? zeta_plus(pieces_.psi, pieces_.rate, delta(), s_star)
                                     : zeta_minus(pieces_.psi, pieces_.rate, delta(), s_star);
        const double tail = amp_ * mu_w * tail_zeta * prod;
        const double budget =
            std::max(10.0 * pieces_.opts.quad.abs_tol,
                     pieces_.opts.tail_tol * (1.0 + result.cwiseAbs().maxCoeff()));
        if (tail > budget) {
            std::ostringstream os;
            os << "homological integral: horizon cap " << pieces_.opts.horizon_cap
               << " reached with tail bound " << tail << " (partial sum norm "
               << result.cwiseAbs().maxCoeff() << " at t = " << t << ")";
            throw NumericalError(os.str());
        }
    }
    return result;
}

Vector ConjugationMap::h_eval(double t, const Vector& x) const {
    const BlockSystem& sys = pieces_.op->system();
    Vector h = Vector::Zero(sys.dim());
    // The monomial [x_1]^{k_1}...[x_n]^{k_n} dies with any zero factor.
    for (int i = 0; i < sys.block_count(); ++i)
        if (pieces_.k[i] > 0 && sys.block_of(x, i).cwiseAbs().maxCoeff() == 0.0) return h;
    h.segment(sys.block_offset(pieces_.position), sys.block_dim(pieces_.position)) =
        integral(t, x, nullptr);
    return h;
}

double ConjugationMap::zeta(double t) const {
    const double w = delta() * pieces_.rate.log_value(t);
    return forward_ ? std::exp(w) * zeta_plus(pieces_.psi, pieces_.rate, delta(), t)
                    : std::exp(-w) * zeta_minus(pieces_.psi, pieces_.rate, delta(), t);
}

double ConjugationMap::h_bound(double t, const Vector& x) const {
    const BlockSystem& sys = pieces_.op->system();
    double prod = 1.0;
    for (int i = 0; i < sys.block_count(); ++i)
        prod *= std::pow(sys.block_of(x, i).norm(), pieces_.k[i]);
    if (prod == 0.0) return 0.0;
    return amp_ * zeta(t) * prod;
}

Vector ConjugationMap::d2h_eval(double t, const Vector& x, const Vector& dir) const {
    const BlockSystem& sys = pieces_.op->system();
    Vector out = Vector::Zero(sys.dim());
    out.segment(sys.block_offset(pieces_.position), sys.block_dim(pieces_.position)) =
        integral(t, x, &dir);
    return out;
}

Vector ConjugationMap::d1h_eval(double t, const Vector& x) const {
    const BlockSystem& sys = pieces_.op->system();
    const int j = pieces_.position;
    const Vector hj = integral(t, x, nullptr);
    const Vector ax = sys.at(t) * x;
    const Vector d2_ax = integral(t, x, &ax);
    const Vector ck = pieces_.coeff(t).apply(x);

    Vector out = Vector::Zero(sys.dim());
    out.segment(sys.block_offset(j), sys.block_dim(j)) =
        -ck + sys.block_at(j, t) * hj - d2_ax;
    return out;
}

double ConjugationMap::trumpet_radius(double t) const {
    const double z = zeta(t);
    if (z <= 0.0) return std::numeric_limits<double>::infinity();
    const int n = pieces_.op->system().block_count();
    const double base = 2.0 * std::pow(pieces_.K, order_ + 1) * n * z;
    return std::pow(base, 1.0 / (1.0 - order_));
}

double ConjugationMap::zeta_sup() const {
    std::lock_guard<std::mutex> lock(sup_mutex_);
    if (!zeta_sup_cache_) {
        // Certify stabilization first; a growing sup must not silently
        // truncate into a finite M.
        (void)check_uniform_admissibility(pieces_.psi, pieces_.rate, delta(),
                                          admissibility_grid(pieces_.rate));
        double m = 0.0;
        for (double t : admissibility_grid(pieces_.rate)) m = std::max(m, zeta(t));
        zeta_sup_cache_ = m;
    }
    return *zeta_sup_cache_;
}

double ConjugationMap::tubular_radius() const {
    const double m = zeta_sup();
    if (m <= 0.0) return 0.5; // psi == 0: h vanishes, only the 1/2 cap binds
    const int n = pieces_.op->system().block_count();
    const double kpow = std::pow(pieces_.K, order_ + 1);
    const double inv_order = 1.0 / (order_ - 1);
    const double r1 = std::pow(k_factorial_ / (kpow * m), inv_order);
    const double r2 = 0.5 * std::pow(1.0 / (n * kpow * m), inv_order);
    return std::min({0.5, r1, r2});
}

Vector ConjugationMap::H_eval(double t, const Vector& x) const {
    return x + h_eval(t, x);
}

bool ConjugationMap::in_trumpet(double t, const Vector& x) const {
    return x.norm() <= trumpet_radius(t);
}

Vector ConjugationMap::H_inverse(double t, const Vector& y, InverseStats* stats) const {
    const double xi = trumpet_radius(t);
    // The iteration cannot settle below the quadrature noise of h itself.
    const double tol = std::max(pieces_.opts.inverse_tol,
                                4.0 * (pieces_.opts.quad.abs_tol +
                                       pieces_.opts.quad.rel_tol * y.norm()));
    Vector x = y;
    double prev_step = -1.0;
    double contraction = 0.0;
    for (int it = 1; it <= pieces_.opts.inverse_max_iter; ++it) {
        const Vector next = y - h_eval(t, x);
        if (next.norm() > xi * (1.0 + 1e-9)) {
            std::ostringstream os;
            os << "H_inverse: iterate escaped the trumpet (|x| = " << next.norm()
               << " > xi(t) = " << xi << " at t = " << t << ")";
            throw DomainError(os.str());
        }
        const double step = (next - x).norm();
        // Contraction ratios are meaningful only well above the noise floor.
        if (prev_step > 100.0 * tol && step > 0.0)
            contraction = std::max(contraction, step / prev_step);
        x = next;
        if (step < tol) {
            if (stats) {
                stats->iterations = it;
                stats->contraction = contraction;
            }
            return x;
        }
        prev_step = step;
    }
    std::ostringstream os;
    os << "H_inverse: no convergence in " << pieces_.opts.inverse_max_iter
       << " iterations at t = " << t << ", |y| = " << y.norm();
    throw NumericalError(os.str());
}

} // namespace mudich
