#pragma once

#include "mudich/admissibility.hpp"
#include "mudich/linear_flow.hpp"
#include "mudich/resonance.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mudich {

/// Coefficient tensor of the (j, k) Taylor term: the symmetric multilinear
/// map D2^k F_j(t,0)/k!. Stored through the coordinate monomials of the
/// homogeneous polynomial it induces; entry key beta is a coordinate
/// exponent over all d coordinates whose per-block degree sums match k.
struct CoeffTensor {
    int position = 0; ///< j, 0-based block index of the output
    MultiIndex k;     ///< block multi-index
    int in_dim = 0;   ///< d
    int out_dim = 0;  ///< d_j
    std::map<std::vector<int>, Vector> entries;

    /// Monomial evaluation P(w) = sum_beta a_beta w^beta.
    [[nodiscard]] Vector apply(const Vector& w) const;
    /// Directional derivative DP(w) . dir; one multilinear slot replaced.
    [[nodiscard]] Vector apply_jacobian(const Vector& w, const Vector& dir) const;
    /// sup over unit vectors of |P(v)|, estimated by seeded random sampling
    /// (injective norm of the normalized tensor).
    [[nodiscard]] double norm_estimate(std::uint64_t seed = 17, int samples = 200) const;

    [[nodiscard]] bool is_zero(double tol = 0.0) const;
    [[nodiscard]] CoeffTensor scaled(double factor) const;

    void insert(std::vector<int> beta, Vector value); ///< validates the block signature
    [[nodiscard]] static CoeffTensor zero(int position, MultiIndex k,
                                          const std::vector<int>& block_dims);
};

/// The multilinear form applied to [x_1]^{k_1} ... [x_n]^{k_n}, one vector
/// per block used with multiplicity k_i.
[[nodiscard]] Vector taylor_tensor_apply(const CoeffTensor& tensor,
                                         const std::vector<Vector>& block_vectors,
                                         const std::vector<int>& block_dims);

/// One (j, k) term of the perturbation: profile(t) * base tensor.
struct NonlinearTerm {
    CoeffTensor base;
    std::function<double(double)> profile; ///< null means identically 1
    std::string profile_name = "const";
    bool profile_constant = true;
};

/// The perturbation F of x' = A(t)x + F(t,x): componentwise F_i into block
/// i, F(t,0) = D2 F(t,0) = 0, queryable Taylor data at the origin and a
/// dominating psi. Immutable; taylor/eval may be closures of a transformed
/// field (after an elimination step).
class Nonlinearity {
public:
    using EvalFn = std::function<Vector(double, const Vector&)>;
    using TaylorFn = std::function<CoeffTensor(int, const MultiIndex&, double)>;

    [[nodiscard]] static Nonlinearity from_terms(std::vector<int> block_dims, int order,
                                                 std::vector<NonlinearTerm> terms,
                                                 AdmissibleCandidate psi,
                                                 EvalFn remainder = nullptr);
    [[nodiscard]] static Nonlinearity custom(std::vector<int> block_dims, int order, EvalFn eval,
                                             TaylorFn taylor, AdmissibleCandidate psi,
                                             bool time_invariant);

    [[nodiscard]] Vector eval(double t, const Vector& x) const { return eval_(t, x); }
    [[nodiscard]] Vector eval_block(double t, const Vector& x, int position) const;
    [[nodiscard]] CoeffTensor taylor_coeff(int position, const MultiIndex& k, double t) const;

    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] const AdmissibleCandidate& psi() const noexcept { return psi_; }
    [[nodiscard]] const std::vector<int>& block_dims() const noexcept { return dims_; }
    [[nodiscard]] int block_count() const noexcept { return static_cast<int>(dims_.size()); }
    [[nodiscard]] int block_offset(int i) const { return offsets_.at(i); }
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] bool time_invariant() const noexcept { return time_invariant_; }

private:
    Nonlinearity() = default;

    std::vector<int> dims_, offsets_;
    int dim_ = 0;
    int order_ = 2;
    AdmissibleCandidate psi_;
    EvalFn eval_;
    TaylorFn taylor_;
    bool time_invariant_ = false;
};

enum class H2Mode { Admissible, Uniform };

struct H2Violation {
    int order = 0;
    double t = 0.0;
    double derivative_norm = 0.0;
    double psi_value = 0.0;
};

struct H2Report {
    bool pass = false;
    std::vector<H2Violation> violations;
    std::map<double, double> zeta_values;        ///< delta -> zeta^+(0) + zeta^-(0)
    std::optional<UniformAdmissibility> uniform; ///< set in uniform mode
    double origin_residual = 0.0;                ///< max |F(t,0)|, |D2 F(t,0)| sampled
};

/// Check ||D2^m F(t,0)|| <= psi(t) for m = 2..ell on the grid (injective
/// norms by seeded sampling), then the admissibility of psi for each
/// requested delta (the deltas actually used downstream). Uniform mode
/// additionally runs check_uniform_admissibility.
[[nodiscard]] H2Report verify_H2(const Nonlinearity& nl, const GrowthRate& rate, H2Mode mode,
                                 const std::vector<double>& deltas = {1.0},
                                 const std::vector<double>& t_grid = {},
                                 std::uint64_t seed = 17);

} // namespace mudich
