#pragma once

#include "mudich/growth_rate.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mudich {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spectral (largest-singular-value) norm.
[[nodiscard]] double operator_norm(const Matrix& m);

enum class CoefficientKind { Constant, PiecewiseConstant, Smooth };

/// One diagonal block of t -> A(t).
struct BlockCoefficient {
    CoefficientKind kind = CoefficientKind::Constant;
    Matrix constant;
    std::vector<double> breakpoints;          // sorted; value at a breakpoint is the right limit
    std::vector<Matrix> pieces;               // breakpoints.size() + 1 entries
    std::function<Matrix(double)> smooth;
    std::vector<double> smooth_breakpoints;   // integrator splits here (kinks of shifted piecewise systems)
    std::string label;

    [[nodiscard]] int dim() const;
    [[nodiscard]] Matrix at(double t) const;

    [[nodiscard]] static BlockCoefficient constant_block(Matrix a, std::string label = "");
    [[nodiscard]] static BlockCoefficient piecewise_block(std::vector<double> breakpoints,
                                                          std::vector<Matrix> pieces,
                                                          std::string label = "");
    [[nodiscard]] static BlockCoefficient smooth_block(std::function<Matrix(double)> a, int dim,
                                                       std::string label = "",
                                                       std::vector<double> kinks = {});

private:
    int dim_ = 0;
};

/// Block-diagonal linear system x' = A(t) x with A = diag(A_1, ..., A_n).
class BlockSystem {
public:
    explicit BlockSystem(std::vector<BlockCoefficient> blocks);

    [[nodiscard]] int block_count() const noexcept { return static_cast<int>(blocks_.size()); }
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] int block_dim(int i) const { return blocks_.at(i).dim(); }
    [[nodiscard]] int block_offset(int i) const { return offsets_.at(i); }
    [[nodiscard]] const BlockCoefficient& block(int i) const { return blocks_.at(i); }

    /// A_i(t).
    [[nodiscard]] Matrix block_at(int i, double t) const { return blocks_.at(i).at(t); }
    /// Full A(t); off-block entries are exact zeros.
    [[nodiscard]] Matrix at(double t) const;

    /// True when every block is a constant matrix, so the flow depends on
    /// t - s only. Downstream coefficient estimators exploit this.
    [[nodiscard]] bool time_invariant() const noexcept { return time_invariant_; }

    [[nodiscard]] Vector block_of(const Vector& x, int i) const;

private:
    std::vector<BlockCoefficient> blocks_;
    std::vector<int> offsets_;
    int dim_ = 0;
    bool time_invariant_ = false;
};

/// The gamma-shifted system A(t) - gamma * mu'(t)/mu(t) * Id. For the
/// exponential rate the shift is constant and the coefficient kind is
/// preserved; otherwise blocks become smooth callables.
[[nodiscard]] BlockSystem shifted(const BlockSystem& system, const GrowthRate& rate, double gamma);

struct IntegratorOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
};

/// Evolution operator Phi(t, s) of a block system, with per-block
/// fundamental-matrix checkpoints at integer grid times. The checkpoint
/// cache fills lazily behind a mutex; callers see a const interface.
class EvolutionOperator {
public:
    explicit EvolutionOperator(std::shared_ptr<const BlockSystem> system,
                               IntegratorOptions opts = {});

    [[nodiscard]] const BlockSystem& system() const noexcept { return *system_; }
    [[nodiscard]] std::shared_ptr<const BlockSystem> system_ptr() const noexcept { return system_; }
    [[nodiscard]] const IntegratorOptions& options() const noexcept { return opts_; }

    /// Phi(t, s), block diagonal by construction.
    [[nodiscard]] Matrix evolve(double t, double s) const;
    /// Phi_i(t, s).
    [[nodiscard]] Matrix evolve_block(int i, double t, double s) const;
    /// Phi(t, s) x, assembled per block.
    [[nodiscard]] Vector apply(double t, double s, const Vector& x) const;

private:
    [[nodiscard]] Matrix piecewise_transition(int i, double t, double s) const;
    [[nodiscard]] Matrix smooth_transition(int i, double t, double s) const;
    [[nodiscard]] Matrix integrate_block(int i, double s, double t) const;
    [[nodiscard]] Matrix unit_step(int i, long long cell) const;

    std::shared_ptr<const BlockSystem> system_;
    IntegratorOptions opts_;
    mutable std::mutex cache_mutex_;
    mutable std::vector<std::unordered_map<long long, Matrix>> unit_cache_;
    static constexpr double cache_span_ = 64.0;
};

/// Result of a mu,epsilon-bounded-growth fit:
/// log||Phi(t,s)|| <= log K + a*|log mu(t)-log mu(s)| + eps*|log mu(s)|.
struct GrowthFit {
    double K = 1.0;
    double a = 0.0;
    double epsilon = 0.0;
    bool admits = false;
    double slack = 0.0; // slope drift between far and near pair scales
};

/// Least-squares envelope fit of the bounded-growth inequality over the
/// sampled (t, s) pairs. `admits` requires the envelope slope to be stable
/// between the near and far halves of the pair set (drift <= fit_tol) and
/// the fitted epsilon to stay below eps_max.
[[nodiscard]] GrowthFit fit_bounded_growth(const EvolutionOperator& op, const GrowthRate& rate,
                                           const std::vector<std::pair<double, double>>& pairs,
                                           double fit_tol = 0.25, double eps_max = 1.0);

/// Default (t, s) pair grid: m nodes uniform in log mu over [-U, U],
/// all ordered pairs.
[[nodiscard]] std::vector<std::pair<double, double>> growth_fit_pairs(const GrowthRate& rate,
                                                                      double horizon_u = 10.0,
                                                                      int nodes = 9);

} // namespace mudich
