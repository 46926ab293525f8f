#pragma once

#include "mudich/dichotomy.hpp"

#include <cstdint>
#include <vector>

namespace mudich {

/// Compact interval with the componentwise algebra [a,b]+[c,d] = [a+c,b+d],
/// gamma*[a,b] = [gamma a, gamma b].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

[[nodiscard]] inline Interval operator+(Interval a, Interval b) {
    return {a.lo + b.lo, a.hi + b.hi};
}

[[nodiscard]] inline Interval operator*(double gamma, Interval a) {
    return gamma >= 0.0 ? Interval{gamma * a.lo, gamma * a.hi}
                        : Interval{gamma * a.hi, gamma * a.lo};
}

/// Multi index k = (k_1, ..., k_n) over the spectral blocks.
using MultiIndex = std::vector<int>;

[[nodiscard]] int order_of(const MultiIndex& k);        ///< |k|
[[nodiscard]] double factorial_of(const MultiIndex& k); ///< k! = k_1! ... k_n!

/// All multi indices of a given order over n slots, graded-lex order.
[[nodiscard]] std::vector<MultiIndex> multi_indices(int n, int order);

enum class ResonanceStatus { LeftGap, RightGap, Resonant };

[[nodiscard]] const char* to_string(ResonanceStatus s);

/// LeftGap: a_j > sum k_i b_i (the weighted sum lies left of lambda_j).
/// RightGap: b_j < sum k_i a_i. dist is the applicable positive gap.
struct ResonanceVerdict {
    ResonanceStatus status = ResonanceStatus::Resonant;
    double dist = 0.0;
};

/// [sum k_i a_i, sum k_i b_i].
[[nodiscard]] Interval weighted_sum(const Spectrum& spectrum, const MultiIndex& k);

/// The k-th condition of nonresonance on position j (0-based block index).
/// Spectral intervals are inflated by the spectrum's computation tolerance
/// before the comparison, so a pass survives endpoint uncertainty.
[[nodiscard]] ResonanceVerdict check_nonresonance(const Spectrum& spectrum, int position,
                                                  const MultiIndex& k);

struct H3Violation {
    int position = 0;
    MultiIndex k;
};

struct H3Report {
    bool pass = false;
    std::vector<H3Violation> violations;
    double min_dist = 0.0;        ///< over all passing pairs
    std::int64_t pairs_checked = 0;
};

/// Sweep all multi indices with 2 <= |k| <= ell and every position
/// (graded-lex in k, inner loop over positions). Throws BudgetError when
/// the pair count would exceed the cap.
[[nodiscard]] H3Report check_H3(const Spectrum& spectrum, int ell,
                                std::int64_t pair_budget = 1000000);

} // namespace mudich
