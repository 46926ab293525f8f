#include "mudich/resonance.hpp"

#include "mudich/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace mudich {

int order_of(const MultiIndex& k) {
    return std::accumulate(k.begin(), k.end(), 0);
}

double factorial_of(const MultiIndex& k) {
    double f = 1.0;
    for (int ki : k)
        for (int m = 2; m <= ki; ++m) f *= m;
    return f;
}

std::vector<MultiIndex> multi_indices(int n, int order) {
    std::vector<MultiIndex> out;
    MultiIndex k(n, 0);
    // Lexicographically descending in the leading slots: (m,0,...),
    // (m-1,1,0,...), ..., (0,...,0,m).
    std::function<void(int, int)> fill = [&](int slot, int remaining) {
        if (slot == n - 1) {
            k[slot] = remaining;
            out.push_back(k);
            return;
        }
        for (int v = remaining; v >= 0; --v) {
            k[slot] = v;
            fill(slot + 1, remaining - v);
        }
    };
    if (n > 0 && order >= 0) fill(0, order);
    return out;
}

const char* to_string(ResonanceStatus s) {
    switch (s) {
        case ResonanceStatus::LeftGap: return "LeftGap";
        case ResonanceStatus::RightGap: return "RightGap";
        case ResonanceStatus::Resonant: return "Resonant";
    }
    return "?";
}

Interval weighted_sum(const Spectrum& spectrum, const MultiIndex& k) {
    if (static_cast<int>(k.size()) != spectrum.count())
        throw PreconditionError("weighted_sum: multi-index length must match the interval count");
    Interval sum{0.0, 0.0};
    for (int i = 0; i < spectrum.count(); ++i)
        sum = sum + k[i] * Interval{spectrum.intervals[i].lo, spectrum.intervals[i].hi};
    return sum;
}

ResonanceVerdict check_nonresonance(const Spectrum& spectrum, int position, const MultiIndex& k) {
    if (static_cast<int>(k.size()) != spectrum.count())
        throw PreconditionError("check_nonresonance: multi-index length mismatch");
    if (position < 0 || position >= spectrum.count())
        throw PreconditionError("check_nonresonance: position out of range");
    const int order = order_of(k);
    if (order < 2)
        throw PreconditionError("check_nonresonance: the condition is posed for |k| >= 2");

    // Inflate by the computation tolerance so the verdict survives the
    // endpoint uncertainty of a computed spectrum.
    const double tol = spectrum.tol;
    auto inflated = [&](int i) {
        return Interval{spectrum.intervals[i].lo - tol, spectrum.intervals[i].hi + tol};
    };
    Interval sum{0.0, 0.0};
    for (int i = 0; i < spectrum.count(); ++i) sum = sum + k[i] * inflated(i);
    const Interval lambda = inflated(position);

    ResonanceVerdict verdict;
    if (lambda.lo > sum.hi) {
        verdict.status = ResonanceStatus::LeftGap;
        verdict.dist = lambda.lo - sum.hi;
    } else if (lambda.hi < sum.lo) {
        verdict.status = ResonanceStatus::RightGap;
        verdict.dist = sum.lo - lambda.hi;
    } else {
        verdict.status = ResonanceStatus::Resonant;
        verdict.dist = 0.0;
    }
    return verdict;
}

H3Report check_H3(const Spectrum& spectrum, int ell, std::int64_t pair_budget) {
    if (ell < 2) throw PreconditionError("check_H3: ell must be >= 2");
    const int n = spectrum.count();
    if (n < 1) throw PreconditionError("check_H3: empty spectrum");

    // Pair count: n * sum_{m=2..ell} C(m+n-1, n-1).
    std::int64_t pairs = 0;
    for (int m = 2; m <= ell; ++m) {
        double comb = 1.0;
        for (int i = 1; i <= n - 1; ++i) comb *= static_cast<double>(m + i) / i;
        pairs += static_cast<std::int64_t>(std::llround(comb)) * n;
        if (pairs > pair_budget) {
            std::ostringstream os;
            os << "check_H3: enumeration of " << pairs << "+ pairs exceeds the budget "
               << pair_budget << " (n = " << n << ", ell = " << ell << ")";
            throw BudgetError(os.str());
        }
    }

    H3Report report;
    report.min_dist = std::numeric_limits<double>::infinity();
    for (int m = 2; m <= ell; ++m) {
        for (const MultiIndex& k : multi_indices(n, m)) {
            for (int j = 0; j < n; ++j) {
                ++report.pairs_checked;
                const auto verdict = check_nonresonance(spectrum, j, k);
                if (verdict.status == ResonanceStatus::Resonant)
                    report.violations.push_back({j, k});
                else
                    report.min_dist = std::min(report.min_dist, verdict.dist);
            }
        }
    }
    report.pass = report.violations.empty();
    if (!std::isfinite(report.min_dist)) report.min_dist = 0.0;
    return report;
}

} // namespace mudich
