#pragma once

#include <utility>

#include "ratefit/solver.hpp"
#include "ratefit/strata.hpp"

namespace ratefit {

/// Conditioning margin of one 2x2 table: total successes with fixed row
/// totals. The conditional law of n11 is noncentral hypergeometric on
/// [max(0, s - N2), min(s, N1)].
struct HypergeometricMargin {
    std::int64_t s;
    std::int64_t n1;
    std::int64_t n2;

    HypergeometricMargin(std::int64_t successes, std::int64_t row1, std::int64_t row2);
    static HypergeometricMargin of(const StratumTable& table) {
        return {table.successes(), table.row1_total(), table.row2_total()};
    }

    std::int64_t support_min() const { return std::max<std::int64_t>(0, s - n2); }
    std::int64_t support_max() const { return std::min(s, n1); }
    bool degenerate() const { return support_min() == support_max(); }
};

struct NchtMoments {
    double mean;
    double variance;
};

/// Mean and variance of the noncentral hypergeometric law with odds ratio
/// psi, computed by log-space enumeration over the support.
NchtMoments ncht_moments(const HypergeometricMargin& margin, double psi);

/// Maximum conditional likelihood estimation: solves the conditional score
/// equation by damped Newton on the concave conditional log-likelihood.
/// cov_model_based is the inverse conditional information; no model-robust
/// covariance is provided.
FitResult fit_conditional(const StratifiedDataset& ds, const SolverConfig& solver = SolverConfig());

}  // namespace ratefit
