#pragma once

#include "ratefit/solver.hpp"
#include "ratefit/strata.hpp"

namespace ratefit {

enum class RatioVarianceKind {
    RobustCorrected,       // finite-sample-corrected per-stratum variance
    ModelBased,            // unbiased-at-the-model component
    PooledNull,            // pooled variance at the null (log-rank use)
    LegacyInverseHessian,  // inverse negative Hessian only, for comparison
};

/// Per-stratum weight q_j = N1 N2 / (N1 phi + N2).
double q_weight(const StratumTable& table, double phi);

/// Per-stratum scalar variance component at probability ratio phi.
/// RobustCorrected requires both row totals >= 2. LegacyInverseHessian has no
/// per-stratum component and is rejected here.
double v_component(RatioVarianceKind kind, const StratumTable& table, double phi);

/// True sampling variance of (p11_hat - phi p21_hat).
double v_true(const StratumTable& table, double p11, double p21, double phi);

/// Score contribution of one stratum, the ratio form
/// (n11 N2 - phi n21 N1) / (N1 phi + N2).
double ratio_score_term(const StratumTable& table, double phi);
/// Same score written as the success-allocation residual
/// n11 - (n11 + n21) N1 phi / (N1 phi + N2); agrees algebraically.
double ratio_score_term_alt(const StratumTable& table, double phi);

/// Breslow-Peto point estimation: maximizes the pseudo-likelihood whose score
/// is the weighted probability-ratio estimating function. cov_model_based uses
/// the ModelBased component, cov_model_robust the RobustCorrected one (falling
/// back to the uncorrected sample-proportion form when a row total is < 2).
FitResult fit_ratio(const StratifiedDataset& ds, const SolverConfig& solver = SolverConfig());

/// Sandwich covariance for the fitted ratio coefficients; for
/// LegacyInverseHessian, the plain inverse negative Hessian.
Matrix cov_ratio(const StratifiedDataset& ds, const Vector& gamma, RatioVarianceKind kind);

struct LogRankResult {
    double z;
    double numerator;
    double variance;
};

/// Two-sample log-rank statistic over the strata. Strata with a single
/// subject contribute nothing.
LogRankResult logrank(const StratifiedDataset& ds);

/// Wald-type contrast test z = c' gamma / sqrt(c' cov c).
double contrast_z(const Vector& gamma, const Matrix& cov, const Vector& contrast);

/// Relative error of the simple weight against the optimal one,
/// -(N1 phi p21 + N2 p11) / (N1 phi + N2).
double ratio_weight_gap(const StratumTable& table, double true_p11, double true_p21, double phi);
/// Variance-optimal weight phi p21 / v_true.
double q_optimal_variance(const StratumTable& table, double true_p11, double true_p21, double phi);
/// Equivalent closed form N1 N2 / (N1 phi p22 + N2 p12).
double q_optimal_closed_form(const StratumTable& table, double true_p11, double true_p21,
                             double phi);

}  // namespace ratefit
