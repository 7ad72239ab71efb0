#pragma once

#include <vector>

#include "ratefit/solver.hpp"
#include "ratefit/strata.hpp"

namespace ratefit {

/// exp(x' beta) with the linear predictor clamped to +/-700.
double exp_linear_predictor(const Vector& beta, const Vector& x, bool* clamped = nullptr);

enum class OddsWeightKind {
    MantelHaenszel,  // rho = N1 N2 / N, independent of beta
    Weighted,        // rho = N1 N2 / (N1 psi + N2)
    OptimalOracle,   // variance-optimal weight, needs true probabilities (simulation use)
};

struct TrueProbabilities {
    double p11;
    double p21;
};

/// Weight choice for the odds-ratio estimating function. The oracle variant
/// is constructible only with the per-stratum true probabilities attached.
class OddsWeight {
public:
    static OddsWeight mantel_haenszel() { return OddsWeight(OddsWeightKind::MantelHaenszel); }
    static OddsWeight weighted() { return OddsWeight(OddsWeightKind::Weighted); }
    static OddsWeight optimal_oracle(std::vector<TrueProbabilities> probs) {
        OddsWeight w(OddsWeightKind::OptimalOracle);
        w.true_probs_ = std::move(probs);
        return w;
    }

    OddsWeightKind kind() const { return kind_; }
    const std::vector<TrueProbabilities>& true_probs() const { return true_probs_; }

private:
    explicit OddsWeight(OddsWeightKind kind) : kind_(kind) {}
    OddsWeightKind kind_;
    std::vector<TrueProbabilities> true_probs_;
};

/// Per-stratum weight rho_j evaluated at odds ratio psi. For the oracle kind,
/// stratum_index selects the attached true probabilities.
double rho_weight(const OddsWeight& weight, double psi, const StratumTable& table,
                  std::size_t stratum_index = 0);

enum class OddsVarianceKind {
    RobustCorrected,    // unbiased finite-sample-corrected per-stratum variance
    RobustSimple,       // simpler version without the finite-sample correction
    ModelBasedRobins,   // Robins-Breslow-Greenland style component
    ModelBasedFlanders, // Flanders style component
    PooledNull,         // pooled two-sample variance at the null
};

/// Per-stratum scalar variance component at odds ratio psi.
/// RobustCorrected requires both row totals >= 2.
double sigma_component(OddsVarianceKind kind, const StratumTable& table, double psi);

/// True sampling variance of (p11_hat p22_hat - psi p12_hat p21_hat) for
/// independent binomial rows with the given success probabilities.
double sigma_true(const StratumTable& table, double p11, double p21, double psi);

/// Weighted / unweighted Mantel-Haenszel point estimation. Covariances are
/// filled with the Robins-style model-based and the finite-sample-corrected
/// robust sandwich (falling back to the uncorrected form when some row total
/// is < 2). Covariances are at the scale of the estimate itself.
FitResult fit_odds(const StratifiedDataset& ds, const OddsWeight& weight,
                   const SolverConfig& solver = SolverConfig());

/// Sandwich covariance of the fitted coefficient vector for the chosen weight
/// and variance component.
Matrix cov_odds(const StratifiedDataset& ds, const Vector& beta, const OddsWeight& weight,
                OddsVarianceKind variance);

/// Relative error of the simple weight against the oracle weight,
/// (1 - psi) (N1 p11 - N2 p21) / (N1 psi + N2), a diagnostic for when the
/// simple weight is near-optimal.
double optimal_weight_gap(const StratumTable& table, double true_p11, double true_p21,
                          const Vector& beta, const Vector& x);

/// Setting-I optimal weight: psi p12 p21 / sigma_true.
double rho_optimal_variance(const StratumTable& table, double true_p11, double true_p21,
                            double psi);
/// Large-table optimal weight N1 N2 / {N1 (p11 + psi p12) + N2 (psi p21 + p22)}.
double rho_optimal_large_table(const StratumTable& table, double true_p11, double true_p21,
                               double psi);

/// Symmetrized model-based variance for the unweighted Mantel-Haenszel
/// estimator with constant covariates (p = 1): average of the Robins
/// component and its response-exchanged form; Flanders variant by flag.
/// Throws NotApplicable for nonconstant covariates.
Matrix symmetrize_mh_variance(const StratifiedDataset& ds, const Vector& beta,
                              bool flanders = false);

/// Non-symmetrized model-based variance of the unweighted Mantel-Haenszel
/// estimator with constant covariates (Robins or Flanders form).
double mh_model_based_variance(const StratifiedDataset& ds, double psi, bool flanders);

}  // namespace ratefit
