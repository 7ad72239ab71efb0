#include "ratefit/odds.hpp"

#include <algorithm>
#include <cmath>

namespace ratefit {

namespace {

constexpr double kLinPredCap = 700.0;

Matrix sandwich(const Matrix& bread, const Matrix& meat) {
    Eigen::FullPivLU<Matrix> lu(bread);
    if (!lu.isInvertible()) {
        throw FitError(FitErrorCode::SingularHessian, "bread matrix not invertible");
    }
    const Matrix inv = lu.inverse();
    return inv * meat * inv;
}

bool constant_scalar_design(const StratifiedDataset& ds, double* value) {
    if (ds.dim() != 1) return false;
    const double x0 = ds[0].x(0);
    for (std::size_t j = 1; j < ds.size(); ++j) {
        if (ds[j].x(0) != x0) return false;
    }
    *value = x0;
    return true;
}

void require_informative(const StratifiedDataset& ds) {
    bool any_a = false, any_b = false;
    for (const auto& s : ds.strata()) {
        const Proportions p = proportions(s.table);
        any_a = any_a || p.cross_a > 0.0;
        any_b = any_b || p.cross_b > 0.0;
    }
    if (!any_a || !any_b) {
        throw FitError(FitErrorCode::Separation,
                       "all cross products on one side; estimate at +/- infinity");
    }
}

}  // namespace

double exp_linear_predictor(const Vector& beta, const Vector& x, bool* clamped) {
    double eta = beta.dot(x);
    if (eta > kLinPredCap || eta < -kLinPredCap) {
        eta = std::clamp(eta, -kLinPredCap, kLinPredCap);
        if (clamped) *clamped = true;
    }
    return std::exp(eta);
}

double rho_weight(const OddsWeight& weight, double psi, const StratumTable& table,
                  std::size_t stratum_index) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    switch (weight.kind()) {
        case OddsWeightKind::MantelHaenszel:
            return n1 * n2 / (n1 + n2);
        case OddsWeightKind::Weighted:
            return n1 * n2 / (n1 * psi + n2);
        case OddsWeightKind::OptimalOracle: {
            const auto& tp = weight.true_probs().at(stratum_index);
            return rho_optimal_large_table(table, tp.p11, tp.p21, psi);
        }
    }
    return 0.0;
}

double sigma_component(OddsVarianceKind kind, const StratumTable& table, double psi) {
    const Proportions p = proportions(table);
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    switch (kind) {
        case OddsVarianceKind::RobustCorrected: {
            if (table.row1_total() < 2 || table.row2_total() < 2) {
                throw FitError(FitErrorCode::PreconditionViolated,
                               "finite-sample-corrected variance needs both row totals >= 2");
            }
            const double q1 = p.p11 * p.p12 / (n1 - 1.0);
            const double q2 = p.p21 * p.p22 / (n2 - 1.0);
            const double a = p.p22 + psi * p.p21;
            const double b = p.p11 + psi * p.p12;
            return q1 * a * a + q2 * b * b - (psi - 1.0) * (psi - 1.0) * q1 * q2;
        }
        case OddsVarianceKind::RobustSimple: {
            const double a = p.p22 + psi * p.p21;
            const double b = p.p11 + psi * p.p12;
            return p.p11 * p.p12 / n1 * a * a + p.p21 * p.p22 / n2 * b * b;
        }
        case OddsVarianceKind::ModelBasedRobins:
            return psi * p.p12 * p.p21 / n1 * (p.p22 + psi * p.p21) +
                   p.p11 * p.p22 / n2 * (p.p11 + psi * p.p12);
        case OddsVarianceKind::ModelBasedFlanders:
            return psi * p.p12 * p.p21 *
                   ((p.p22 + psi * p.p21) / n1 + (p.p11 + psi * p.p12) / n2 +
                    (1.0 - psi) / (n1 * n2));
        case OddsVarianceKind::PooledNull: {
            const double n = n1 + n2;
            const double pooled1 = static_cast<double>(table.successes()) / n;
            const double pooled2 = 1.0 - pooled1;
            return pooled1 * pooled2 * n / (n - 1.0) * (1.0 / n1 + 1.0 / n2);
        }
    }
    return 0.0;
}

double sigma_true(const StratumTable& table, double p11, double p21, double psi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    const double p12 = 1.0 - p11;
    const double p22 = 1.0 - p21;
    const double v1 = p11 * p12 / n1;
    const double v2 = p21 * p22 / n2;
    const double a = p22 + psi * p21;
    const double b = p11 + psi * p12;
    return v1 * a * a + v2 * b * b + (psi - 1.0) * (psi - 1.0) * v1 * v2;
}

namespace {

ObjectiveEval eval_weighted_objective(const StratifiedDataset& ds, const Vector& beta) {
    const Eigen::Index p = ds.dim();
    ObjectiveEval eval;
    eval.gradient = Vector::Zero(p);
    eval.neg_hessian = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const Proportions pr = proportions(s.table);
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double psi = exp_linear_predictor(beta, s.x);
        const double denom = n1 * psi + n2;
        const double mass = n1 * pr.cross_a + n2 * pr.cross_b;
        eval.value += n1 * pr.cross_a * beta.dot(s.x) - mass * std::log(denom);
        eval.gradient += n1 * n2 * (pr.cross_a - psi * pr.cross_b) / denom * s.x;
        eval.neg_hessian += mass * n1 * n2 * psi / (denom * denom) * s.x * s.x.transpose();
    }
    return eval;
}

ObjectiveEval eval_mh_surrogate(const StratifiedDataset& ds, const Vector& beta) {
    const Eigen::Index p = ds.dim();
    ObjectiveEval eval;
    eval.gradient = Vector::Zero(p);
    eval.neg_hessian = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const Proportions pr = proportions(s.table);
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double rho0 = n1 * n2 / (n1 + n2);
        const double psi = exp_linear_predictor(beta, s.x);
        eval.value += rho0 * (pr.cross_a * beta.dot(s.x) - pr.cross_b * psi);
        eval.gradient += rho0 * (pr.cross_a - psi * pr.cross_b) * s.x;
        eval.neg_hessian += rho0 * pr.cross_b * psi * s.x * s.x.transpose();
    }
    return eval;
}

double oracle_score(const StratifiedDataset& ds, const OddsWeight& weight, double beta) {
    double score = 0.0;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& s = ds[j];
        const Proportions pr = proportions(s.table);
        Vector b(1);
        b << beta;
        const double psi = exp_linear_predictor(b, s.x);
        score += rho_weight(weight, psi, s.table, j) * (pr.cross_a - psi * pr.cross_b) * s.x(0);
    }
    return score;
}

// Scalar bisection for the oracle-weighted estimating equation (p = 1 only).
Vector fit_oracle_scalar(const StratifiedDataset& ds, const OddsWeight& weight,
                         const SolverConfig& config) {
    double lo = -40.0, hi = 40.0;
    double flo = oracle_score(ds, weight, lo);
    double fhi = oracle_score(ds, weight, hi);
    if (flo * fhi > 0.0) {
        throw FitError(FitErrorCode::Separation, "oracle score has no sign change");
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double fmid = oracle_score(ds, weight, mid);
        if (fmid == 0.0 || hi - lo < config.step_tol) {
            lo = hi = mid;
            break;
        }
        if ((flo <= 0.0) == (fmid <= 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Vector out(1);
    out << 0.5 * (lo + hi);
    return out;
}

}  // namespace

Matrix cov_odds(const StratifiedDataset& ds, const Vector& beta, const OddsWeight& weight,
                OddsVarianceKind variance) {
    const Eigen::Index p = ds.dim();
    Matrix bread = Matrix::Zero(p, p);
    Matrix meat = Matrix::Zero(p, p);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& s = ds[j];
        const Proportions pr = proportions(s.table);
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double psi = exp_linear_predictor(beta, s.x);
        const double rho = rho_weight(weight, psi, s.table, j);
        const Matrix xx = s.x * s.x.transpose();

        switch (weight.kind()) {
            case OddsWeightKind::Weighted: {
                const double denom = n1 * psi + n2;
                const double mass = n1 * pr.cross_a + n2 * pr.cross_b;
                bread += mass * n1 * n2 * psi / (denom * denom) * xx;
                break;
            }
            case OddsWeightKind::MantelHaenszel:
            case OddsWeightKind::OptimalOracle:
                bread += rho * psi * pr.cross_b * xx;
                break;
        }
        meat += rho * rho * sigma_component(variance, s.table, psi) * xx;
    }
    return sandwich(bread, meat);
}

FitResult fit_odds(const StratifiedDataset& ds, const OddsWeight& weight,
                   const SolverConfig& solver) {
    validate_dataset(ds);
    require_informative(ds);

    const Eigen::Index p = ds.dim();
    FitResult result;

    double xval = 0.0;
    if (weight.kind() == OddsWeightKind::MantelHaenszel && constant_scalar_design(ds, &xval)) {
        // Closed-form Mantel-Haenszel log ratio with constant covariates.
        double num = 0.0, den = 0.0;
        for (const auto& s : ds.strata()) {
            const double n = static_cast<double>(s.table.total());
            num += static_cast<double>(s.table.n11() * s.table.n22()) / n;
            den += static_cast<double>(s.table.n12() * s.table.n21()) / n;
        }
        result.estimate = Vector::Constant(1, std::log(num / den) / xval);
        result.converged = true;
        result.gradient_norm = 0.0;
    } else if (weight.kind() == OddsWeightKind::OptimalOracle) {
        if (p != 1) {
            throw FitError(FitErrorCode::NotApplicable,
                           "oracle-weighted fit implemented for scalar coefficients only");
        }
        result.estimate = fit_oracle_scalar(ds, weight, solver);
        result.converged = true;
    } else {
        const ConcaveObjective objective = [&](const Vector& b) {
            return weight.kind() == OddsWeightKind::Weighted ? eval_weighted_objective(ds, b)
                                                             : eval_mh_surrogate(ds, b);
        };
        const NewtonResult nr = newton_maximize(objective, Vector::Zero(p), solver);
        result.estimate = nr.beta;
        result.iterations = nr.iterations;
        result.gradient_norm = nr.gradient_norm;
        result.converged = nr.converged;
    }

    result.cov_model_based = cov_odds(ds, result.estimate, weight, OddsVarianceKind::ModelBasedRobins);
    try {
        result.cov_model_robust =
            cov_odds(ds, result.estimate, weight, OddsVarianceKind::RobustCorrected);
    } catch (const FitError& e) {
        if (e.code() != FitErrorCode::PreconditionViolated) throw;
        result.cov_model_robust =
            cov_odds(ds, result.estimate, weight, OddsVarianceKind::RobustSimple);
    }
    return result;
}

double optimal_weight_gap(const StratumTable& table, double true_p11, double true_p21,
                          const Vector& beta, const Vector& x) {
    const double psi = exp_linear_predictor(beta, x);
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return (1.0 - psi) * (n1 * true_p11 - n2 * true_p21) / (n1 * psi + n2);
}

double rho_optimal_variance(const StratumTable& table, double true_p11, double true_p21,
                            double psi) {
    const double p12 = 1.0 - true_p11;
    return psi * p12 * true_p21 / sigma_true(table, true_p11, true_p21, psi);
}

double rho_optimal_large_table(const StratumTable& table, double true_p11, double true_p21,
                               double psi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    const double p12 = 1.0 - true_p11;
    const double p22 = 1.0 - true_p21;
    return n1 * n2 / (n1 * (true_p11 + psi * p12) + n2 * (psi * true_p21 + p22));
}

double mh_model_based_variance(const StratifiedDataset& ds, double psi, bool flanders) {
    double num = 0.0, denom = 0.0;
    for (const auto& s : ds.strata()) {
        const Proportions p = proportions(s.table);
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double n = n1 + n2;
        const double rho0 = n1 * n2 / n;
        denom += rho0 * p.cross_b;
        if (flanders) {
            num += rho0 * p.cross_b / n *
                   (static_cast<double>(s.table.n11() + s.table.n22() + 1) / psi +
                    static_cast<double>(s.table.n12() + s.table.n21() - 1));
        } else {
            num += rho0 * (p.cross_b * n2 / n * (p.p22 / psi + p.p21) +
                           p.cross_a * n1 / n * (p.p11 / (psi * psi) + p.p12 / psi));
        }
    }
    return num / (denom * denom);
}

namespace {

// Response-exchanged forms of the model-based variances, expressed in terms
// of the original data and the point estimate.
double mh_model_based_variance_exchanged(const StratifiedDataset& ds, double psi, bool flanders) {
    double num = 0.0, denom = 0.0;
    for (const auto& s : ds.strata()) {
        const Proportions p = proportions(s.table);
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double n = n1 + n2;
        const double rho0 = n1 * n2 / n;
        denom += rho0 * p.cross_b;
        if (flanders) {
            num += rho0 * p.cross_a *
                   (n2 / n * (p.p21 / psi + p.p22 / (psi * psi)) +
                    n1 / n * (p.p11 / (psi * psi) + p.p12 / psi) +
                    (1.0 / psi - 1.0 / (psi * psi)) / n);
        } else {
            num += rho0 * (p.cross_a * n2 / n * (p.p21 / psi + p.p22 / (psi * psi)) +
                           p.cross_b * n1 / n * (p.p12 + p.p11 / psi));
        }
    }
    return num / (denom * denom);
}

}  // namespace

Matrix symmetrize_mh_variance(const StratifiedDataset& ds, const Vector& beta, bool flanders) {
    double xval = 0.0;
    if (!constant_scalar_design(ds, &xval) || xval != 1.0) {
        throw FitError(FitErrorCode::NotApplicable,
                       "symmetrized variance defined for constant unit covariates only");
    }
    const double psi = std::exp(beta(0));
    const double direct = mh_model_based_variance(ds, psi, flanders);
    const double exchanged = mh_model_based_variance_exchanged(ds, psi, flanders);
    Matrix out(1, 1);
    out(0, 0) = 0.5 * (direct + exchanged);
    return out;
}

}  // namespace ratefit
