#include "ratefit/ratio.hpp"

#include <cmath>

#include "ratefit/odds.hpp"

namespace ratefit {

namespace {

Matrix sandwich(const Matrix& bread, const Matrix& meat) {
    Eigen::FullPivLU<Matrix> lu(bread);
    if (!lu.isInvertible()) {
        throw FitError(FitErrorCode::SingularHessian, "bread matrix not invertible");
    }
    const Matrix inv = lu.inverse();
    return inv * meat * inv;
}

Matrix ratio_bread(const StratifiedDataset& ds, const Vector& gamma) {
    const Eigen::Index p = ds.dim();
    Matrix bread = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double phi = exp_linear_predictor(gamma, s.x);
        const double denom = n1 * phi + n2;
        const double events = static_cast<double>(s.table.successes());
        bread += events * n1 * n2 * phi / (denom * denom) * s.x * s.x.transpose();
    }
    return bread;
}

// Uncorrected sample-proportion variance, used when a row total is < 2.
double v_uncorrected(const StratumTable& table, double phi) {
    const Proportions p = proportions(table);
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return p.p11 * p.p12 / n1 + phi * phi * p.p21 * p.p22 / n2;
}

Matrix robust_meat(const StratifiedDataset& ds, const Vector& gamma, bool corrected) {
    const Eigen::Index p = ds.dim();
    Matrix meat = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const double phi = exp_linear_predictor(gamma, s.x);
        const double q = q_weight(s.table, phi);
        const double v = corrected ? v_component(RatioVarianceKind::RobustCorrected, s.table, phi)
                                   : v_uncorrected(s.table, phi);
        meat += q * q * v * s.x * s.x.transpose();
    }
    return meat;
}

}  // namespace

double q_weight(const StratumTable& table, double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return n1 * n2 / (n1 * phi + n2);
}

double v_component(RatioVarianceKind kind, const StratumTable& table, double phi) {
    const Proportions p = proportions(table);
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    switch (kind) {
        case RatioVarianceKind::RobustCorrected:
            if (table.row1_total() < 2 || table.row2_total() < 2) {
                throw FitError(FitErrorCode::PreconditionViolated,
                               "finite-sample-corrected variance needs both row totals >= 2");
            }
            return p.p11 * p.p12 / (n1 - 1.0) + phi * phi * p.p21 * p.p22 / (n2 - 1.0);
        case RatioVarianceKind::ModelBased:
            return phi * (p.p12 * p.p21 / n1 + p.p11 * p.p22 / n2);
        case RatioVarianceKind::PooledNull: {
            const double n = n1 + n2;
            const double pooled1 = static_cast<double>(table.successes()) / n;
            return pooled1 * (1.0 - pooled1) * n / (n - 1.0) * (1.0 / n1 + 1.0 / n2);
        }
        case RatioVarianceKind::LegacyInverseHessian:
            throw FitError(FitErrorCode::NotApplicable,
                           "LegacyInverseHessian has no per-stratum component");
    }
    return 0.0;
}

double v_true(const StratumTable& table, double p11, double p21, double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return p11 * (1.0 - p11) / n1 + phi * phi * p21 * (1.0 - p21) / n2;
}

double ratio_score_term(const StratumTable& table, double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return (static_cast<double>(table.n11()) * n2 - phi * static_cast<double>(table.n21()) * n1) /
           (n1 * phi + n2);
}

double ratio_score_term_alt(const StratumTable& table, double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    const double events = static_cast<double>(table.successes());
    return static_cast<double>(table.n11()) - events * n1 * phi / (n1 * phi + n2);
}

FitResult fit_ratio(const StratifiedDataset& ds, const SolverConfig& solver) {
    validate_dataset(ds);
    std::int64_t total_n11 = 0, total_n21 = 0;
    for (const auto& s : ds.strata()) {
        total_n11 += s.table.n11();
        total_n21 += s.table.n21();
    }
    if (total_n11 < 1 || total_n21 < 1) {
        throw FitError(FitErrorCode::Separation,
                       "all successes in one group; estimate at +/- infinity");
    }

    const Eigen::Index p = ds.dim();
    const ConcaveObjective objective = [&](const Vector& gamma) {
        ObjectiveEval eval;
        eval.gradient = Vector::Zero(p);
        eval.neg_hessian = Matrix::Zero(p, p);
        for (const auto& s : ds.strata()) {
            const double n1 = static_cast<double>(s.table.row1_total());
            const double n2 = static_cast<double>(s.table.row2_total());
            const double phi = exp_linear_predictor(gamma, s.x);
            const double denom = n1 * phi + n2;
            const double n11 = static_cast<double>(s.table.n11());
            const double events = static_cast<double>(s.table.successes());
            eval.value += n11 * gamma.dot(s.x) - events * std::log(denom);
            eval.gradient += (n11 - events * n1 * phi / denom) * s.x;
            eval.neg_hessian += events * n1 * n2 * phi / (denom * denom) * s.x * s.x.transpose();
        }
        return eval;
    };

    const NewtonResult nr = newton_maximize(objective, Vector::Zero(p), solver);

    FitResult result;
    result.estimate = nr.beta;
    result.iterations = nr.iterations;
    result.gradient_norm = nr.gradient_norm;
    result.converged = nr.converged;
    result.cov_model_based = cov_ratio(ds, nr.beta, RatioVarianceKind::ModelBased);

    bool corrected = true;
    for (const auto& s : ds.strata()) {
        if (s.table.row1_total() < 2 || s.table.row2_total() < 2) corrected = false;
    }
    result.cov_model_robust =
        sandwich(ratio_bread(ds, nr.beta), robust_meat(ds, nr.beta, corrected));
    return result;
}

Matrix cov_ratio(const StratifiedDataset& ds, const Vector& gamma, RatioVarianceKind kind) {
    const Matrix bread = ratio_bread(ds, gamma);
    if (kind == RatioVarianceKind::LegacyInverseHessian) {
        Eigen::FullPivLU<Matrix> lu(bread);
        if (!lu.isInvertible()) {
            throw FitError(FitErrorCode::SingularHessian, "bread matrix not invertible");
        }
        return lu.inverse();
    }
    const Eigen::Index p = ds.dim();
    Matrix meat = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const double phi = exp_linear_predictor(gamma, s.x);
        const double q = q_weight(s.table, phi);
        meat += q * q * v_component(kind, s.table, phi) * s.x * s.x.transpose();
    }
    return sandwich(bread, meat);
}

LogRankResult logrank(const StratifiedDataset& ds) {
    double numerator = 0.0, variance = 0.0;
    for (const auto& s : ds.strata()) {
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double n = n1 + n2;
        if (n < 2.0) continue;
        numerator +=
            (static_cast<double>(s.table.n11()) * n2 - static_cast<double>(s.table.n21()) * n1) / n;
        const double pooled1 = static_cast<double>(s.table.successes()) / n;
        variance += n1 * n2 * pooled1 * (1.0 - pooled1) / (n - 1.0);
    }
    if (variance <= 0.0) {
        throw FitError(FitErrorCode::ZeroVariance, "log-rank variance sum is zero");
    }
    return {numerator / std::sqrt(variance), numerator, variance};
}

double contrast_z(const Vector& gamma, const Matrix& cov, const Vector& contrast) {
    const double var = contrast.dot(cov * contrast);
    if (var <= 0.0) {
        throw FitError(FitErrorCode::ZeroVariance, "contrast variance not positive");
    }
    return contrast.dot(gamma) / std::sqrt(var);
}

double ratio_weight_gap(const StratumTable& table, double true_p11, double true_p21, double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return -(n1 * phi * true_p21 + n2 * true_p11) / (n1 * phi + n2);
}

double q_optimal_variance(const StratumTable& table, double true_p11, double true_p21,
                          double phi) {
    return phi * true_p21 / v_true(table, true_p11, true_p21, phi);
}

double q_optimal_closed_form(const StratumTable& table, double true_p11, double true_p21,
                             double phi) {
    const double n1 = static_cast<double>(table.row1_total());
    const double n2 = static_cast<double>(table.row2_total());
    return n1 * n2 / (n1 * phi * (1.0 - true_p21) + n2 * (1.0 - true_p11));
}

}  // namespace ratefit
