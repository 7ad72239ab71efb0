#include "ratefit/conditional.hpp"

#include <cmath>
#include <vector>

namespace ratefit {

namespace {

double log_choose(std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

// Per-stratum enumeration cache: log C(N1,k) + log C(N2,s-k) over the support.
struct SupportWeights {
    std::int64_t k_min;
    std::vector<double> log_base;
};

SupportWeights support_weights(const HypergeometricMargin& m) {
    SupportWeights w;
    w.k_min = m.support_min();
    const std::int64_t k_max = m.support_max();
    w.log_base.reserve(static_cast<std::size_t>(k_max - w.k_min + 1));
    for (std::int64_t k = w.k_min; k <= k_max; ++k) {
        w.log_base.push_back(log_choose(m.n1, k) + log_choose(m.n2, m.s - k));
    }
    return w;
}

NchtMoments moments_from_weights(const SupportWeights& w, double log_psi) {
    double max_lw = -std::numeric_limits<double>::infinity();
    std::vector<double> lw(w.log_base.size());
    for (std::size_t i = 0; i < w.log_base.size(); ++i) {
        const double k = static_cast<double>(w.k_min + static_cast<std::int64_t>(i));
        lw[i] = w.log_base[i] + k * log_psi;
        max_lw = std::max(max_lw, lw[i]);
    }
    double sum = 0.0, sum_k = 0.0, sum_k2 = 0.0;
    for (std::size_t i = 0; i < lw.size(); ++i) {
        const double k = static_cast<double>(w.k_min + static_cast<std::int64_t>(i));
        const double weight = std::exp(lw[i] - max_lw);
        sum += weight;
        sum_k += weight * k;
        sum_k2 += weight * k * k;
    }
    NchtMoments out;
    out.mean = sum_k / sum;
    out.variance = std::max(0.0, sum_k2 / sum - out.mean * out.mean);
    return out;
}

double log_normalizer(const SupportWeights& w, double log_psi) {
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.log_base.size(); ++i) {
        const double k = static_cast<double>(w.k_min + static_cast<std::int64_t>(i));
        max_lw = std::max(max_lw, w.log_base[i] + k * log_psi);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < w.log_base.size(); ++i) {
        const double k = static_cast<double>(w.k_min + static_cast<std::int64_t>(i));
        sum += std::exp(w.log_base[i] + k * log_psi - max_lw);
    }
    return max_lw + std::log(sum);
}

}  // namespace

HypergeometricMargin::HypergeometricMargin(std::int64_t successes, std::int64_t row1,
                                           std::int64_t row2)
    : s(successes), n1(row1), n2(row2) {
    if (s < 0 || n1 < 1 || n2 < 1 || s > n1 + n2) {
        throw std::invalid_argument("HypergeometricMargin: empty support");
    }
}

NchtMoments ncht_moments(const HypergeometricMargin& margin, double psi) {
    if (!(psi > 0.0)) {
        throw std::invalid_argument("ncht_moments: psi must be positive");
    }
    return moments_from_weights(support_weights(margin), std::log(psi));
}

FitResult fit_conditional(const StratifiedDataset& ds, const SolverConfig& solver) {
    const Eigen::Index p = ds.dim();

    struct Informative {
        const Stratum* stratum;
        HypergeometricMargin margin;
        SupportWeights weights;
    };
    std::vector<Informative> informative;
    for (const auto& s : ds.strata()) {
        const auto margin = HypergeometricMargin::of(s.table);
        if (margin.degenerate()) continue;  // no score or information contribution
        informative.push_back({&s, margin, support_weights(margin)});
    }
    if (informative.empty()) {
        throw FitError(FitErrorCode::Separation, "no informative strata (all margins degenerate)");
    }

    {
        Matrix design(static_cast<Eigen::Index>(informative.size()), p);
        for (std::size_t j = 0; j < informative.size(); ++j) {
            design.row(static_cast<Eigen::Index>(j)) = informative[j].stratum->x.transpose();
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(design);
        if (qr.rank() < p) {
            throw FitError(FitErrorCode::RankDeficient,
                           "informative strata do not span the covariate space");
        }
    }

    // Separation: the sufficient statistic sits on the boundary of the
    // conditional support in every informative stratum.
    {
        bool all_at_max = true, all_at_min = true;
        for (const auto& inf : informative) {
            all_at_max = all_at_max && inf.stratum->table.n11() == inf.margin.support_max();
            all_at_min = all_at_min && inf.stratum->table.n11() == inf.margin.support_min();
        }
        if (all_at_max || all_at_min) {
            throw FitError(FitErrorCode::Separation, "conditional estimate at +/- infinity");
        }
    }

    const ConcaveObjective objective = [&](const Vector& beta) {
        ObjectiveEval eval;
        eval.gradient = Vector::Zero(p);
        eval.neg_hessian = Matrix::Zero(p, p);
        for (const auto& inf : informative) {
            const Vector& x = inf.stratum->x;
            const double log_psi = std::clamp(beta.dot(x), -700.0, 700.0);
            const NchtMoments m = moments_from_weights(inf.weights, log_psi);
            const double n11 = static_cast<double>(inf.stratum->table.n11());
            eval.value += n11 * log_psi - log_normalizer(inf.weights, log_psi);
            eval.gradient += (n11 - m.mean) * x;
            eval.neg_hessian += m.variance * x * x.transpose();
        }
        return eval;
    };

    const NewtonResult nr = newton_maximize(objective, Vector::Zero(p), solver);

    Matrix information = Matrix::Zero(p, p);
    for (const auto& inf : informative) {
        const Vector& x = inf.stratum->x;
        const double log_psi = std::clamp(nr.beta.dot(x), -700.0, 700.0);
        const NchtMoments m = moments_from_weights(inf.weights, log_psi);
        information += m.variance * x * x.transpose();
    }
    Eigen::FullPivLU<Matrix> lu(information);
    if (!lu.isInvertible()) {
        throw FitError(FitErrorCode::SingularHessian, "conditional information not invertible");
    }

    FitResult result;
    result.estimate = nr.beta;
    result.cov_model_based = lu.inverse();
    result.iterations = nr.iterations;
    result.gradient_norm = nr.gradient_norm;
    result.converged = nr.converged;
    return result;
}

}  // namespace ratefit
