#include "ratefit/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ratefit {

namespace {

bool near(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

Matrix invert_or_throw(const Matrix& m, const char* what) {
    Eigen::FullPivLU<Matrix> lu(m);
    if (!lu.isInvertible()) {
        throw FitError(FitErrorCode::SingularHessian, what);
    }
    return lu.inverse();
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) {
        throw std::invalid_argument("TimeGrid: no points");
    }
    double prev = 0.0;
    for (double t : points_) {
        if (!(t > prev)) {
            throw std::invalid_argument("TimeGrid: points must be positive and strictly increasing");
        }
        prev = t;
    }
}

TimeGrid TimeGrid::regular(double step, double max_time) {
    if (!(step > 0.0) || !(max_time >= step)) {
        throw std::invalid_argument("TimeGrid::regular: need 0 < step <= max_time");
    }
    std::vector<double> points;
    const auto count = static_cast<std::size_t>(std::floor(max_time / step + 1e-9));
    points.reserve(count);
    for (std::size_t j = 1; j <= count; ++j) {
        points.push_back(static_cast<double>(j) * step);
    }
    return TimeGrid(std::move(points));
}

std::vector<SurvivalRecord> discretize(const std::vector<RawRecord>& records, const TimeGrid& grid,
                                       CensoringConvention convention) {
    const std::vector<double>& t = grid.points();
    std::vector<SurvivalRecord> out;
    out.reserve(records.size());
    for (const RawRecord& r : records) {
        if (r.time < 0.0) {
            throw std::invalid_argument("discretize: negative time");
        }
        if (r.group != 1 && r.group != 2) {
            throw std::invalid_argument("discretize: group must be 1 or 2");
        }
        if (r.time > t.back() && !near(r.time, t.back())) {
            // administrative censoring at the horizon
            out.push_back({t.back(), 0, r.group});
            continue;
        }
        // index of the first grid point >= time
        auto it = std::lower_bound(t.begin(), t.end(), r.time);
        while (it != t.begin() && near(*(it - 1), r.time)) --it;
        const bool on_grid = it != t.end() && near(*it, r.time);
        if (r.event == 1) {
            if (near(r.time, 0.0)) {
                throw std::invalid_argument("discretize: event at time zero");
            }
            out.push_back({*it, 1, r.group});
        } else if (on_grid || near(r.time, 0.0)) {
            out.push_back({near(r.time, 0.0) ? 0.0 : *it, 0, r.group});
        } else {
            const double left = it == t.begin() ? 0.0 : *(it - 1);
            const double right = *it;
            out.push_back(
                {convention == CensoringConvention::CensoredEarly ? left : right, 0, r.group});
        }
    }
    return out;
}

TimeBasis::TimeBasis(std::vector<double> breakpoints, std::vector<Vector> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
    if (values_.size() != breakpoints_.size() + 1) {
        throw std::invalid_argument("TimeBasis: need one more value than breakpoints");
    }
    for (const Vector& v : values_) {
        if (v.size() != values_.front().size()) {
            throw std::invalid_argument("TimeBasis: inconsistent value dimensions");
        }
    }
    if (!std::is_sorted(breakpoints_.begin(), breakpoints_.end())) {
        throw std::invalid_argument("TimeBasis: breakpoints must be increasing");
    }
}

TimeBasis TimeBasis::constant() {
    return TimeBasis({}, {Vector::Ones(1)});
}

TimeBasis TimeBasis::indicator_pieces(const std::vector<double>& breakpoints) {
    const auto p = static_cast<Eigen::Index>(breakpoints.size() + 1);
    std::vector<Vector> values;
    values.reserve(breakpoints.size() + 1);
    for (std::size_t piece = 0; piece <= breakpoints.size(); ++piece) {
        Vector v = Vector::Zero(p);
        v(0) = 1.0;
        if (piece > 0) v(static_cast<Eigen::Index>(piece)) = 1.0;
        values.push_back(std::move(v));
    }
    return TimeBasis(breakpoints, std::move(values));
}

Vector TimeBasis::operator()(double t) const {
    // piece i covers (b_{i-1}, b_i]
    const auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
    return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
}

RiskSetPanel build_panel(const std::vector<SurvivalRecord>& records, const TimeBasis& basis,
                         PanelStrata mode, const TimeGrid* grid) {
    if (mode == PanelStrata::AllGridPoints && grid == nullptr) {
        throw std::invalid_argument("build_panel: AllGridPoints mode needs a grid");
    }
    std::vector<double> y1, y2;  // observed times per group, ascending
    std::map<std::pair<double, int>, std::int64_t> event_counts;
    for (const SurvivalRecord& r : records) {
        if (r.group != 1 && r.group != 2) {
            throw std::invalid_argument("build_panel: group must be 1 or 2");
        }
        if (r.y < 0.0) {
            throw std::invalid_argument("build_panel: negative time");
        }
        (r.group == 1 ? y1 : y2).push_back(r.y);
        if (r.event == 1) ++event_counts[{r.y, r.group}];
    }
    if (y1.empty() || y2.empty()) {
        throw FitError(FitErrorCode::EmptyGroup, "both groups must be represented");
    }
    std::sort(y1.begin(), y1.end());
    std::sort(y2.begin(), y2.end());

    std::vector<double> times;
    if (mode == PanelStrata::AllGridPoints) {
        times = grid->points();
    } else {
        for (const auto& [key, count] : event_counts) {
            if (times.empty() || times.back() != key.first) times.push_back(key.first);
        }
    }

    const auto at_risk = [](const std::vector<double>& ys, double t) {
        return static_cast<std::int64_t>(ys.end() - std::lower_bound(ys.begin(), ys.end(), t));
    };
    const auto events_at = [&](double t, int group) {
        const auto it = event_counts.find({t, group});
        return it == event_counts.end() ? std::int64_t{0} : it->second;
    };

    std::vector<Stratum> strata;
    std::vector<double> kept_times;
    std::size_t truncated = 0;
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double t = times[j];
        const std::int64_t risk1 = at_risk(y1, t);
        const std::int64_t risk2 = at_risk(y2, t);
        if (risk1 == 0 || risk2 == 0) {
            truncated = times.size() - j;
            break;
        }
        const std::int64_t n11 = events_at(t, 1);
        const std::int64_t n21 = events_at(t, 2);
        strata.push_back({StratumTable(n11, risk1 - n11, n21, risk2 - n21), basis(t)});
        kept_times.push_back(t);
    }
    if (strata.empty()) {
        throw FitError(FitErrorCode::EmptyGroup, "a group's risk set is empty from the start");
    }
    return {StratifiedDataset(std::move(strata)), std::move(kept_times), records,
            static_cast<std::int64_t>(records.size()), truncated};
}

std::vector<double> influence_h(const SurvivalRecord& record, const RiskSetPanel& panel,
                                const Vector& gamma, bool include_third_term) {
    const std::size_t J = panel.times.size();
    std::vector<double> h(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        const double t = panel.times[j];
        if (record.y < t) break;  // no contribution at later times
        const StratumTable& tab = panel.dataset[j].table;
        const double n1 = static_cast<double>(tab.row1_total());
        const double n2 = static_cast<double>(tab.row2_total());
        const double phi = exp_linear_predictor(gamma, panel.dataset[j].x);
        const double denom = n1 * phi + n2;
        const Proportions p = proportions(tab);
        const bool at_event = record.y == t && record.event == 1;
        if (record.group == 1) {
            h[j] = n2 / denom * ((at_event ? 1.0 : 0.0) - p.p11);
            if (include_third_term) {
                h[j] += (p.p11 - phi * p.p21) * n2 * n2 / (denom * denom);
            }
        } else {
            h[j] = -n1 * phi / denom * ((at_event ? 1.0 : 0.0) - p.p21);
            if (include_third_term) {
                h[j] += (p.p11 - phi * p.p21) * phi * n1 * n1 / (denom * denom);
            }
        }
    }
    return h;
}

std::vector<double> influence_h_lin_wei(const SurvivalRecord& record, const RiskSetPanel& panel,
                                        const Vector& gamma) {
    const std::size_t J = panel.times.size();
    std::vector<double> h(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        const double t = panel.times[j];
        if (record.y < t) break;
        const StratumTable& tab = panel.dataset[j].table;
        const double n1 = static_cast<double>(tab.row1_total());
        const double n2 = static_cast<double>(tab.row2_total());
        const double phi = exp_linear_predictor(gamma, panel.dataset[j].x);
        const double denom = n1 * phi + n2;
        const double resid = (record.group == 1 ? 1.0 : 0.0) - n1 * phi / denom;
        const double events = static_cast<double>(tab.successes());
        if (record.y == t && record.event == 1) h[j] += resid;
        h[j] -= events * (record.group == 1 ? phi : 1.0) / denom * resid;
    }
    return h;
}

std::vector<double> influence_g(const SurvivalRecord& record, const RiskSetPanel& panel,
                                const Vector& beta, bool include_third_term) {
    const std::size_t J = panel.times.size();
    std::vector<double> g(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        const double t = panel.times[j];
        if (record.y < t) break;
        const StratumTable& tab = panel.dataset[j].table;
        const double n1 = static_cast<double>(tab.row1_total());
        const double n2 = static_cast<double>(tab.row2_total());
        const double psi = exp_linear_predictor(beta, panel.dataset[j].x);
        const double denom = n1 * psi + n2;
        const Proportions p = proportions(tab);
        const bool at_event = record.y == t && record.event == 1;
        if (record.group == 1) {
            g[j] = n2 * (p.p22 + psi * p.p21) / denom * ((at_event ? 1.0 : 0.0) - p.p11);
            if (include_third_term) {
                g[j] += (p.cross_a - psi * p.cross_b) * n2 * n2 / (denom * denom);
            }
        } else {
            g[j] = -n1 * (p.p11 + psi * p.p12) / denom * ((at_event ? 1.0 : 0.0) - p.p21);
            if (include_third_term) {
                g[j] += (p.cross_a - psi * p.cross_b) * psi * n1 * n1 / (denom * denom);
            }
        }
    }
    return g;
}

namespace {

// Unscaled bread for the weighted odds-model score on the panel.
Matrix odds_panel_bread(const StratifiedDataset& ds, const Vector& beta) {
    const Eigen::Index p = ds.dim();
    Matrix bread = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double psi = exp_linear_predictor(beta, s.x);
        const double denom = n1 * psi + n2;
        const Proportions pr = proportions(s.table);
        bread += (n1 * pr.cross_a + n2 * pr.cross_b) * n1 * n2 * psi / (denom * denom) * s.x *
                 s.x.transpose();
    }
    return bread;
}

// Unscaled bread for the ratio-model score on the panel.
Matrix ratio_panel_bread(const StratifiedDataset& ds, const Vector& gamma) {
    const Eigen::Index p = ds.dim();
    Matrix bread = Matrix::Zero(p, p);
    for (const auto& s : ds.strata()) {
        const double n1 = static_cast<double>(s.table.row1_total());
        const double n2 = static_cast<double>(s.table.row2_total());
        const double phi = exp_linear_predictor(gamma, s.x);
        const double denom = n1 * phi + n2;
        bread += static_cast<double>(s.table.successes()) * n1 * n2 * phi / (denom * denom) * s.x *
                 s.x.transpose();
    }
    return bread;
}

template <class InfluenceFn>
Matrix subject_meat(const RiskSetPanel& panel, const InfluenceFn& influence) {
    const Eigen::Index p = panel.dataset.dim();
    Matrix meat = Matrix::Zero(p, p);
    for (const SurvivalRecord& r : panel.records) {
        const std::vector<double> terms = influence(r);
        Vector sum = Vector::Zero(p);
        for (std::size_t j = 0; j < terms.size(); ++j) {
            if (terms[j] != 0.0) sum += terms[j] * panel.dataset[j].x;
        }
        meat += sum * sum.transpose();
    }
    return meat;
}

}  // namespace

Matrix cov_survival(const RiskSetPanel& panel, const Vector& estimate, SurvivalCovKind kind) {
    switch (kind) {
        case SurvivalCovKind::RatioModelBased:
            return cov_ratio(panel.dataset, estimate, RatioVarianceKind::ModelBased);
        case SurvivalCovKind::Legacy:
            return cov_ratio(panel.dataset, estimate, RatioVarianceKind::LegacyInverseHessian);
        case SurvivalCovKind::OddsModelBased:
            return cov_odds(panel.dataset, estimate, OddsWeight::weighted(),
                            OddsVarianceKind::ModelBasedRobins);
        case SurvivalCovKind::RatioRobust:
        case SurvivalCovKind::RatioModelCorrect: {
            const bool third = kind == SurvivalCovKind::RatioRobust;
            const Matrix inv =
                invert_or_throw(ratio_panel_bread(panel.dataset, estimate), "panel bread singular");
            const Matrix meat = subject_meat(panel, [&](const SurvivalRecord& r) {
                return influence_h(r, panel, estimate, third);
            });
            return inv * meat * inv;
        }
        case SurvivalCovKind::OddsRobust:
        case SurvivalCovKind::OddsModelCorrect: {
            const bool third = kind == SurvivalCovKind::OddsRobust;
            const Matrix inv =
                invert_or_throw(odds_panel_bread(panel.dataset, estimate), "panel bread singular");
            const Matrix meat = subject_meat(panel, [&](const SurvivalRecord& r) {
                return influence_g(r, panel, estimate, third);
            });
            return inv * meat * inv;
        }
    }
    throw std::invalid_argument("cov_survival: unknown kind");
}

FitResult fit_survival_ratio(const RiskSetPanel& panel, const SolverConfig& solver) {
    FitResult result = fit_ratio(panel.dataset, solver);
    result.cov_model_robust = cov_survival(panel, result.estimate, SurvivalCovKind::RatioRobust);
    return result;
}

FitResult fit_survival_odds(const RiskSetPanel& panel, const OddsWeight& weight,
                            const SolverConfig& solver) {
    if (weight.kind() == OddsWeightKind::OptimalOracle) {
        throw FitError(FitErrorCode::NotApplicable, "oracle weights are not defined on a panel");
    }
    FitResult result = fit_odds(panel.dataset, weight, solver);
    if (weight.kind() == OddsWeightKind::Weighted) {
        result.cov_model_robust = cov_survival(panel, result.estimate, SurvivalCovKind::OddsRobust);
    }
    // For the unweighted estimator the table-level covariances from fit_odds
    // are kept; the subject-level expansion is tied to the weighted score.
    return result;
}

std::vector<KmPoint> km_curve(const std::vector<SurvivalRecord>& records, int group) {
    std::map<double, std::int64_t> events;
    std::vector<double> ys;
    for (const SurvivalRecord& r : records) {
        if (r.group != group) continue;
        ys.push_back(r.y);
        if (r.event == 1) ++events[r.y];
    }
    if (ys.empty()) {
        throw FitError(FitErrorCode::EmptyGroup, "km_curve: no records in group");
    }
    std::sort(ys.begin(), ys.end());
    std::vector<KmPoint> curve{{0.0, 1.0}};
    double survival = 1.0;
    for (const auto& [t, d] : events) {
        const auto at_risk =
            static_cast<double>(ys.end() - std::lower_bound(ys.begin(), ys.end(), t));
        survival *= 1.0 - static_cast<double>(d) / at_risk;
        curve.push_back({t, survival});
    }
    return curve;
}

}  // namespace ratefit
