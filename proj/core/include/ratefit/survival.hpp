#pragma once

#include <vector>

#include "ratefit/odds.hpp"
#include "ratefit/ratio.hpp"
#include "ratefit/strata.hpp"

namespace ratefit {

/// One subject after discretization: observed time on the grid, event flag,
/// group label 1 or 2.
struct SurvivalRecord {
    double y;
    int event;
    int group;
};

/// One subject in raw (continuous or fine-scaled) time.
struct RawRecord {
    double time;
    int event;
    int group;
};

/// Strictly increasing positive breakpoints t_1 < ... < t_J with implicit
/// t_0 = 0.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points);
    static TimeGrid regular(double step, double max_time);

    const std::vector<double>& points() const { return points_; }
    double horizon() const { return points_.back(); }
    std::size_t size() const { return points_.size(); }

private:
    std::vector<double> points_;
};

/// Placement of interval-censored withdrawal times: at the left grid point
/// (excluded from the interval's risk set) or at the right one (included).
enum class CensoringConvention { CensoredEarly, CensoredLate };

/// Maps raw records onto the grid. Events in (t_{j-1}, t_j] become (t_j, 1).
/// Censorings strictly inside an interval go to its left or right endpoint by
/// convention; censorings exactly at a grid point stay there under both.
/// Raw times beyond the horizon are administratively censored at t_J.
std::vector<SurvivalRecord> discretize(const std::vector<RawRecord>& records, const TimeGrid& grid,
                                       CensoringConvention convention);

/// Piecewise-constant time-function covariates, evaluated by binary search.
/// Piece i covers (b_{i-1}, b_i]; the last piece extends to infinity.
class TimeBasis {
public:
    TimeBasis(std::vector<double> breakpoints, std::vector<Vector> values);
    static TimeBasis constant();
    /// x(t) = (1, 1{b_1 < t <= b_2}, ..., 1{t > b_last}).
    static TimeBasis indicator_pieces(const std::vector<double>& breakpoints);

    Vector operator()(double t) const;
    Eigen::Index dim() const { return values_.front().size(); }

private:
    std::vector<double> breakpoints_;
    std::vector<Vector> values_;
};

enum class PanelStrata { EventTimesOnly, AllGridPoints };

/// Risk-set tables over time: stratum j is the 2x2 table at time t_j with
/// rows = groups and columns = event / no event within the risk set.
struct RiskSetPanel {
    StratifiedDataset dataset;
    std::vector<double> times;
    std::vector<SurvivalRecord> records;
    std::int64_t n_subjects = 0;
    std::size_t truncated_strata = 0;  // strata dropped once a group's risk set emptied
};

RiskSetPanel build_panel(const std::vector<SurvivalRecord>& records, const TimeBasis& basis,
                         PanelStrata mode = PanelStrata::EventTimesOnly,
                         const TimeGrid* grid = nullptr);

/// Per-time influence contributions of one subject for the ratio-model score
/// (three-term form; the third term carries model misspecification and is
/// dropped for the model-correct variants).
std::vector<double> influence_h(const SurvivalRecord& record, const RiskSetPanel& panel,
                                const Vector& gamma, bool include_third_term = true);
/// Two-term Lin-Wei form; agrees with influence_h pointwise.
std::vector<double> influence_h_lin_wei(const SurvivalRecord& record, const RiskSetPanel& panel,
                                        const Vector& gamma);
/// Odds-model analogue of influence_h.
std::vector<double> influence_g(const SurvivalRecord& record, const RiskSetPanel& panel,
                                const Vector& beta, bool include_third_term = true);

enum class SurvivalCovKind {
    RatioRobust,
    RatioModelBased,
    RatioModelCorrect,
    OddsRobust,
    OddsModelBased,
    OddsModelCorrect,
    Legacy,
};

/// Covariance of the fitted coefficients on a panel. Robust forms accumulate
/// subject-level outer products of the summed influence contributions,
/// capturing the correlation of risk-set tables over time.
Matrix cov_survival(const RiskSetPanel& panel, const Vector& estimate, SurvivalCovKind kind);

/// Breslow-Peto fit on the panel with survival-specific covariances
/// (model-based and subject-level robust).
FitResult fit_survival_ratio(const RiskSetPanel& panel, const SolverConfig& solver = SolverConfig());

/// Weighted (or unweighted) Mantel-Haenszel fit on the panel. The weighted
/// variant gets the survival-specific covariances; the unweighted one keeps
/// the table-level estimators.
FitResult fit_survival_odds(const RiskSetPanel& panel,
                            const OddsWeight& weight = OddsWeight::weighted(),
                            const SolverConfig& solver = SolverConfig());

struct KmPoint {
    double time;
    double survival;
};

/// Kaplan-Meier step-function points for one group, starting at (0, 1).
std::vector<KmPoint> km_curve(const std::vector<SurvivalRecord>& records, int group);

}  // namespace ratefit
