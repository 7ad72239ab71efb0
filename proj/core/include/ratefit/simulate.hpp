#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ratefit/odds.hpp"
#include "ratefit/strata.hpp"
#include "ratefit/survival.hpp"

namespace ratefit {

enum class Linkage { CommonOddsRatio, CommonProbRatio };

/// Stratified-binomial setting: independent binomial rows per stratum, with
/// the second success probability tied to the baseline through a common odds
/// or probability ratio.
struct BinomialScenario {
    std::vector<std::int64_t> n1;  // per-stratum row sizes
    std::vector<std::int64_t> n2;
    std::vector<double> baseline;  // per-stratum baseline success probability
    int baseline_row = 2;          // row the baseline applies to (1 or 2)
    Linkage linkage = Linkage::CommonOddsRatio;
    double ratio = 2.0;
};

struct CensorLaw {
    enum class Kind { ScaledBeta22, Uniform };
    Kind kind = Kind::Uniform;
    double scale = 4.0;  // upper endpoint of the censoring support
};

/// Two-sample censored survival setting: per-group Weibull event times,
/// per-group censoring laws, then grid discretization.
struct WeibullScenario {
    int n = 200;
    double group1_prob = 0.5;
    double shape1 = 2.0, scale1 = 1.0;
    double shape2 = 1.0, scale2 = 1.0;
    CensorLaw censor1{CensorLaw::Kind::ScaledBeta22, 4.0};
    CensorLaw censor2{CensorLaw::Kind::Uniform, 4.0};
    double grid_step = 0.01;
    double horizon = 4.0;
    CensoringConvention convention = CensoringConvention::CensoredLate;
    std::vector<double> basis_breakpoints{1.0};  // empty = constant covariate
};

struct ScenarioSpec {
    std::string name;
    std::variant<BinomialScenario, WeibullScenario> family;
    std::uint64_t seed = 20240801;
    int replicates = 2000;
};

/// Bundled scenarios: table3-setting1, table3-setting2, tableS1-largeTables,
/// tableS1-sparseTables, table5-fine, table5-coarse.
ScenarioSpec builtin_scenario(const std::string& name);
/// key=value scenario format ('#' comments, blank lines ignored).
ScenarioSpec parse_scenario(std::istream& in);

/// True per-stratum success probabilities implied by the linkage; throws
/// InvalidProbability if the linkage leaves (0,1).
std::vector<TrueProbabilities> true_probabilities(const BinomialScenario& scenario);

/// Deterministic per-replicate random stream: the engine is seeded by a
/// counter-based hash of (seed, replicate), so replicates can be generated in
/// any order, or in parallel, with identical output. All samplers are built
/// on a single uniform to stay implementation-independent.
class ReplicateRng {
public:
    ReplicateRng(std::uint64_t seed, std::uint64_t replicate);

    double uniform();  // strictly inside (0, 1)
    std::int64_t binomial(std::int64_t n, double p);
    double weibull(double shape, double scale);  // inverse CDF
    double beta22();                             // median of three uniforms

private:
    std::mt19937_64 rng_;
};

StratifiedDataset generate_tables(const BinomialScenario& scenario, std::uint64_t seed,
                                  std::uint64_t replicate);
std::vector<RawRecord> generate_survival(const WeibullScenario& scenario, std::uint64_t seed,
                                         std::uint64_t replicate);

enum class SimEstimator { MH, WMH, CML, BP, OldBP, Oracle };
std::string estimator_name(SimEstimator e);

struct EstimatorSummary {
    SimEstimator estimator;
    std::string name;
    Vector point;  // Monte Carlo mean of the point estimates
    Vector sd;     // Monte Carlo standard deviation
    Vector bse;    // sqrt of mean model-based variance
    Vector rse;    // sqrt of mean model-robust variance; size 0 if unavailable
    int successes = 0;
    int failures = 0;  // replicates where this estimator threw
};

struct MonteCarloSummary {
    std::vector<EstimatorSummary> rows;
    int replicates = 0;
};

/// Fits every requested estimator on every replicate. Failed replicates are
/// excluded from that estimator's averages and counted.
MonteCarloSummary run_monte_carlo(const ScenarioSpec& spec,
                                  const std::vector<SimEstimator>& estimators);

}  // namespace ratefit
