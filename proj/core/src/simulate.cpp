#include "ratefit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>

#include "ratefit/conditional.hpp"
#include "ratefit/ratio.hpp"

namespace ratefit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

ReplicateRng::ReplicateRng(std::uint64_t seed, std::uint64_t replicate)
    : rng_(splitmix64(splitmix64(seed) ^ splitmix64(replicate + 1))) {}

double ReplicateRng::uniform() {
    // 52-bit grid offset by half a step: never exactly 0 or 1
    return (static_cast<double>(rng_() >> 12) + 0.5) * 0x1.0p-52;
}

std::int64_t ReplicateRng::binomial(std::int64_t n, double p) {
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (uniform() < p) ++count;
    }
    return count;
}

double ReplicateRng::weibull(double shape, double scale) {
    return scale * std::pow(-std::log(uniform()), 1.0 / shape);
}

double ReplicateRng::beta22() {
    double a = uniform(), b = uniform(), c = uniform();
    // median of three uniforms is Beta(2,2)
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

std::vector<TrueProbabilities> true_probabilities(const BinomialScenario& sc) {
    if (sc.n1.size() != sc.n2.size() || sc.n1.size() != sc.baseline.size() || sc.n1.empty()) {
        throw std::invalid_argument("BinomialScenario: inconsistent per-stratum vectors");
    }
    std::vector<TrueProbabilities> out;
    out.reserve(sc.baseline.size());
    for (double b : sc.baseline) {
        double p11 = 0.0, p21 = 0.0;
        if (sc.linkage == Linkage::CommonOddsRatio) {
            if (sc.baseline_row == 2) {
                p21 = b;
                p11 = sc.ratio * b / (1.0 + (sc.ratio - 1.0) * b);
            } else {
                p11 = b;
                p21 = b / (b + sc.ratio * (1.0 - b));
            }
        } else {
            if (sc.baseline_row == 2) {
                p21 = b;
                p11 = sc.ratio * b;
            } else {
                p11 = b;
                p21 = b / sc.ratio;
            }
        }
        if (!(p11 > 0.0 && p11 < 1.0 && p21 > 0.0 && p21 < 1.0)) {
            throw FitError(FitErrorCode::InvalidProbability,
                           "linkage pushes a success probability outside (0,1)");
        }
        out.push_back({p11, p21});
    }
    return out;
}

StratifiedDataset generate_tables(const BinomialScenario& sc, std::uint64_t seed,
                                  std::uint64_t replicate) {
    const std::vector<TrueProbabilities> probs = true_probabilities(sc);
    ReplicateRng rng(seed, replicate);
    std::vector<Stratum> strata;
    strata.reserve(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const std::int64_t n11 = rng.binomial(sc.n1[j], probs[j].p11);
        const std::int64_t n21 = rng.binomial(sc.n2[j], probs[j].p21);
        strata.push_back(
            {StratumTable(n11, sc.n1[j] - n11, n21, sc.n2[j] - n21), Vector::Ones(1)});
    }
    return StratifiedDataset(std::move(strata));
}

namespace {

double draw_censoring(ReplicateRng& rng, const CensorLaw& law) {
    switch (law.kind) {
        case CensorLaw::Kind::ScaledBeta22:
            return law.scale * rng.beta22();
        case CensorLaw::Kind::Uniform:
            return law.scale * rng.uniform();
    }
    return 0.0;
}

}  // namespace

std::vector<RawRecord> generate_survival(const WeibullScenario& sc, std::uint64_t seed,
                                         std::uint64_t replicate) {
    ReplicateRng rng(seed, replicate);
    std::vector<RawRecord> records;
    records.reserve(static_cast<std::size_t>(sc.n));
    for (int i = 0; i < sc.n; ++i) {
        const int group = rng.uniform() < sc.group1_prob ? 1 : 2;
        const double t = group == 1 ? rng.weibull(sc.shape1, sc.scale1)
                                    : rng.weibull(sc.shape2, sc.scale2);
        const double c = draw_censoring(rng, group == 1 ? sc.censor1 : sc.censor2);
        records.push_back({std::min(t, c), t <= c ? 1 : 0, group});
    }
    return records;
}

std::string estimator_name(SimEstimator e) {
    switch (e) {
        case SimEstimator::MH: return "MH";
        case SimEstimator::WMH: return "wMH";
        case SimEstimator::CML: return "CML";
        case SimEstimator::BP: return "BP";
        case SimEstimator::OldBP: return "oldBP";
        case SimEstimator::Oracle: return "oracle";
    }
    return "?";
}

namespace {

struct ReplicateFit {
    Vector point;
    Vector bvar;  // model-based variance diagonal
    Vector rvar;  // model-robust variance diagonal; size 0 if unavailable
};

Vector cov_diag(const Matrix& cov) {
    return cov.diagonal();
}

// One replicate's data, prepared once and shared across estimators.
struct ReplicateData {
    // tables family
    const StratifiedDataset* tables = nullptr;
    const std::vector<TrueProbabilities>* truth = nullptr;
    // survival family
    const RiskSetPanel* panel = nullptr;
};

ReplicateFit fit_one(SimEstimator which, const ReplicateData& data,
                     std::optional<FitResult>& bp_cache) {
    ReplicateFit out;
    if (data.tables != nullptr) {
        const StratifiedDataset& ds = *data.tables;
        switch (which) {
            case SimEstimator::MH:
            case SimEstimator::WMH:
            case SimEstimator::Oracle: {
                const OddsWeight w = which == SimEstimator::MH ? OddsWeight::mantel_haenszel()
                                     : which == SimEstimator::WMH
                                         ? OddsWeight::weighted()
                                         : OddsWeight::optimal_oracle(*data.truth);
                const FitResult fit = fit_odds(ds, w);
                out.point = fit.estimate;
                out.bvar = cov_diag(fit.cov_model_based);
                if (fit.cov_model_robust) out.rvar = cov_diag(*fit.cov_model_robust);
                return out;
            }
            case SimEstimator::CML: {
                const FitResult fit = fit_conditional(ds);
                out.point = fit.estimate;
                out.bvar = cov_diag(fit.cov_model_based);
                return out;
            }
            case SimEstimator::BP:
            case SimEstimator::OldBP: {
                if (!bp_cache) bp_cache = fit_ratio(ds);
                out.point = bp_cache->estimate;
                if (which == SimEstimator::BP) {
                    out.bvar = cov_diag(bp_cache->cov_model_based);
                    if (bp_cache->cov_model_robust) out.rvar = cov_diag(*bp_cache->cov_model_robust);
                } else {
                    out.bvar = cov_diag(cov_ratio(ds, bp_cache->estimate,
                                                  RatioVarianceKind::LegacyInverseHessian));
                }
                return out;
            }
        }
    }
    const RiskSetPanel& panel = *data.panel;
    switch (which) {
        case SimEstimator::MH:
        case SimEstimator::WMH: {
            const FitResult fit = fit_survival_odds(
                panel, which == SimEstimator::MH ? OddsWeight::mantel_haenszel()
                                                 : OddsWeight::weighted());
            out.point = fit.estimate;
            out.bvar = cov_diag(fit.cov_model_based);
            if (fit.cov_model_robust) out.rvar = cov_diag(*fit.cov_model_robust);
            return out;
        }
        case SimEstimator::CML: {
            const FitResult fit = fit_conditional(panel.dataset);
            out.point = fit.estimate;
            out.bvar = cov_diag(fit.cov_model_based);
            return out;
        }
        case SimEstimator::BP:
        case SimEstimator::OldBP: {
            if (!bp_cache) bp_cache = fit_survival_ratio(panel);
            out.point = bp_cache->estimate;
            out.bvar = cov_diag(
                which == SimEstimator::BP
                    ? bp_cache->cov_model_based
                    : cov_survival(panel, bp_cache->estimate, SurvivalCovKind::Legacy));
            if (bp_cache->cov_model_robust) out.rvar = cov_diag(*bp_cache->cov_model_robust);
            return out;
        }
        case SimEstimator::Oracle:
            throw FitError(FitErrorCode::NotApplicable,
                           "oracle weights need stratified-binomial truth");
    }
    throw std::invalid_argument("fit_one: unknown estimator");
}

struct Accumulator {
    Vector sum_point, sum_point_sq, sum_bvar, sum_rvar;
    int n = 0;
    int n_robust = 0;
    int failures = 0;

    void add(const ReplicateFit& fit) {
        if (n == 0) {
            sum_point = Vector::Zero(fit.point.size());
            sum_point_sq = Vector::Zero(fit.point.size());
            sum_bvar = Vector::Zero(fit.point.size());
            sum_rvar = Vector::Zero(fit.point.size());
        }
        sum_point += fit.point;
        sum_point_sq += fit.point.cwiseProduct(fit.point);
        sum_bvar += fit.bvar;
        if (fit.rvar.size() > 0) {
            sum_rvar += fit.rvar;
            ++n_robust;
        }
        ++n;
    }
};

}  // namespace

MonteCarloSummary run_monte_carlo(const ScenarioSpec& spec,
                                  const std::vector<SimEstimator>& estimators) {
    if (spec.replicates < 1) {
        throw std::invalid_argument("run_monte_carlo: replicates must be >= 1");
    }
    std::vector<Accumulator> acc(estimators.size());

    const auto* binomial = std::get_if<BinomialScenario>(&spec.family);
    const auto* weibull = std::get_if<WeibullScenario>(&spec.family);
    std::vector<TrueProbabilities> truth;
    if (binomial != nullptr) truth = true_probabilities(*binomial);

    for (int rep = 0; rep < spec.replicates; ++rep) {
        ReplicateData data;
        std::optional<StratifiedDataset> tables;
        std::optional<RiskSetPanel> panel;
        if (binomial != nullptr) {
            tables = generate_tables(*binomial, spec.seed, static_cast<std::uint64_t>(rep));
            data.tables = &*tables;
            data.truth = &truth;
        } else {
            const std::vector<RawRecord> raw =
                generate_survival(*weibull, spec.seed, static_cast<std::uint64_t>(rep));
            const TimeGrid grid = TimeGrid::regular(weibull->grid_step, weibull->horizon);
            const std::vector<SurvivalRecord> records =
                discretize(raw, grid, weibull->convention);
            const TimeBasis basis = weibull->basis_breakpoints.empty()
                                        ? TimeBasis::constant()
                                        : TimeBasis::indicator_pieces(weibull->basis_breakpoints);
            panel = build_panel(records, basis);
            data.panel = &*panel;
        }
        std::optional<FitResult> bp_cache;
        for (std::size_t e = 0; e < estimators.size(); ++e) {
            try {
                acc[e].add(fit_one(estimators[e], data, bp_cache));
            } catch (const FitError&) {
                ++acc[e].failures;
            }
        }
    }

    MonteCarloSummary summary;
    summary.replicates = spec.replicates;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        EstimatorSummary row;
        row.estimator = estimators[e];
        row.name = estimator_name(estimators[e]);
        row.successes = acc[e].n;
        row.failures = acc[e].failures;
        if (acc[e].n > 0) {
            const double n = static_cast<double>(acc[e].n);
            row.point = acc[e].sum_point / n;
            const Vector mean_sq = acc[e].sum_point_sq / n;
            Vector var = mean_sq - row.point.cwiseProduct(row.point);
            if (acc[e].n > 1) var *= n / (n - 1.0);
            row.sd = var.cwiseMax(0.0).cwiseSqrt();
            row.bse = (acc[e].sum_bvar / n).cwiseMax(0.0).cwiseSqrt();
            if (acc[e].n_robust == acc[e].n) {
                row.rse = (acc[e].sum_rvar / n).cwiseMax(0.0).cwiseSqrt();
            }
        }
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

namespace {

std::map<std::string, std::string> read_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("expected key=value", lineno);
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

// sizes pattern: "16:4x20,4:16x20" -> twenty (16,4) strata then twenty (4,16)
void parse_sizes(const std::string& text, BinomialScenario& sc) {
    std::stringstream ss(text);
    std::string chunk;
    while (std::getline(ss, chunk, ',')) {
        std::int64_t n1 = 0, n2 = 0, count = 1;
        char colon = 0, x = 0;
        std::stringstream cs(chunk);
        cs >> n1 >> colon >> n2;
        if (!cs || colon != ':') {
            throw std::invalid_argument("sizes: expected N1:N2 in '" + chunk + "'");
        }
        if (cs >> x) {
            if (x != 'x' || !(cs >> count) || count < 1) {
                throw std::invalid_argument("sizes: expected N1:N2xCOUNT in '" + chunk + "'");
            }
        }
        for (std::int64_t i = 0; i < count; ++i) {
            sc.n1.push_back(n1);
            sc.n2.push_back(n2);
        }
    }
    if (sc.n1.empty()) {
        throw std::invalid_argument("sizes: no strata");
    }
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string chunk;
    while (std::getline(ss, chunk, ',')) {
        out.push_back(std::stod(chunk));
    }
    return out;
}

CensorLaw parse_censor(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = colon == std::string::npos ? text : text.substr(0, colon);
    CensorLaw law;
    if (kind == "beta22") {
        law.kind = CensorLaw::Kind::ScaledBeta22;
    } else if (kind == "uniform") {
        law.kind = CensorLaw::Kind::Uniform;
    } else {
        throw std::invalid_argument("censoring law must be beta22 or uniform");
    }
    if (colon != std::string::npos) law.scale = std::stod(text.substr(colon + 1));
    return law;
}

}  // namespace

ScenarioSpec parse_scenario(std::istream& in) {
    const auto kv = read_key_values(in);
    const auto get = [&](const std::string& key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    const auto require = [&](const std::string& key) -> const std::string& {
        const auto* v = get(key);
        if (v == nullptr) throw std::invalid_argument("scenario: missing key '" + key + "'");
        return *v;
    };

    ScenarioSpec spec;
    if (const auto* v = get("name")) spec.name = *v;
    if (const auto* v = get("seed")) spec.seed = std::stoull(*v);
    if (const auto* v = get("replicates")) spec.replicates = std::stoi(*v);

    const std::string family = require("family");
    if (family == "stratified-binomial") {
        BinomialScenario sc;
        parse_sizes(require("sizes"), sc);
        const double start = std::stod(require("baseline-start"));
        const double step = std::stod(require("baseline-step"));
        for (std::size_t j = 1; j <= sc.n1.size(); ++j) {
            sc.baseline.push_back(start + step * static_cast<double>(j));
        }
        if (const auto* v = get("baseline-row")) sc.baseline_row = std::stoi(*v);
        if (sc.baseline_row != 1 && sc.baseline_row != 2) {
            throw std::invalid_argument("baseline-row must be 1 or 2");
        }
        const std::string linkage = require("linkage");
        if (linkage == "odds") {
            sc.linkage = Linkage::CommonOddsRatio;
        } else if (linkage == "ratio") {
            sc.linkage = Linkage::CommonProbRatio;
        } else {
            throw std::invalid_argument("linkage must be odds or ratio");
        }
        sc.ratio = std::stod(require("ratio"));
        spec.family = std::move(sc);
    } else if (family == "weibull-two-sample") {
        WeibullScenario sc;
        if (const auto* v = get("n")) sc.n = std::stoi(*v);
        if (const auto* v = get("group1-prob")) sc.group1_prob = std::stod(*v);
        if (const auto* v = get("shape1")) sc.shape1 = std::stod(*v);
        if (const auto* v = get("scale1")) sc.scale1 = std::stod(*v);
        if (const auto* v = get("shape2")) sc.shape2 = std::stod(*v);
        if (const auto* v = get("scale2")) sc.scale2 = std::stod(*v);
        if (const auto* v = get("censor1")) sc.censor1 = parse_censor(*v);
        if (const auto* v = get("censor2")) sc.censor2 = parse_censor(*v);
        if (const auto* v = get("grid-step")) sc.grid_step = std::stod(*v);
        if (const auto* v = get("horizon")) sc.horizon = std::stod(*v);
        if (const auto* v = get("basis")) sc.basis_breakpoints = parse_doubles(*v);
        if (const auto* v = get("convention")) {
            if (*v == "early") {
                sc.convention = CensoringConvention::CensoredEarly;
            } else if (*v == "late") {
                sc.convention = CensoringConvention::CensoredLate;
            } else {
                throw std::invalid_argument("convention must be early or late");
            }
        }
        spec.family = std::move(sc);
    } else {
        throw std::invalid_argument("family must be stratified-binomial or weibull-two-sample");
    }
    return spec;
}

ScenarioSpec builtin_scenario(const std::string& name) {
    ScenarioSpec spec;
    spec.name = name;
    if (name == "table3-setting1" || name == "table3-setting2") {
        BinomialScenario sc;
        for (int j = 0; j < 40; ++j) {
            sc.n1.push_back(j < 20 ? 16 : 4);
            sc.n2.push_back(j < 20 ? 4 : 16);
            sc.baseline.push_back(0.03 + 0.001 * static_cast<double>(j + 1));
        }
        sc.baseline_row = 2;
        sc.linkage =
            name == "table3-setting1" ? Linkage::CommonOddsRatio : Linkage::CommonProbRatio;
        sc.ratio = 2.0;
        spec.family = std::move(sc);
    } else if (name == "tableS1-largeTables" || name == "tableS1-sparseTables") {
        const bool large = name == "tableS1-largeTables";
        BinomialScenario sc;
        const int strata = large ? 4 : 40;
        const double step = large ? 0.2 : 0.02;
        for (int j = 1; j <= strata; ++j) {
            sc.n1.push_back(large ? 30 : 3);
            sc.n2.push_back(large ? 20 : 2);
            sc.baseline.push_back(0.05 + step * static_cast<double>(j));
        }
        sc.baseline_row = 1;  // rule fixes p11; the odds linkage determines p21
        sc.linkage = Linkage::CommonOddsRatio;
        sc.ratio = 2.0;
        spec.family = std::move(sc);
    } else if (name == "table5-fine" || name == "table5-coarse") {
        WeibullScenario sc;
        sc.grid_step = name == "table5-fine" ? 0.01 : 0.2;
        spec.family = std::move(sc);
    } else {
        throw std::invalid_argument("unknown builtin scenario '" + name + "'");
    }
    return spec;
}

}  // namespace ratefit
