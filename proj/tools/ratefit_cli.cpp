// Command-line front end: CSV in, JSON out.
//
// Exit codes: 0 success, 1 input/config errors, 2 typed fit errors.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ratefit/conditional.hpp"
#include "ratefit/io.hpp"
#include "ratefit/odds.hpp"
#include "ratefit/ratio.hpp"
#include "ratefit/simulate.hpp"
#include "ratefit/survival.hpp"

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

json vector_json(const ratefit::Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json matrix_json(const ratefit::Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

ratefit::Vector diag_se(const ratefit::Matrix& cov) {
    return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

json fit_json(const ratefit::FitResult& fit, const ratefit::DatasetDiagnostics& diag) {
    json out;
    out["schema_version"] = kSchemaVersion;
    out["estimate"] = vector_json(fit.estimate);
    out["bse"] = vector_json(diag_se(fit.cov_model_based));
    out["cov_model_based"] = matrix_json(fit.cov_model_based);
    if (fit.cov_model_robust) {
        out["rse"] = vector_json(diag_se(*fit.cov_model_robust));
        out["cov_model_robust"] = matrix_json(*fit.cov_model_robust);
    } else {
        out["rse"] = nullptr;
        out["cov_model_robust"] = nullptr;
    }
    json d;
    d["converged"] = fit.converged;
    d["iterations"] = fit.iterations;
    d["gradient_norm"] = fit.gradient_norm;
    d["design_rank"] = static_cast<long>(diag.design_rank);
    d["warnings"] = diag.warnings;
    out["diagnostics"] = std::move(d);
    return out;
}

void emit(const json& report, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot open output file " + out_path);
        out << report.dump(2) << "\n";
    }
}

struct FitTablesOptions {
    std::string file;
    std::string model = "odds";
    std::string weight = "weighted";
    std::string variance = "default";
    std::string out;
};

ratefit::FitResult dispatch_fit(const ratefit::StratifiedDataset& ds, const std::string& model,
                                const std::string& weight) {
    if (model == "odds") {
        return ratefit::fit_odds(ds, weight == "mh" ? ratefit::OddsWeight::mantel_haenszel()
                                                    : ratefit::OddsWeight::weighted());
    }
    if (model == "ratio") return ratefit::fit_ratio(ds);
    return ratefit::fit_conditional(ds);
}

int run_fit_tables(const FitTablesOptions& opt) {
    std::ifstream in(opt.file);
    if (!in) {
        std::cerr << "error: cannot open " << opt.file << "\n";
        return 1;
    }
    const ratefit::StratifiedDataset ds = ratefit::read_table_csv(in);
    const ratefit::DatasetDiagnostics diag = ratefit::validate_dataset(ds);
    ratefit::FitResult fit = dispatch_fit(ds, opt.model, opt.weight);
    json report = fit_json(fit, diag);
    report["model"] = opt.model;
    if (opt.model == "odds") report["weight"] = opt.weight;
    if (opt.model == "ratio" && opt.variance == "legacy") {
        report["cov_legacy"] = matrix_json(ratefit::cov_ratio(
            ds, fit.estimate, ratefit::RatioVarianceKind::LegacyInverseHessian));
        report["bse_legacy"] = vector_json(diag_se(ratefit::cov_ratio(
            ds, fit.estimate, ratefit::RatioVarianceKind::LegacyInverseHessian)));
    }
    if (opt.model == "ratio" && opt.variance == "pooled-null") {
        const ratefit::LogRankResult lr = ratefit::logrank(ds);
        report["logrank"] = {{"z", lr.z}, {"numerator", lr.numerator}, {"variance", lr.variance}};
    }
    emit(report, opt.out);
    return 0;
}

struct FitSurvivalOptions {
    std::string file;
    std::string model = "ratio";
    std::string weight = "weighted";
    std::string variance = "default";
    std::string convention = "late";
    double grid_step = 0.0;
    std::string breakpoints;  // comma-separated grid, alternative to --grid-step
    std::string basis;        // comma-separated breakpoints of the piecewise basis
    std::string out;
};

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string chunk;
    while (std::getline(ss, chunk, ',')) out.push_back(std::stod(chunk));
    return out;
}

int run_fit_survival(const FitSurvivalOptions& opt) {
    std::ifstream in(opt.file);
    if (!in) {
        std::cerr << "error: cannot open " << opt.file << "\n";
        return 1;
    }
    const std::vector<ratefit::RawRecord> raw = ratefit::read_survival_csv(in);

    std::optional<ratefit::TimeGrid> grid;
    if (!opt.breakpoints.empty()) {
        grid.emplace(parse_csv_doubles(opt.breakpoints));
    } else if (opt.grid_step > 0.0) {
        double max_time = 0.0;
        for (const auto& r : raw) max_time = std::max(max_time, r.time);
        grid = ratefit::TimeGrid::regular(
            opt.grid_step, std::ceil(max_time / opt.grid_step) * opt.grid_step);
    } else {
        // no grouping requested: every distinct time is its own grid point
        std::vector<double> points;
        for (const auto& r : raw) {
            if (r.time > 0.0) points.push_back(r.time);
        }
        std::sort(points.begin(), points.end());
        points.erase(std::unique(points.begin(), points.end()), points.end());
        grid.emplace(std::move(points));
    }

    const auto convention = opt.convention == "early"
                                ? ratefit::CensoringConvention::CensoredEarly
                                : ratefit::CensoringConvention::CensoredLate;
    const std::vector<ratefit::SurvivalRecord> records =
        ratefit::discretize(raw, *grid, convention);
    const ratefit::TimeBasis basis =
        opt.basis.empty() ? ratefit::TimeBasis::constant()
                          : ratefit::TimeBasis::indicator_pieces(parse_csv_doubles(opt.basis));
    const ratefit::RiskSetPanel panel = ratefit::build_panel(records, basis);

    ratefit::FitResult fit =
        opt.model == "ratio" ? ratefit::fit_survival_ratio(panel)
        : opt.model == "odds"
            ? ratefit::fit_survival_odds(panel,
                                         opt.weight == "mh"
                                             ? ratefit::OddsWeight::mantel_haenszel()
                                             : ratefit::OddsWeight::weighted())
            : ratefit::fit_conditional(panel.dataset);

    json report = fit_json(fit, ratefit::validate_dataset(panel.dataset));
    report["model"] = opt.model;
    if (opt.model == "odds") report["weight"] = opt.weight;
    if (opt.model == "ratio" && opt.variance == "legacy") {
        const ratefit::Matrix legacy =
            ratefit::cov_survival(panel, fit.estimate, ratefit::SurvivalCovKind::Legacy);
        report["cov_legacy"] = matrix_json(legacy);
        report["bse_legacy"] = vector_json(diag_se(legacy));
    }
    if (opt.model == "ratio" && opt.variance == "pooled-null") {
        const ratefit::LogRankResult lr = ratefit::logrank(panel.dataset);
        report["logrank"] = {{"z", lr.z}, {"numerator", lr.numerator}, {"variance", lr.variance}};
    }

    json panel_info;
    panel_info["strata"] = panel.dataset.size();
    panel_info["truncated_strata"] = panel.truncated_strata;
    panel_info["subjects"] = panel.n_subjects;
    std::int64_t events1 = 0, events2 = 0;
    for (const auto& s : panel.dataset.strata()) {
        events1 += s.table.n11();
        events2 += s.table.n21();
    }
    panel_info["events_group1"] = events1;
    panel_info["events_group2"] = events2;
    report["panel"] = std::move(panel_info);

    json curves;
    for (int group : {1, 2}) {
        json curve = json::array();
        for (const auto& point : ratefit::km_curve(records, group)) {
            curve.push_back({point.time, point.survival});
        }
        curves["group" + std::to_string(group)] = std::move(curve);
    }
    report["km_curves"] = std::move(curves);

    emit(report, opt.out);
    return 0;
}

struct SimulateOptions {
    std::string scenario_file;
    std::string builtin;
    std::string estimators = "MH,wMH,CML,BP,oldBP";
    std::optional<std::uint64_t> seed;
    std::optional<int> replicates;
    std::string out;
    std::string csv_out;
};

std::vector<ratefit::SimEstimator> parse_estimators(const std::string& text) {
    std::vector<ratefit::SimEstimator> out;
    std::stringstream ss(text);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name == "MH") out.push_back(ratefit::SimEstimator::MH);
        else if (name == "wMH") out.push_back(ratefit::SimEstimator::WMH);
        else if (name == "CML") out.push_back(ratefit::SimEstimator::CML);
        else if (name == "BP") out.push_back(ratefit::SimEstimator::BP);
        else if (name == "oldBP") out.push_back(ratefit::SimEstimator::OldBP);
        else if (name == "oracle") out.push_back(ratefit::SimEstimator::Oracle);
        else throw std::invalid_argument("unknown estimator '" + name + "'");
    }
    if (out.empty()) throw std::invalid_argument("no estimators requested");
    return out;
}

int run_simulate(const SimulateOptions& opt) {
    ratefit::ScenarioSpec spec;
    if (!opt.builtin.empty()) {
        spec = ratefit::builtin_scenario(opt.builtin);
    } else {
        std::ifstream in(opt.scenario_file);
        if (!in) {
            std::cerr << "error: cannot open " << opt.scenario_file << "\n";
            return 1;
        }
        spec = ratefit::parse_scenario(in);
    }
    if (opt.seed) spec.seed = *opt.seed;
    if (opt.replicates) spec.replicates = *opt.replicates;

    const ratefit::MonteCarloSummary summary =
        ratefit::run_monte_carlo(spec, parse_estimators(opt.estimators));

    json report;
    report["schema_version"] = kSchemaVersion;
    report["scenario"] = spec.name;
    report["seed"] = spec.seed;
    report["replicates"] = summary.replicates;
    json rows = json::array();
    for (const auto& row : summary.rows) {
        json r;
        r["estimator"] = row.name;
        r["successes"] = row.successes;
        r["failures"] = row.failures;
        r["point"] = row.successes > 0 ? vector_json(row.point) : json(nullptr);
        r["sd"] = row.successes > 0 ? vector_json(row.sd) : json(nullptr);
        r["bse"] = row.successes > 0 ? vector_json(row.bse) : json(nullptr);
        r["rse"] = row.rse.size() > 0 ? vector_json(row.rse) : json(nullptr);
        rows.push_back(std::move(r));
    }
    report["estimators"] = std::move(rows);
    emit(report, opt.out);

    if (!opt.csv_out.empty()) {
        std::ofstream csv(opt.csv_out);
        if (!csv) throw std::runtime_error("cannot open output file " + opt.csv_out);
        csv << "estimator,coefficient,point,sd,bse,rse,failures\n";
        for (const auto& row : summary.rows) {
            for (Eigen::Index i = 0; i < row.point.size(); ++i) {
                csv << row.name << ',' << i << ',' << ratefit::format_double(row.point(i)) << ','
                    << ratefit::format_double(row.sd(i)) << ','
                    << ratefit::format_double(row.bse(i)) << ',';
                if (row.rse.size() > 0) csv << ratefit::format_double(row.rse(i));
                csv << ',' << row.failures << "\n";
            }
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Odds-ratio, probability-ratio, and discrete-time hazard inference"};
    app.require_subcommand(1);

    FitTablesOptions tables_opt;
    CLI::App* fit_tables = app.add_subcommand("fit-tables", "Fit stratified 2x2 tables from CSV");
    fit_tables->add_option("file", tables_opt.file, "CSV: stratum_id,n11,n12,n21,n22,x1[,...]")
        ->required();
    fit_tables->add_option("--model", tables_opt.model, "odds | ratio | conditional")
        ->check(CLI::IsMember({"odds", "ratio", "conditional"}));
    fit_tables->add_option("--weight", tables_opt.weight, "mh | weighted (odds model)")
        ->check(CLI::IsMember({"mh", "weighted"}));
    fit_tables->add_option("--variance", tables_opt.variance,
                           "default | legacy | pooled-null (ratio model extras)")
        ->check(CLI::IsMember({"default", "legacy", "pooled-null"}));
    fit_tables->add_option("--out", tables_opt.out, "write JSON report here (default stdout)");

    FitSurvivalOptions surv_opt;
    CLI::App* fit_survival =
        app.add_subcommand("fit-survival", "Fit two-sample survival data from CSV");
    fit_survival->add_option("file", surv_opt.file, "CSV: time,status,group")->required();
    fit_survival->add_option("--model", surv_opt.model, "ratio | odds | conditional")
        ->check(CLI::IsMember({"ratio", "odds", "conditional"}));
    fit_survival->add_option("--weight", surv_opt.weight, "mh | weighted (odds model)")
        ->check(CLI::IsMember({"mh", "weighted"}));
    fit_survival->add_option("--variance", surv_opt.variance,
                             "default | legacy | pooled-null (ratio model extras)")
        ->check(CLI::IsMember({"default", "legacy", "pooled-null"}));
    fit_survival->add_option("--grid-step", surv_opt.grid_step,
                             "regular grid step for discretization");
    fit_survival->add_option("--breakpoints", surv_opt.breakpoints,
                             "explicit comma-separated grid points");
    fit_survival->add_option("--convention", surv_opt.convention, "early | late censoring")
        ->check(CLI::IsMember({"early", "late"}));
    fit_survival->add_option("--basis", surv_opt.basis,
                             "comma-separated breakpoints of the piecewise-constant basis");
    fit_survival->add_option("--out", surv_opt.out, "write JSON report here (default stdout)");

    SimulateOptions sim_opt;
    CLI::App* simulate = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
    simulate->add_option("--scenario", sim_opt.scenario_file, "key=value scenario file");
    simulate->add_option("--builtin", sim_opt.builtin,
                         "bundled scenario name (e.g. table3-setting1)");
    simulate->add_option("--estimators", sim_opt.estimators, "comma list: MH,wMH,CML,BP,oldBP,oracle");
    simulate->add_option("--seed", sim_opt.seed, "override scenario seed");
    simulate->add_option("--replicates", sim_opt.replicates, "override replicate count");
    simulate->add_option("--out", sim_opt.out, "write JSON summary here (default stdout)");
    simulate->add_option("--csv", sim_opt.csv_out, "also write a CSV summary table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_tables->parsed()) return run_fit_tables(tables_opt);
        if (fit_survival->parsed()) return run_fit_survival(surv_opt);
        if (simulate->parsed()) {
            if (sim_opt.builtin.empty() == sim_opt.scenario_file.empty()) {
                std::cerr << "error: give exactly one of --scenario or --builtin\n";
                return 1;
            }
            return run_simulate(sim_opt);
        }
    } catch (const ratefit::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const ratefit::FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
