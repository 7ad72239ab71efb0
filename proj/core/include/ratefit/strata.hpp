#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ratefit/errors.hpp"

namespace ratefit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One 2x2 table of counts with fixed row totals. Row 1 / row 2 are the two
/// factor levels; column 1 counts successes. Empty rows are rejected at
/// construction: every formula downstream divides by the row totals.
class StratumTable {
public:
    StratumTable(std::int64_t n11, std::int64_t n12, std::int64_t n21, std::int64_t n22);

    std::int64_t n11() const { return n11_; }
    std::int64_t n12() const { return n12_; }
    std::int64_t n21() const { return n21_; }
    std::int64_t n22() const { return n22_; }
    std::int64_t row1_total() const { return n11_ + n12_; }
    std::int64_t row2_total() const { return n21_ + n22_; }
    std::int64_t total() const { return row1_total() + row2_total(); }
    std::int64_t successes() const { return n11_ + n21_; }

    /// Table with the two factor rows exchanged.
    StratumTable exchange_rows() const { return {n21_, n22_, n11_, n12_}; }
    /// Table with the two response columns exchanged.
    StratumTable exchange_columns() const { return {n12_, n11_, n22_, n21_}; }

private:
    std::int64_t n11_, n12_, n21_, n22_;
};

/// Raw per-row success/failure proportions and their cross products.
struct Proportions {
    double p11, p12, p21, p22;
    double cross_a;  // p11 * p22
    double cross_b;  // p12 * p21
};

Proportions proportions(const StratumTable& table);

struct Stratum {
    StratumTable table;
    Vector x;
};

/// Ordered strata with per-stratum covariate vectors of common dimension.
class StratifiedDataset {
public:
    explicit StratifiedDataset(std::vector<Stratum> strata);

    std::size_t size() const { return strata_.size(); }
    Eigen::Index dim() const { return strata_.front().x.size(); }
    const Stratum& operator[](std::size_t j) const { return strata_[j]; }
    const std::vector<Stratum>& strata() const { return strata_; }
    std::int64_t total_count() const;

    StratifiedDataset exchange_rows() const;
    StratifiedDataset exchange_columns() const;

private:
    std::vector<Stratum> strata_;
};

struct DatasetDiagnostics {
    Eigen::Index design_rank = 0;
    std::vector<std::size_t> small_row_strata;   // N1 < 2 or N2 < 2: finite-sample variance correction unavailable
    std::vector<std::size_t> degenerate_strata;  // all-zero or all-success margins
    std::vector<std::string> warnings;
};

/// Reports design rank and per-stratum warnings. Throws RankDeficient when the
/// covariate design has rank < p.
DatasetDiagnostics validate_dataset(const StratifiedDataset& ds);

struct FitResult {
    Vector estimate;
    Matrix cov_model_based;
    std::optional<Matrix> cov_model_robust;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
};

}  // namespace ratefit
