#include "ratefit/strata.hpp"

#include <numeric>

namespace ratefit {

StratumTable::StratumTable(std::int64_t n11, std::int64_t n12, std::int64_t n21, std::int64_t n22)
    : n11_(n11), n12_(n12), n21_(n21), n22_(n22) {
    if (n11 < 0 || n12 < 0 || n21 < 0 || n22 < 0) {
        throw std::invalid_argument("StratumTable: negative count");
    }
    if (n11 + n12 < 1 || n21 + n22 < 1) {
        throw std::invalid_argument("StratumTable: empty factor row");
    }
}

Proportions proportions(const StratumTable& t) {
    const double N1 = static_cast<double>(t.row1_total());
    const double N2 = static_cast<double>(t.row2_total());
    Proportions p;
    p.p11 = static_cast<double>(t.n11()) / N1;
    p.p12 = static_cast<double>(t.n12()) / N1;
    p.p21 = static_cast<double>(t.n21()) / N2;
    p.p22 = static_cast<double>(t.n22()) / N2;
    p.cross_a = p.p11 * p.p22;
    p.cross_b = p.p12 * p.p21;
    return p;
}

StratifiedDataset::StratifiedDataset(std::vector<Stratum> strata) : strata_(std::move(strata)) {
    if (strata_.empty()) {
        throw std::invalid_argument("StratifiedDataset: at least one stratum required");
    }
    const Eigen::Index p = strata_.front().x.size();
    if (p < 1) {
        throw std::invalid_argument("StratifiedDataset: covariate dimension must be >= 1");
    }
    for (const auto& s : strata_) {
        if (s.x.size() != p) {
            throw std::invalid_argument("StratifiedDataset: covariate dimension mismatch");
        }
    }
}

std::int64_t StratifiedDataset::total_count() const {
    std::int64_t n = 0;
    for (const auto& s : strata_) n += s.table.total();
    return n;
}

StratifiedDataset StratifiedDataset::exchange_rows() const {
    std::vector<Stratum> out;
    out.reserve(strata_.size());
    for (const auto& s : strata_) out.push_back({s.table.exchange_rows(), s.x});
    return StratifiedDataset(std::move(out));
}

StratifiedDataset StratifiedDataset::exchange_columns() const {
    std::vector<Stratum> out;
    out.reserve(strata_.size());
    for (const auto& s : strata_) out.push_back({s.table.exchange_columns(), s.x});
    return StratifiedDataset(std::move(out));
}

DatasetDiagnostics validate_dataset(const StratifiedDataset& ds) {
    DatasetDiagnostics diag;
    const Eigen::Index p = ds.dim();

    Matrix design(static_cast<Eigen::Index>(ds.size()), p);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        design.row(static_cast<Eigen::Index>(j)) = ds[j].x.transpose();
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    diag.design_rank = qr.rank();

    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& t = ds[j].table;
        if (t.row1_total() < 2 || t.row2_total() < 2) {
            diag.small_row_strata.push_back(j);
            diag.warnings.push_back("stratum " + std::to_string(j) +
                                    ": finite-sample variance correction unavailable");
        }
        if (t.successes() == 0 || t.successes() == t.total()) {
            diag.degenerate_strata.push_back(j);
        }
    }

    if (diag.design_rank < p) {
        throw FitError(FitErrorCode::RankDeficient,
                       "design rank " + std::to_string(diag.design_rank) + " < p " +
                           std::to_string(p));
    }
    return diag;
}

}  // namespace ratefit
