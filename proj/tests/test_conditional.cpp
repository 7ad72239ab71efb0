#include <doctest.h>

#include <cmath>
#include <vector>

#include "ratefit/conditional.hpp"
#include "test_util.hpp"

using namespace ratefit;

namespace {

// Direct enumeration of the noncentral hypergeometric moments using exact
// binomial coefficients on small supports.
NchtMoments brute_force_moments(const HypergeometricMargin& m, double psi) {
    auto choose = [](std::int64_t n, std::int64_t k) {
        double c = 1.0;
        for (std::int64_t i = 0; i < k; ++i) {
            c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
        return c;
    };
    double norm = 0.0, mean = 0.0, second = 0.0;
    for (std::int64_t k = m.support_min(); k <= m.support_max(); ++k) {
        const double w = choose(m.n1, k) * choose(m.n2, m.s - k) *
                         std::pow(psi, static_cast<double>(k));
        norm += w;
        mean += w * static_cast<double>(k);
        second += w * static_cast<double>(k * k);
    }
    mean /= norm;
    second /= norm;
    return {mean, second - mean * mean};
}

}  // namespace

TEST_CASE("noncentral hypergeometric moments match direct enumeration") {
    const std::vector<HypergeometricMargin> margins = {
        {3, 4, 5}, {1, 2, 2}, {6, 6, 3}, {4, 10, 2}, {7, 8, 8}};
    for (const auto& m : margins) {
        for (const double psi : {0.2, 0.7, 1.0, 1.9, 6.0}) {
            const NchtMoments exact = brute_force_moments(m, psi);
            const NchtMoments got = ncht_moments(m, psi);
            CHECK(got.mean == doctest::Approx(exact.mean).epsilon(1e-12));
            CHECK(got.variance == doctest::Approx(exact.variance).epsilon(1e-12));
        }
    }
}

TEST_CASE("central case reduces to the hypergeometric mean n1 s / N") {
    const HypergeometricMargin m(5, 7, 4);
    const NchtMoments got = ncht_moments(m, 1.0);
    CHECK(got.mean == doctest::Approx(7.0 * 5.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("conditional mean is strictly increasing in psi on nondegenerate margins") {
    const HypergeometricMargin m(4, 6, 5);
    double prev = ncht_moments(m, 0.1).mean;
    for (double psi = 0.3; psi < 8.0; psi += 0.4) {
        const double mean = ncht_moments(m, psi).mean;
        CHECK(mean > prev);
        prev = mean;
    }
}

TEST_CASE("moments stay finite for extreme odds ratios") {
    const HypergeometricMargin m(10, 12, 9);
    for (const double psi : {1e-12, 1e12}) {
        const NchtMoments got = ncht_moments(m, psi);
        CHECK(std::isfinite(got.mean));
        CHECK(std::isfinite(got.variance));
        CHECK(got.variance >= 0.0);
    }
    CHECK(ncht_moments(m, 1e12).mean == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(ncht_moments(m, 1e-12).mean == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single-table conditional likelihood has a known root") {
    // For the table (2,1,1,2) the score equation reduces to a cubic in psi
    // whose relevant root has log 1.13316913536069204.
    std::vector<Stratum> strata;
    strata.push_back({StratumTable(2, 1, 1, 2), Vector::Ones(1)});
    const FitResult fit = fit_conditional(StratifiedDataset(std::move(strata)));
    CHECK(fit.converged);
    CHECK(fit.estimate(0) == doctest::Approx(1.13316913536069204).epsilon(1e-10));
    CHECK_FALSE(fit.cov_model_robust.has_value());
    // inverse conditional information is positive
    CHECK(fit.cov_model_based(0, 0) > 0.0);
}

TEST_CASE("degenerate strata do not move the conditional estimate") {
    std::vector<Stratum> strata;
    strata.push_back({StratumTable(2, 1, 1, 2), Vector::Ones(1)});
    const FitResult base = fit_conditional(StratifiedDataset(strata));
    strata.push_back({StratumTable(2, 0, 3, 0), Vector::Ones(1)});  // all successes
    strata.push_back({StratumTable(0, 4, 0, 1), Vector::Ones(1)});  // no successes
    const FitResult padded = fit_conditional(StratifiedDataset(std::move(strata)));
    CHECK(padded.estimate(0) == doctest::Approx(base.estimate(0)).epsilon(1e-12));
    CHECK(padded.cov_model_based(0, 0) ==
          doctest::Approx(base.cov_model_based(0, 0)).epsilon(1e-12));
}

TEST_CASE("all successes on one margin boundary raise Separation") {
    std::vector<Stratum> strata;
    strata.push_back({StratumTable(2, 1, 0, 3), Vector::Ones(1)});
    strata.push_back({StratumTable(3, 2, 0, 4), Vector::Ones(1)});
    bool threw = false;
    try {
        fit_conditional(StratifiedDataset(std::move(strata)));
    } catch (const FitError& e) {
        threw = true;
        CHECK(e.code() == FitErrorCode::Separation);
    }
    CHECK(threw);
}

TEST_CASE("conditional score vanishes at the estimate") {
    auto g = testutil::rng(21);
    for (int rep = 0; rep < 10; ++rep) {
        const StratifiedDataset ds = testutil::random_dataset(g);
        FitResult fit;
        try {
            fit = fit_conditional(ds);
        } catch (const FitError&) {
            continue;  // boundary configuration; covered above
        }
        const double psi = std::exp(fit.estimate(0));
        double score = 0.0;
        for (const auto& s : ds.strata()) {
            const HypergeometricMargin m = HypergeometricMargin::of(s.table);
            if (m.degenerate()) continue;
            score += static_cast<double>(s.table.n11()) - ncht_moments(m, psi).mean;
        }
        CHECK(std::abs(score) < 1e-8);
    }
}
