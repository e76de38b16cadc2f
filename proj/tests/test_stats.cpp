#include <doctest.h>

#include <cmath>

#include <poro/stats.hpp>

#include "test_util.hpp"

using namespace poro;

namespace {

// hand rank-sum Friedman oracle: builds ranks by sorting copies of each row
double friedman_oracle(const ScoreMatrix& m) {
    std::vector<double> rank_sum(std::size_t(m.k), 0.0);
    for (int b = 0; b < m.n_blocks; ++b) {
        std::vector<std::pair<double, int>> row;
        for (int j = 0; j < m.k; ++j)
            row.emplace_back(m.higher_is_better ? -m.at(b, j) : m.at(b, j), j);
        std::sort(row.begin(), row.end());
        int i = 0;
        while (i < m.k) {
            int j = i;
            while (j + 1 < m.k && row[std::size_t(j + 1)].first == row[std::size_t(i)].first) ++j;
            const double r = 0.5 * (i + j) + 1.0;
            for (int t = i; t <= j; ++t) rank_sum[std::size_t(row[std::size_t(t)].second)] += r;
            i = j + 1;
        }
    }
    double acc = 0.0;
    for (int j = 0; j < m.k; ++j) {
        const double mean_rank = rank_sum[std::size_t(j)] / m.n_blocks;
        const double d = mean_rank - 0.5 * (m.k + 1);
        acc += d * d;
    }
    return 12.0 * m.n_blocks / (double(m.k) * (m.k + 1)) * acc;
}

// studentized range CDF at infinite df, by Simpson quadrature; the oracle
// behind the frozen critical-value tables
double srange_cdf(double q, int k) {
    auto Phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846); };
    const double lo = -12.0, hi = 12.0 + q;
    const int n = 24000;
    const double h = (hi - lo) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double z = lo + i * h;
        const double f = phi(z) * std::pow(Phi(z) - Phi(z - q), k - 1);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * f;
    }
    return k * s * h / 3.0;
}

double srange_crit(double alpha, int k) {
    double lo = 0.0, hi = 20.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (srange_cdf(mid, k) < 1.0 - alpha)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi) / std::sqrt(2.0);
}

ScoreMatrix random_matrix(int n, int k, std::uint64_t seed) {
    auto g = testutil::rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    ScoreMatrix m(n, k);
    for (double& v : m.values) v = d(g);
    return m;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("identical columns: chi2 0, p 1, all pairs ns") {
    ScoreMatrix m(4, 3);
    for (int b = 0; b < 4; ++b)
        for (int j = 0; j < 3; ++j) m.at(b, j) = double(b);  // constant rows
    const auto f = friedman(m);
    CHECK(f.chi2 == doctest::Approx(0.0));
    CHECK(f.p == doctest::Approx(1.0));
    const auto nem = nemenyi(m);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(nem.at(i, j) == Stars::ns);
}

TEST_CASE("Friedman equals the hand-ranked oracle") {
    // fixed pattern: column 3 always last, columns 1-2 alternate
    ScoreMatrix m(4, 3);
    const double rows[4][3] = {{3, 2, 1}, {2, 3, 1}, {3, 2, 1}, {2, 3, 1}};
    for (int b = 0; b < 4; ++b)
        for (int j = 0; j < 3; ++j) m.at(b, j) = rows[b][j];
    const auto f = friedman(m);
    CHECK(std::fabs(f.chi2 - friedman_oracle(m)) < 1e-12);

    for (int trial = 0; trial < 10; ++trial) {
        const auto r = random_matrix(5, 4, 4000 + std::uint64_t(trial));
        CHECK(std::fabs(friedman(r).chi2 - friedman_oracle(r)) < 1e-12);
    }
}

TEST_CASE("chi-square survival function reference points") {
    CHECK(chi2_survival(5.991, 2) == doctest::Approx(0.05).epsilon(2e-3));
    CHECK(std::fabs(chi2_survival(5.991, 2) - 0.05) < 1e-4);
    CHECK(chi2_survival(0.0, 2) == doctest::Approx(1.0));
    CHECK(chi2_survival(3.841, 1) == doctest::Approx(0.05).epsilon(2e-3));
}

TEST_CASE("Friedman is invariant under monotone per-row transforms") {
    const auto m = random_matrix(5, 4, 777);
    ScoreMatrix t = m;
    for (double& v : t.values) v = std::exp(3.0 * v) + 1.0;  // strictly monotone
    CHECK(friedman(m).chi2 == doctest::Approx(friedman(t).chi2));
    const auto n1 = nemenyi(m);
    const auto n2 = nemenyi(t);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(n1.at(i, j) == n2.at(i, j));
}

TEST_CASE("orientation flip with negated scores gives identical results") {
    auto m = random_matrix(6, 3, 888);
    m.higher_is_better = true;
    ScoreMatrix neg = m;
    neg.higher_is_better = false;
    for (double& v : neg.values) v = -v;
    CHECK(friedman(m).chi2 == doctest::Approx(friedman(neg).chi2));
    const auto n1 = nemenyi(m);
    const auto n2 = nemenyi(neg);
    for (std::size_t i = 0; i < n1.pairwise.size(); ++i) CHECK(n1.pairwise[i] == n2.pairwise[i]);
    for (int j = 0; j < 3; ++j)
        CHECK(n1.mean_ranks[std::size_t(j)] == doctest::Approx(n2.mean_ranks[std::size_t(j)]));
}

TEST_CASE("frozen critical values match the quadrature oracle") {
    const double alphas[3] = {0.05, 0.01, 0.001};
    for (int k = 2; k <= 10; ++k) {
        CHECK(std::fabs(nemenyi_crit_005[k - 2] - srange_crit(alphas[0], k)) < 1e-3);
        CHECK(std::fabs(nemenyi_crit_001[k - 2] - srange_crit(alphas[1], k)) < 1e-3);
        CHECK(std::fabs(nemenyi_crit_0001[k - 2] - srange_crit(alphas[2], k)) < 1e-3);
    }
    // k=2 at alpha 0.05 is the plain normal quantile 1.96
    CHECK(nemenyi_crit_005[0] == doctest::Approx(1.959964).epsilon(1e-5));
}

TEST_CASE("critical difference plug-in: rank gap 2.2 at k=4, N=5 earns one star") {
    // CD = 2.569 * sqrt(4*5/30) = 2.0977; a gap of 2.2 exceeds it
    const double cd = 2.569032 * std::sqrt(4.0 * 5.0 / (6.0 * 5.0));
    CHECK(cd == doctest::Approx(2.098).epsilon(1e-3));

    // build a 5x4 matrix with mean ranks (1.2, 3.4, 2.7, 2.7): gap 2.2 on (0,1)
    ScoreMatrix m(5, 4);
    const int orders[5][4] = {
        {1, 4, 3, 2}, {1, 4, 2, 3}, {1, 3, 4, 2}, {1, 4, 2, 3}, {2, 2, 2, 2},
    };
    // lower rank = better; encode as scores where smaller is better
    m.higher_is_better = false;
    for (int b = 0; b < 5; ++b)
        for (int j = 0; j < 4; ++j) m.at(b, j) = orders[b][j];
    const auto nem = nemenyi(m);
    const double gap = std::fabs(nem.mean_ranks[0] - nem.mean_ranks[1]);
    CHECK(gap == doctest::Approx(2.2));
    CHECK(nem.at(0, 1) == Stars::one);
    // the (0,2)/(0,3) gaps are 1.5 < CD: not significant
    CHECK(nem.at(0, 2) == Stars::ns);
}

TEST_CASE("k=2 reduces to a two-treatment comparison consistent with Friedman") {
    // all 6 blocks prefer column 0
    ScoreMatrix m(6, 2);
    m.higher_is_better = false;
    for (int b = 0; b < 6; ++b) {
        m.at(b, 0) = 1.0;
        m.at(b, 1) = 2.0;
    }
    const auto f = friedman(m);
    const auto nem = nemenyi(m);
    // statistic = |1-2| / sqrt(2*3/36) = 2.449; crit 1.96 -> significant both ways
    CHECK(f.p < 0.05);
    CHECK(nem.at(0, 1) != Stars::ns);

    // and a balanced matrix stays ns
    ScoreMatrix bal(6, 2);
    for (int b = 0; b < 6; ++b) {
        bal.at(b, 0) = b % 2 ? 1.0 : 2.0;
        bal.at(b, 1) = b % 2 ? 2.0 : 1.0;
    }
    CHECK(friedman(bal).p > 0.9);
    CHECK(nemenyi(bal).at(0, 1) == Stars::ns);
}

TEST_CASE("mean_ci: hand t-interval and degenerate width") {
    const auto ci = mean_ci({1.0, 3.0});
    CHECK(ci.mean == doctest::Approx(2.0));
    // s = sqrt(2), half-width = 12.706 * sqrt(2)/sqrt(2) = 12.706
    CHECK(ci.hi - ci.mean == doctest::Approx(12.706205).epsilon(1e-6));
    CHECK(ci.mean - ci.lo == doctest::Approx(12.706205).epsilon(1e-6));
    CHECK(ci.sample_variance == doctest::Approx(2.0));

    const auto flat = mean_ci({4.0, 4.0, 4.0, 4.0});
    CHECK(flat.lo == doctest::Approx(4.0));
    CHECK(flat.hi == doctest::Approx(4.0));

    const auto wide = mean_ci({1.0, 2.0, 3.0, 4.0, 5.0});
    CHECK(wide.mean == doctest::Approx(3.0));
    CHECK(wide.hi > wide.mean);
    CHECK(wide.lo < wide.mean);
    CHECK(wide.hi - wide.mean == doctest::Approx(wide.mean - wide.lo));

    CHECK_THROWS(mean_ci({1.0}));
    CHECK_THROWS(mean_ci({1.0, 2.0}, 0.99));
}

TEST_CASE("validation rejects degenerate matrices") {
    ScoreMatrix tiny(1, 3);
    CHECK_THROWS(friedman(tiny));
    ScoreMatrix onecol(4, 1);
    CHECK_THROWS(friedman(onecol));
    ScoreMatrix big(3, 12);
    CHECK_THROWS(nemenyi(big));  // beyond the tabulated k
}

}  // TEST_SUITE
