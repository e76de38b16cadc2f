#pragma once
// Rank-based model comparison: Friedman omnibus test, Nemenyi pairwise
// post-hoc stars, and t-based confidence intervals across regions. Critical
// values are tabulated (k <= 10) so the module stays dependency-free and
// deterministic.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// ScoreMatrix — rows are blocks (regions), columns are treatments (models)
// ---------------------------------------------------------------------------

struct ScoreMatrix {
    int n_blocks = 0;  // N regions
    int k = 0;         // models
    std::vector<double> values;  // row-major
    bool higher_is_better = true;

    ScoreMatrix() = default;
    ScoreMatrix(int n, int k_) : n_blocks(n), k(k_), values(std::size_t(n) * k_, 0.0) {}
    [[nodiscard]] double& at(int block, int model) {
        return values[std::size_t(block) * k + model];
    }
    [[nodiscard]] double at(int block, int model) const {
        return values[std::size_t(block) * k + model];
    }
    void validate() const {
        if (n_blocks < 2 || k < 2)
            throw std::invalid_argument("ScoreMatrix: need N >= 2 blocks and k >= 2 models");
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("ScoreMatrix: missing cell");
    }
};

// ---------------------------------------------------------------------------
// Chi-square survival function via the regularized incomplete gamma
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 500; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// regularized upper incomplete gamma Q(a, x)
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_contfrac(a, x);
}

}  // namespace detail

/// P(X >= chi2) for a chi-square variable with df degrees of freedom.
inline double chi2_survival(double chi2, int df) {
    if (df < 1) throw std::invalid_argument("chi2_survival: df must be >= 1");
    return detail::gamma_q(0.5 * df, 0.5 * chi2);
}

// ---------------------------------------------------------------------------
// Ranking helpers — ties receive mean ranks; rank 1 is the best score
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> row_ranks(const std::vector<double>& scores, bool higher_better) {
    const int k = int(scores.size());
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) order[std::size_t(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return higher_better ? scores[std::size_t(a)] > scores[std::size_t(b)]
                             : scores[std::size_t(a)] < scores[std::size_t(b)];
    });
    std::vector<double> ranks(std::size_t(k), 0.0);
    int i = 0;
    while (i < k) {
        int j = i;
        while (j + 1 < k &&
               scores[std::size_t(order[std::size_t(j + 1)])] == scores[std::size_t(order[std::size_t(i)])])
            ++j;
        const double mean_rank = 0.5 * (i + j) + 1.0;
        for (int t = i; t <= j; ++t) ranks[std::size_t(order[std::size_t(t)])] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

inline std::vector<double> mean_ranks(const ScoreMatrix& m) {
    std::vector<double> mean(std::size_t(m.k), 0.0);
    std::vector<double> row(static_cast<std::size_t>(m.k));
    for (int b = 0; b < m.n_blocks; ++b) {
        for (int j = 0; j < m.k; ++j) row[std::size_t(j)] = m.at(b, j);
        const auto r = row_ranks(row, m.higher_is_better);
        for (int j = 0; j < m.k; ++j) mean[std::size_t(j)] += r[std::size_t(j)];
    }
    for (double& v : mean) v /= double(m.n_blocks);
    return mean;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Friedman test
// ---------------------------------------------------------------------------

struct FriedmanResult {
    double chi2 = 0.0;
    double p = 1.0;
    std::vector<double> mean_ranks;
};

inline FriedmanResult friedman(const ScoreMatrix& m) {
    m.validate();
    FriedmanResult r;
    r.mean_ranks = detail::mean_ranks(m);
    const double k = m.k, n = m.n_blocks;
    double dev = 0.0;
    for (double rank : r.mean_ranks) {
        const double d = rank - 0.5 * (k + 1.0);
        dev += d * d;
    }
    r.chi2 = 12.0 * n / (k * (k + 1.0)) * dev;
    r.p = r.chi2 <= 0.0 ? 1.0 : chi2_survival(r.chi2, m.k - 1);
    return r;
}

// ---------------------------------------------------------------------------
// Nemenyi post-hoc test
// ---------------------------------------------------------------------------

// Critical values q_alpha/sqrt(2) of the studentized range (infinite df),
// k = 2..10, frozen from the CDF quadrature; tests cross-check the table.
inline constexpr double nemenyi_crit_005[9] = {1.959964, 2.343701, 2.569032, 2.727774,
                                               2.849705, 2.948320, 3.030878, 3.101730,
                                               3.163684};
inline constexpr double nemenyi_crit_001[9] = {2.575829, 2.913494, 3.113250, 3.254686,
                                               3.363740, 3.452213, 3.526471, 3.590339,
                                               3.646292};
inline constexpr double nemenyi_crit_0001[9] = {3.290527, 3.580402, 3.753891, 3.877599,
                                                3.973468, 4.051548, 4.117291, 4.173985,
                                                4.223766};

/// Significance stars: 0 = ns, 1/2/3 = p < .05 / .01 / .001.
enum class Stars : int { ns = 0, one = 1, two = 2, three = 3 };

inline const char* stars_label(Stars s) {
    switch (s) {
        case Stars::ns: return "ns";
        case Stars::one: return "*";
        case Stars::two: return "**";
        case Stars::three: return "***";
    }
    return "ns";
}

struct NemenyiResult {
    int k = 0;
    std::vector<double> mean_ranks;
    std::vector<Stars> pairwise;  // row-major k x k, diagonal ns

    [[nodiscard]] Stars at(int i, int j) const { return pairwise[std::size_t(i) * k + j]; }
};

/// Pairwise |mean rank difference| / sqrt(k(k+1)/(6N)) against the
/// studentized-range critical values; k must be <= 10 (tabulated).
inline NemenyiResult nemenyi(const ScoreMatrix& m) {
    m.validate();
    if (m.k > 10) throw std::invalid_argument("nemenyi: tabulated critical values cover k <= 10");
    NemenyiResult r;
    r.k = m.k;
    r.mean_ranks = detail::mean_ranks(m);
    r.pairwise.assign(std::size_t(m.k) * m.k, Stars::ns);
    const double denom = std::sqrt(double(m.k) * (m.k + 1.0) / (6.0 * m.n_blocks));
    for (int i = 0; i < m.k; ++i)
        for (int j = i + 1; j < m.k; ++j) {
            const double stat =
                std::fabs(r.mean_ranks[std::size_t(i)] - r.mean_ranks[std::size_t(j)]) / denom;
            Stars s = Stars::ns;
            if (stat > nemenyi_crit_0001[m.k - 2])
                s = Stars::three;
            else if (stat > nemenyi_crit_001[m.k - 2])
                s = Stars::two;
            else if (stat > nemenyi_crit_005[m.k - 2])
                s = Stars::one;
            r.pairwise[std::size_t(i) * m.k + j] = s;
            r.pairwise[std::size_t(j) * m.k + i] = s;
        }
    return r;
}

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

// two-sided 95% t quantiles (0.975), df 1..30; 1.959964 beyond
inline constexpr double t_975[30] = {
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004,
    2.262157,  2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905,
    2.109816,  2.100922, 2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
    2.059539,  2.055529, 2.051831, 2.048407, 2.045230, 2.042272};

struct MeanCi {
    double mean = 0.0;
    double lo = 0.0, hi = 0.0;
    double sample_variance = 0.0;  // reported alongside for variance-style error bars
};

/// mean +- t_{n-1,0.975} * s / sqrt(n); only the 95% level is supported.
inline MeanCi mean_ci(const std::vector<double>& values, double level = 0.95) {
    if (level != 0.95) throw std::invalid_argument("mean_ci: only level 0.95 is tabulated");
    const int n = int(values.size());
    if (n < 2) throw std::invalid_argument("mean_ci: need n >= 2");
    MeanCi r;
    for (double v : values) r.mean += v;
    r.mean /= double(n);
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sample_variance = ss / double(n - 1);
    const double s = std::sqrt(r.sample_variance);
    const double t = n - 1 <= 30 ? t_975[std::size_t(n - 2)] : 1.959964;
    const double half = t * s / std::sqrt(double(n));
    r.lo = r.mean - half;
    r.hi = r.mean + half;
    return r;
}

}  // namespace poro
