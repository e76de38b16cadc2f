#include <doctest.h>

#include <cmath>
#include <queue>

#include <poro/segment.hpp>

#include "test_util.hpp"

using namespace poro;

namespace {

// Independent exhaustive between-class-variance search: per candidate
// partition the class stats are recomputed by direct summation (no prefix
// sums), so this is a genuinely separate route from the implementation.
std::vector<double> multi_otsu_oracle(const std::vector<float>& values, int classes, int bins) {
    double lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, double(v));
        hi = std::max(hi, double(v));
    }
    std::vector<double> hist(std::size_t(bins), 0.0);
    for (float v : values) {
        int b = int((v - lo) / (hi - lo) * bins);
        b = std::min(b, bins - 1);
        hist[std::size_t(b)] += 1.0;
    }
    const double bw = (hi - lo) / bins;
    auto center = [&](int b) { return lo + (b + 0.5) * bw; };
    double total_w = 0.0, total_m = 0.0;
    for (int b = 0; b < bins; ++b) {
        total_w += hist[std::size_t(b)];
        total_m += hist[std::size_t(b)] * center(b);
    }
    const double mean = total_m / total_w;

    auto bcv_direct = [&](const std::vector<int>& cuts) {
        double v = 0.0;
        int from = 0;
        for (std::size_t c = 0; c <= cuts.size(); ++c) {
            const int to = c < cuts.size() ? cuts[c] : bins - 1;
            double w = 0.0, m = 0.0;
            for (int b = from; b <= to; ++b) {
                w += hist[std::size_t(b)];
                m += hist[std::size_t(b)] * center(b);
            }
            if (w > 0) {
                const double d = m / w - mean;
                v += w * d * d;
            }
            from = to + 1;
        }
        return v;
    };

    std::vector<int> best_cuts;
    double best = -1.0;
    if (classes == 2) {
        for (int c0 = 0; c0 < bins - 1; ++c0) {
            const double v = bcv_direct({c0});
            if (v > best) {
                best = v;
                best_cuts = {c0};
            }
        }
    } else if (classes == 3) {
        for (int c0 = 0; c0 < bins - 2; ++c0)
            for (int c1 = c0 + 1; c1 < bins - 1; ++c1) {
                const double v = bcv_direct({c0, c1});
                if (v > best) {
                    best = v;
                    best_cuts = {c0, c1};
                }
            }
    } else {
        for (int c0 = 0; c0 < bins - 3; ++c0)
            for (int c1 = c0 + 1; c1 < bins - 2; ++c1)
                for (int c2 = c1 + 1; c2 < bins - 1; ++c2) {
                    const double v = bcv_direct({c0, c1, c2});
                    if (v > best) {
                        best = v;
                        best_cuts = {c0, c1, c2};
                    }
                }
    }
    std::vector<double> t;
    for (int c : best_cuts) t.push_back(center(c));
    return t;
}

// brute-force hysteresis oracle: BFS from every seed over a fresh queue
BinaryVolume hysteresis_oracle(const ImageStack& s, double lo, double hi) {
    BinaryVolume out = BinaryVolume::like(s);
    std::queue<std::array<int, 3>> q;
    for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
            for (int x = 0; x < s.nx; ++x)
                if (s.at(x, y, z) >= hi) {
                    out.set(x, y, z, true);
                    q.push({x, y, z});
                }
    while (!q.empty()) {
        const auto [x, y, z] = q.front();
        q.pop();
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx, yy = y + dy, zz = z + dz;
                    if (!out.in_bounds(xx, yy, zz) || out.get(xx, yy, zz)) continue;
                    if (s.at(xx, yy, zz) >= lo) {
                        out.set(xx, yy, zz, true);
                        q.push({xx, yy, zz});
                    }
                }
    }
    return out;
}

ImageStack random_stack(int nx, int ny, int nz, std::uint64_t seed) {
    auto g = testutil::rng(seed);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    ImageStack s(nx, ny, nz);
    for (auto& v : s.voxels) v = d(g);
    s.range_hi = 1.0;
    return s;
}

}  // namespace

TEST_SUITE("segment") {

TEST_CASE("bimodal two-class threshold separates the modes") {
    std::vector<float> values;
    for (int i = 0; i < 1000; ++i) values.push_back(0.0f);
    for (int i = 0; i < 1000; ++i) values.push_back(200.0f);
    const auto t = multi_otsu(values, 2, 256);
    REQUIRE(t.size() == 1);
    CHECK(t[0] > 0.0);
    CHECK(t[0] < 200.0);
}

TEST_CASE("trimodal three-class thresholds sit between the modes") {
    std::vector<float> values;
    for (int i = 0; i < 500; ++i) {
        values.push_back(0.0f);
        values.push_back(100.0f);
        values.push_back(200.0f);
    }
    const auto t = multi_otsu(values, 3, 256);
    REQUIRE(t.size() == 2);
    CHECK(t[0] > 0.0);
    CHECK(t[0] < 100.0);
    CHECK(t[1] > 100.0);
    CHECK(t[1] < 200.0);
}

TEST_CASE("multi_otsu matches the direct exhaustive oracle") {
    for (int trial = 0; trial < 20; ++trial) {
        auto g = testutil::rng(500 + std::uint64_t(trial));
        std::uniform_real_distribution<float> d(0.0f, 100.0f);
        std::normal_distribution<float> m1(20.0f, 4.0f), m2(60.0f, 6.0f), m3(85.0f, 3.0f);
        std::vector<float> values;
        for (int i = 0; i < 400; ++i) {
            values.push_back(m1(g));
            values.push_back(m2(g));
            if (trial % 2) values.push_back(m3(g));
            values.push_back(d(g));
        }
        const int classes = trial % 3 == 2 ? 2 : 3;
        const int bins = 64;
        const auto got = multi_otsu(values, classes, bins);
        const auto want = multi_otsu_oracle(values, classes, bins);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
    }
}

TEST_CASE("multi_otsu four-class agrees with the oracle on a small case") {
    auto g = testutil::rng(77);
    std::normal_distribution<float> m1(10.0f, 2.0f), m2(30.0f, 2.0f), m3(60.0f, 3.0f),
        m4(90.0f, 2.0f);
    std::vector<float> values;
    for (int i = 0; i < 300; ++i) {
        values.push_back(m1(g));
        values.push_back(m2(g));
        values.push_back(m3(g));
        values.push_back(m4(g));
    }
    const auto got = multi_otsu(values, 4, 32);
    const auto want = multi_otsu_oracle(values, 4, 32);
    REQUIRE(got.size() == 3);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
}

TEST_CASE("multi_otsu is permutation invariant and scales with the data") {
    auto g = testutil::rng(31);
    std::vector<float> values;
    std::normal_distribution<float> m1(10.0f, 3.0f), m2(50.0f, 5.0f);
    for (int i = 0; i < 500; ++i) {
        values.push_back(m1(g));
        values.push_back(m2(g));
    }
    auto shuffled = values;
    std::shuffle(shuffled.begin(), shuffled.end(), g);
    CHECK(multi_otsu(values, 3) == multi_otsu(shuffled, 3));

    std::vector<float> scaled;
    for (float v : values) scaled.push_back(3.0f * v);
    const auto t1 = multi_otsu(values, 3, 256);
    const auto t2 = multi_otsu(scaled, 3, 256);
    double lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, double(v));
        hi = std::max(hi, double(v));
    }
    const double bin_w = (hi - lo) / 256.0;
    for (std::size_t i = 0; i < t1.size(); ++i)
        CHECK(std::fabs(t2[i] - 3.0 * t1[i]) <= 3.0 * bin_w + 1e-9);

    CHECK_THROWS(multi_otsu(std::vector<float>(100, 5.0f), 3));  // constant input
}

TEST_CASE("hysteresis: 1D ridge hand case") {
    ImageStack s(5, 1, 1);
    s.voxels = {0.05f, 0.2f, 0.4f, 0.2f, 0.05f};
    const auto out = hysteresis(s, {0.1, 0.3});
    CHECK(out.bits == std::vector<std::uint8_t>{0, 1, 1, 1, 0});
}

TEST_CASE("hysteresis: no seeds means empty output") {
    ImageStack s(4, 4, 2, 0.2f);
    const auto out = hysteresis(s, {0.1, 0.3});
    CHECK(out.count() == 0);
}

TEST_CASE("hysteresis keeps only components that touch a seed") {
    ImageStack s(9, 1, 1);
    // two plateaus separated by a gap; only the second reaches 0.3
    s.voxels = {0.15f, 0.2f, 0.15f, 0.0f, 0.0f, 0.15f, 0.35f, 0.2f, 0.0f};
    const auto out = hysteresis(s, {0.1, 0.3});
    CHECK(out.bits == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 1, 1, 1, 0});
}

TEST_CASE("hysteresis matches the brute-force flood oracle on random volumes") {
    for (int trial = 0; trial < 8; ++trial) {
        const auto s = random_stack(24, 24, 24, 900 + std::uint64_t(trial));
        const auto got = hysteresis(s, {0.55, 0.93});
        const auto want = hysteresis_oracle(s, 0.55, 0.93);
        CHECK(got.bits == want.bits);
    }
}

TEST_CASE("hysteresis is monotone in both thresholds") {
    const auto s = random_stack(20, 20, 20, 1234);
    const auto base = hysteresis(s, {0.5, 0.9});
    for (auto [lo, hi] : std::vector<std::pair<double, double>>{{0.6, 0.9}, {0.5, 0.95}, {0.62, 0.97}}) {
        const auto tighter = hysteresis(s, {lo, hi});
        for (std::size_t i = 0; i < base.bits.size(); ++i)
            if (tighter.bits[i]) CHECK(base.bits[i]);
    }
}

TEST_CASE("every kept voxel is above low; every component holds a seed") {
    const auto s = random_stack(16, 16, 16, 4321);
    const double lo = 0.6, hi = 0.95;
    const auto out = hysteresis(s, {lo, hi});
    for (std::size_t i = 0; i < out.bits.size(); ++i)
        if (out.bits[i]) CHECK(s.voxels[i] >= float(lo));
    // flood each kept component and require a seed inside
    BinaryVolume seen = BinaryVolume::like(s);
    for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
            for (int x = 0; x < s.nx; ++x) {
                if (!out.get(x, y, z) || seen.get(x, y, z)) continue;
                bool has_seed = false;
                std::vector<std::array<int, 3>> stack{{x, y, z}};
                seen.set(x, y, z, true);
                while (!stack.empty()) {
                    const auto [cx, cy, cz] = stack.back();
                    stack.pop_back();
                    if (s.at(cx, cy, cz) >= float(hi)) has_seed = true;
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int xx = cx + dx, yy = cy + dy, zz = cz + dz;
                                if (!out.in_bounds(xx, yy, zz) || !out.get(xx, yy, zz) ||
                                    seen.get(xx, yy, zz))
                                    continue;
                                seen.set(xx, yy, zz, true);
                                stack.push_back({xx, yy, zz});
                            }
                }
                CHECK(has_seed);
            }
}

TEST_CASE("binarize_pipeline: zero stack gives an empty mask") {
    ImageStack s(16, 16, 8, 0.0f);
    BinarizeParams p;
    p.vessel.scales = {2.0, 6.0, 1.0};
    const auto r = binarize_pipeline(s, p);
    CHECK(r.mask.count() == 0);
}

TEST_CASE("binarize_pipeline: clean cylinder gives one 26-connected component") {
    const int n = 48;
    const int nz = 40;
    ImageStack s(n, n, nz);
    s.sx = 100; s.sy = 100; s.sz = 100;  // already isotropic
    const double w = 6.0 * fwhm_to_sigma;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                s.at(x, y, z) = float(std::exp(-((x - 23.5) * (x - 23.5) + (y - 23.5) * (y - 23.5)) /
                                               (2 * w * w)));
    BinarizeParams p;
    p.vessel.scales = {3.0, 9.0, 0.5};
    const auto r = binarize_pipeline(s, p);
    CHECK(r.low == 0.1);
    CHECK(r.high == 0.3);
    CHECK(r.mask.count() > 0);

    // count 26-connected components
    BinaryVolume seen(r.mask.nx, r.mask.ny, r.mask.nz);
    int comps = 0;
    for (std::size_t i = 0; i < r.mask.bits.size(); ++i) {
        if (!r.mask.bits[i] || seen.bits[i]) continue;
        ++comps;
        std::vector<std::size_t> st{i};
        seen.bits[i] = 1;
        while (!st.empty()) {
            const std::size_t cur = st.back();
            st.pop_back();
            const int z = int(cur / (std::size_t(n) * n));
            const int y = int((cur % (std::size_t(n) * n)) / n);
            const int x = int(cur % std::size_t(n));
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx, yy = y + dy, zz = z + dz;
                        if (!r.mask.in_bounds(xx, yy, zz)) continue;
                        const std::size_t ni = r.mask.index(xx, yy, zz);
                        if (r.mask.bits[ni] && !seen.bits[ni]) {
                            seen.bits[ni] = 1;
                            st.push_back(ni);
                        }
                    }
        }
    }
    CHECK(comps == 1);
}

TEST_CASE("binarize_pipeline: mode selection") {
    ImageStack s(20, 20, 20);
    auto g = testutil::rng(5150);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : s.voxels) v = d(g);
    s.sx = s.sy = s.sz = 100;

    BinarizeParams p;
    p.vessel.scales = {2.0, 4.0, 1.0};
    p.mode = ThresholdMode::cyclegan;
    const auto r = binarize_pipeline(s, p);
    CHECK(r.low == 0.3);
    CHECK(r.high == 0.5);

    p.mode = ThresholdMode::auto_otsu;
    const auto r2 = binarize_pipeline(s, p);
    const auto t = multi_otsu(std::span<const float>(r2.response.voxels), 3, 256);
    CHECK(r2.low == doctest::Approx(t[0] / 2.0));
    CHECK(r2.high == doctest::Approx(t[1] / 2.0));
}

TEST_CASE("binarize_pipeline 2D path processes slices independently") {
    const int n = 40;
    ImageStack s(n, n, 2);
    const double w = 5.0 * fwhm_to_sigma;
    // slice 0: vertical ridge; slice 1: flat
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            s.at(x, y, 0) = float(std::exp(-(x - 19.5) * (x - 19.5) / (2 * w * w)));
    BinarizeParams p;
    p.dimensionality = 2;
    p.vessel.scales = {3.0, 8.0, 0.5};
    const auto r = binarize_pipeline(s, p);
    std::size_t count0 = 0, count1 = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            count0 += r.mask.get(x, y, 0);
            count1 += r.mask.get(x, y, 1);
        }
    CHECK(count0 > 0);
    CHECK(count1 == 0);
}

}  // TEST_SUITE
