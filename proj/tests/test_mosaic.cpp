#include <doctest.h>

#include <cmath>

#include <poro/mosaic.hpp>

#include "test_util.hpp"

using namespace poro;

TEST_SUITE("mosaic") {

TEST_CASE("2048 grid at 25% overlap: stride 96, 21x21 origins, last clamped") {
    // arithmetic oracle: ceil((2048-128)/96)+1
    const int expected_per_axis = int(std::ceil((2048.0 - 128.0) / 96.0)) + 1;
    CHECK(expected_per_axis == 21);

    Image2D img(2048, 64, 0.0f);  // short rows keep the test cheap; x axis is the point
    auto [grid, patches] = extract_patches(img, 64, 0.25);
    CHECK(grid.stride == 48);

    Image2D wide(2048, 128, 0.0f);
    auto [g2, p2] = extract_patches(wide, 128, 0.25);
    CHECK(g2.stride == 96);
    int max_x = 0, count_x = 0;
    for (auto [x, y] : g2.origins)
        if (y == 0) {
            ++count_x;
            max_x = std::max(max_x, x);
        }
    CHECK(count_x == 21);
    CHECK(max_x == 1920);
}

TEST_CASE("50% overlap gives stride 64 at patch 128") {
    Image2D img(256, 256, 0.0f);
    auto [grid, patches] = extract_patches(img, 128, 0.5);
    CHECK(grid.stride == 64);
}

TEST_CASE("degenerate grid: image equals patch") {
    Image2D img(128, 128, 3.0f);
    auto [grid, patches] = extract_patches(img, 128, 0.25);
    REQUIRE(grid.origins.size() == 1);
    CHECK(grid.origins[0] == std::pair<int, int>(0, 0));
    CHECK_THROWS(extract_patches(Image2D(64, 64), 128, 0.25));
}

TEST_CASE("extract then stitch reproduces the image") {
    const auto img = testutil::random_image(200, 150, 11);
    for (double ov : {0.0, 0.25, 0.5}) {
        auto [grid, patches] = extract_patches(img, 50, ov);
        const Image2D back = stitch(grid, patches);
        REQUIRE(back.same_dims(img));
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 1e-6f * std::fabs(img.pixels[i]) + 1e-6f);
    }
}

TEST_CASE("stitch averages overlapping pixels") {
    PatchGrid grid;
    grid.patch_size = 2;
    grid.stride = 1;
    grid.source_width = 3;
    grid.source_height = 2;
    grid.origins = {{0, 0}, {1, 0}};
    Image2D p1(2, 2, 2.0f), p2(2, 2, 4.0f);
    const Image2D out = stitch(grid, {p1, p2});
    CHECK(out.at(0, 0) == 2.0f);
    CHECK(out.at(1, 0) == 3.0f);  // covered by both
    CHECK(out.at(2, 0) == 4.0f);

    // constant field stays constant
    const Image2D c = stitch(grid, {Image2D(2, 2, 7.0f), Image2D(2, 2, 7.0f)});
    for (float v : c.pixels) CHECK(v == 7.0f);
}

TEST_CASE("homogenize: hand-evaluated two-patch case") {
    // patches [0,0,10,10] and [5,5,15,15]; darkest-10% floor rounds to 1 px
    Image2D a(2, 2), b(2, 2);
    a.pixels = {0, 0, 10, 10};
    b.pixels = {5, 5, 15, 15};
    const auto r = homogenize_background({a, b});
    CHECK(r.backgrounds[0] == doctest::Approx(0.0));
    CHECK(r.backgrounds[1] == doctest::Approx(5.0));
    CHECK(r.baseline == doctest::Approx(0.0));
    CHECK(r.offsets[0] == 0.0);
    CHECK(r.offsets[1] == doctest::Approx(5.0));
    CHECK(r.patches[1][0] == doctest::Approx(0.0));
    CHECK(r.patches[1][2] == doctest::Approx(10.0));
}

TEST_CASE("homogenize: identical patches unchanged, single patch unchanged") {
    const auto img = testutil::random_image(8, 8, 3);
    const auto r = homogenize_background({img, img, img});
    for (const auto& off : r.offsets) CHECK(off == 0.0);
    const auto single = homogenize_background({img});
    CHECK(single.offsets[0] == 0.0);
}

TEST_CASE("homogenize: backgrounds land on the baseline, contrast bit-identical") {
    std::vector<Image2D> patches;
    for (int k = 0; k < 6; ++k) {
        auto p = testutil::random_integer_image(16, 16, 100 + std::uint64_t(k));
        const float lift = float(37 * k);
        for (auto& v : p.pixels) v += lift;  // integral shifts keep values exact
        patches.push_back(std::move(p));
    }
    const auto r = homogenize_background(patches);

    for (std::size_t k = 0; k < patches.size(); ++k) {
        // recompute the background average on the shifted patch
        std::vector<double> sorted(r.patches[k].begin(), r.patches[k].end());
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n_bg = std::max<std::size_t>(1, sorted.size() / 10);
        double bg = 0.0;
        for (std::size_t i = 0; i < n_bg; ++i) bg += sorted[i];
        bg /= double(n_bg);
        CHECK(std::fabs(bg - r.baseline) < 1e-6);

        // all pairwise differences preserved exactly
        for (std::size_t i = 1; i < r.patches[k].size(); ++i) {
            const double before = double(patches[k].pixels[i]) - double(patches[k].pixels[i - 1]);
            const double after = r.patches[k][i] - r.patches[k][i - 1];
            CHECK(after == before);
        }
    }
}

TEST_CASE("homogenize: patch-min reference mode differs when min < background mean") {
    Image2D a(4, 1);
    a.pixels = {0, 0, 0, 0};
    Image2D c(4, 1);
    c.pixels = {2, 4, 10, 10};  // n_bg = 1 -> background mean 2, min 2
    const auto mean_mode = homogenize_background({a, c}, 0.10, BackgroundRef::darkest_mean);
    const auto min_mode = homogenize_background({a, c}, 0.10, BackgroundRef::patch_min);
    CHECK(mean_mode.offsets[1] == doctest::Approx(2.0));
    CHECK(min_mode.offsets[1] == doctest::Approx(2.0));

    // with a 50% floor the background mean (3) exceeds the min (2)
    const auto mean2 = homogenize_background({a, c}, 0.5, BackgroundRef::darkest_mean);
    const auto min2 = homogenize_background({a, c}, 0.5, BackgroundRef::patch_min);
    CHECK(mean2.offsets[1] == doctest::Approx(3.0));
    CHECK(min2.offsets[1] == doctest::Approx(2.0));
}

}  // TEST_SUITE
