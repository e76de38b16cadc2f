#include <doctest.h>

#include <cmath>

#include <poro/skeleton.hpp>

#include "test_util.hpp"

using namespace poro;

namespace {

BinaryVolume digital_ball(int n, double r) {
    BinaryVolume v(n, n, n);
    const double c = (n - 1) / 2.0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if ((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c) <= r * r)
                    v.set(x, y, z, true);
    return v;
}

// brute-force local thickness on small volumes: for every foreground voxel c
// with fitting radius r(c) = EDT(c) - 1/2, paint 2 r(c) into all voxels of
// ball(c, r(c)) and take the maximum
ImageStack local_thickness_oracle(const BinaryVolume& v) {
    const auto d2 = edt_squared(v);
    ImageStack lt(v.nx, v.ny, v.nz);
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                if (!v.get(x, y, z)) continue;
                const double r = std::sqrt(double(d2[v.index(x, y, z)])) - 0.5;
                const int ri = int(r);
                for (int dz = -ri; dz <= ri; ++dz)
                    for (int dy = -ri; dy <= ri; ++dy)
                        for (int dx = -ri; dx <= ri; ++dx) {
                            if (dx * dx + dy * dy + dz * dz > r * r) continue;
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (!v.in_bounds(xx, yy, zz) || !v.get(xx, yy, zz)) continue;
                            float& out = lt.at(xx, yy, zz);
                            out = std::max(out, float(2.0 * r));
                        }
            }
    return lt;
}

}  // namespace

TEST_SUITE("skeleton") {

TEST_CASE("single voxel is a fixed point") {
    BinaryVolume v(5, 5, 5);
    v.set(2, 2, 2, true);
    const auto s = skeletonize3d(v);
    CHECK(s.count() == 1);
    CHECK(s.get(2, 2, 2));
}

TEST_CASE("solid bar thins to a single path spanning its long axis") {
    BinaryVolume v(7, 7, 30);
    for (int z = 0; z < 30; ++z)
        for (int y = 2; y < 5; ++y)
            for (int x = 2; x < 5; ++x) v.set(x, y, z, true);
    const auto s = skeletonize3d(v);
    CHECK(count_components26(s) == 1);
    // 1-voxel wide: every z-slice holds exactly one skeleton voxel
    for (int z = 0; z < 30; ++z) {
        int cnt = 0;
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x) cnt += s.get(x, y, z);
        CHECK(cnt == 1);
    }
    // exactly two endpoints (voxels with one neighbour)
    int endpoints = 0;
    for (int z = 0; z < 30; ++z)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x) {
                if (!s.get(x, y, z)) continue;
                int nb = 0;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (!dx && !dy && !dz) continue;
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (s.in_bounds(xx, yy, zz) && s.get(xx, yy, zz)) ++nb;
                        }
                if (nb == 1) ++endpoints;
            }
    CHECK(endpoints == 2);
}

TEST_CASE("output is a subset of the input") {
    const auto v = testutil::random_binary_volume(16, 16, 16, 10, 0.4);
    const auto s = skeletonize3d(v);
    for (std::size_t i = 0; i < v.bits.size(); ++i)
        if (s.bits[i]) CHECK(v.bits[i]);
}

TEST_CASE("two disjoint bars give two skeleton components") {
    BinaryVolume v(20, 9, 3);
    for (int x = 0; x < 20; ++x)
        for (int z = 0; z < 3; ++z) {
            for (int y = 0; y < 3; ++y) v.set(x, y, z, true);
            for (int y = 6; y < 9; ++y) v.set(x, y, z, true);
        }
    CHECK(count_components26(v) == 2);
    const auto s = skeletonize3d(v);
    CHECK(count_components26(s) == 2);
}

TEST_CASE("component count is preserved on random volumes") {
    for (int trial = 0; trial < 6; ++trial) {
        const auto v = testutil::random_binary_volume(14, 14, 14, 600 + std::uint64_t(trial), 0.35);
        const auto s = skeletonize3d(v);
        CHECK(count_components26(s) == count_components26(v));
    }
}

TEST_CASE("a solid torus keeps its tunnel (loop survives thinning)") {
    const int n = 25;
    BinaryVolume v(n, n, 7);
    const double c = (n - 1) / 2.0, R = 8.0, rt = 2.2;
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double rho = std::sqrt((x - c) * (x - c) + (y - c) * (y - c));
                const double d2 = (rho - R) * (rho - R) + (z - 3) * (z - 3);
                if (d2 <= rt * rt) v.set(x, y, z, true);
            }
    const auto s = skeletonize3d(v);
    CHECK(count_components26(s) == 1);
    // a surviving loop has no endpoint voxels
    int endpoints = 0;
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (!s.get(x, y, z)) continue;
                int nb = 0;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (!dx && !dy && !dz) continue;
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (s.in_bounds(xx, yy, zz) && s.get(xx, yy, zz)) ++nb;
                        }
                if (nb <= 1) ++endpoints;
            }
    CHECK(endpoints == 0);
}

TEST_CASE("EDT squared distances are exact on a hand case") {
    BinaryVolume v(7, 7, 1, true);
    // a single background voxel in the middle
    v.set(3, 3, 0, false);
    const auto d2 = edt_squared(v);
    CHECK(d2[v.index(3, 3, 0)] == 0.0f);
    CHECK(d2[v.index(4, 3, 0)] == 1.0f);
    CHECK(d2[v.index(4, 4, 0)] == 2.0f);
    CHECK(d2[v.index(6, 3, 0)] == 9.0f);
    CHECK(d2[v.index(6, 6, 0)] == 18.0f);
}

TEST_CASE("local thickness of digital balls is 2r within one voxel") {
    for (double r : {3.0, 5.0, 8.0}) {
        const int n = int(2 * r) + 7;
        const auto ball = digital_ball(n, r);
        const auto lt = local_thickness(ball);
        // center value comes straight from the EDT
        const int c = (n - 1) / 2;
        CHECK(std::fabs(lt.at(c, c, c) - 2.0 * r) <= 1.0 + 1e-6);
        // interior voxels (strictly inside half the radius) see the full sphere
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) +
                                               (z - c) * (z - c));
                    if (d <= r * 0.5)
                        CHECK(std::fabs(lt.at(x, y, z) - 2.0 * r) <= 1.0 + 1e-6);
                }
    }
}

TEST_CASE("1-voxel line has thickness 1; background stays 0") {
    BinaryVolume v(20, 5, 5);
    for (int x = 0; x < 20; ++x) v.set(x, 2, 2, true);
    const auto lt = local_thickness(v);
    for (int x = 0; x < 20; ++x) CHECK(lt.at(x, 2, 2) == doctest::Approx(1.0));
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 20; ++x)
                if (!(y == 2 && z == 2)) CHECK(lt.at(x, y, z) == 0.0f);
}

TEST_CASE("local thickness matches the brute-force paint oracle") {
    for (int trial = 0; trial < 4; ++trial) {
        const auto m = testutil::blobby_mask(24, 24, 7000 + std::uint64_t(trial), 6, 2.0, 6.0);
        BinaryVolume v(24, 24, 8);
        for (int z = 2; z < 6; ++z)
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 24; ++x) v.set(x, y, z, m.get(x, y));
        const auto got = local_thickness(v);
        const auto want = local_thickness_oracle(v);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.voxels[i] == doctest::Approx(double(want.voxels[i])).epsilon(1e-6));
    }
}

TEST_CASE("dilation never decreases local thickness") {
    for (int trial = 0; trial < 5; ++trial) {
        const auto v = testutil::random_binary_volume(16, 16, 16, 800 + std::uint64_t(trial), 0.25);
        BinaryVolume dilated = v;
        for (int z = 0; z < 16; ++z)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    if (v.get(x, y, z)) continue;
                    bool nb = false;
                    for (int dz = -1; dz <= 1 && !nb; ++dz)
                        for (int dy = -1; dy <= 1 && !nb; ++dy)
                            for (int dx = -1; dx <= 1 && !nb; ++dx)
                                if (v.in_bounds(x + dx, y + dy, z + dz) &&
                                    v.get(x + dx, y + dy, z + dz))
                                    nb = true;
                    if (nb) dilated.set(x, y, z, true);
                }
        const auto lt1 = local_thickness(v);
        const auto lt2 = local_thickness(dilated);
        for (std::size_t i = 0; i < lt1.size(); ++i)
            if (v.bits[i]) CHECK(lt2.voxels[i] >= lt1.voxels[i] - 1e-6f);
    }
}

TEST_CASE("thickness invariant: every foreground voxel is at least 2 EDT - 1") {
    const auto v = testutil::random_binary_volume(18, 18, 18, 3141, 0.45);
    const auto d2 = edt_squared(v);
    const auto lt = local_thickness(v);
    for (std::size_t i = 0; i < v.bits.size(); ++i) {
        if (!v.bits[i]) continue;
        CHECK(lt.voxels[i] >= float(2.0 * std::sqrt(double(d2[i])) - 1.0 - 1e-5));
    }
}

}  // TEST_SUITE
