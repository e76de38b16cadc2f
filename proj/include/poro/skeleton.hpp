#pragma once
// 3D curve skeletonization by homotopic directional thinning (26-connected
// foreground, 6-connected background), the exact Euclidean distance
// transform, and the largest-fitting-sphere diameter map.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace poro {

namespace detail {

// --- simple-point test on a 3x3x3 window ------------------------------------
//
// A voxel is simple iff deleting it preserves topology:
//   (a) its foreground 26-neighbours form exactly one 26-connected component
//   (b) the background cells of its 18-neighbourhood form exactly one
//       6-connected component that touches a face neighbour

struct Neighborhood {
    // 0..26 window cells, index = (dz+1)*9 + (dy+1)*3 + (dx+1); center = 13
    std::array<std::uint8_t, 27> fg{};
};

inline int window_index(int dx, int dy, int dz) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }

inline Neighborhood gather_neighborhood(const BinaryVolume& v, int x, int y, int z) {
    Neighborhood n;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int xx = x + dx, yy = y + dy, zz = z + dz;
                const bool in = v.in_bounds(xx, yy, zz) && v.get(xx, yy, zz);
                n.fg[std::size_t(window_index(dx, dy, dz))] = in ? 1 : 0;
            }
    return n;
}

inline int count_fg26_components(const Neighborhood& n) {
    std::array<std::uint8_t, 27> seen{};
    int comps = 0;
    std::array<int, 27> stack;
    for (int start = 0; start < 27; ++start) {
        if (start == 13 || !n.fg[std::size_t(start)] || seen[std::size_t(start)]) continue;
        ++comps;
        int top = 0;
        stack[std::size_t(top++)] = start;
        seen[std::size_t(start)] = 1;
        while (top) {
            const int cur = stack[std::size_t(--top)];
            const int cz = cur / 9 - 1, cy = (cur / 3) % 3 - 1, cx = cur % 3 - 1;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx2 = cx + dx, ny2 = cy + dy, nz2 = cz + dz;
                        if (nx2 < -1 || nx2 > 1 || ny2 < -1 || ny2 > 1 || nz2 < -1 || nz2 > 1)
                            continue;
                        const int ni = window_index(nx2, ny2, nz2);
                        if (ni == 13 || ni == cur || seen[std::size_t(ni)] ||
                            !n.fg[std::size_t(ni)])
                            continue;
                        seen[std::size_t(ni)] = 1;
                        stack[std::size_t(top++)] = ni;
                    }
        }
    }
    return comps;
}

inline bool in_n18(int dx, int dy, int dz) {
    const int r2 = dx * dx + dy * dy + dz * dz;
    return r2 == 1 || r2 == 2;
}

inline int count_bg6_components(const Neighborhood& n) {
    // 6-connected components of background cells within the 18-neighbourhood;
    // only components containing a face neighbour count
    std::array<std::uint8_t, 27> seen{};
    int comps = 0;
    std::array<int, 27> stack;
    static const int faces[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                    {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& f : faces) {
        const int start = window_index(f[0], f[1], f[2]);
        if (n.fg[std::size_t(start)] || seen[std::size_t(start)]) continue;
        ++comps;
        int top = 0;
        stack[std::size_t(top++)] = start;
        seen[std::size_t(start)] = 1;
        while (top) {
            const int cur = stack[std::size_t(--top)];
            const int cz = cur / 9 - 1, cy = (cur / 3) % 3 - 1, cx = cur % 3 - 1;
            static const int steps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                            {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto& st : steps) {
                const int nx2 = cx + st[0], ny2 = cy + st[1], nz2 = cz + st[2];
                if (nx2 < -1 || nx2 > 1 || ny2 < -1 || ny2 > 1 || nz2 < -1 || nz2 > 1) continue;
                if (!in_n18(nx2, ny2, nz2)) continue;
                const int ni = window_index(nx2, ny2, nz2);
                if (seen[std::size_t(ni)] || n.fg[std::size_t(ni)]) continue;
                seen[std::size_t(ni)] = 1;
                stack[std::size_t(top++)] = ni;
            }
        }
    }
    return comps;
}

inline bool is_simple(const Neighborhood& n) {
    return count_fg26_components(n) == 1 && count_bg6_components(n) == 1;
}

inline int count_fg_neighbors(const Neighborhood& n) {
    int c = 0;
    for (int i = 0; i < 27; ++i)
        if (i != 13 && n.fg[std::size_t(i)]) ++c;
    return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// skeletonize3d
// ---------------------------------------------------------------------------

/// Homotopic medial-axis thinning. Border voxels are peeled in six
/// directional sub-iterations per cycle; a voxel is removed only while it is
/// simple (checked sequentially at deletion time) and not a curve endpoint,
/// so connected components, cavities and tunnels are preserved and the
/// output is a subset of the input.
inline BinaryVolume skeletonize3d(const BinaryVolume& in) {
    BinaryVolume v = in;
    static const int dirs[6][3] = {{0, 0, -1}, {0, 0, 1}, {0, -1, 0},
                                   {0, 1, 0},  {-1, 0, 0}, {1, 0, 0}};

    std::vector<std::uint32_t> active;
    active.reserve(1024);
    for (std::size_t i = 0; i < v.bits.size(); ++i)
        if (v.bits[i]) active.push_back(std::uint32_t(i));

    const std::size_t plane = std::size_t(v.nx) * v.ny;
    std::vector<std::uint32_t> deleted;
    while (true) {
        deleted.clear();
        for (const auto& d : dirs) {
            std::vector<std::uint32_t> cands;
            for (std::uint32_t idx : active) {
                if (!v.bits[idx]) continue;
                const int z = int(idx / plane);
                const int y = int((idx % plane) / std::size_t(v.nx));
                const int x = int(idx % std::size_t(v.nx));
                const int bx = x + d[0], by = y + d[1], bz = z + d[2];
                // the volume face is not a border: structures clipped by the
                // field of view keep their full extent instead of retracting
                const bool border = v.in_bounds(bx, by, bz) && !v.get(bx, by, bz);
                if (!border) continue;
                const auto n = detail::gather_neighborhood(v, x, y, z);
                if (detail::count_fg_neighbors(n) <= 1) continue;  // endpoint
                if (detail::is_simple(n)) cands.push_back(idx);
            }
            for (std::uint32_t idx : cands) {
                const int z = int(idx / plane);
                const int y = int((idx % plane) / std::size_t(v.nx));
                const int x = int(idx % std::size_t(v.nx));
                const auto n = detail::gather_neighborhood(v, x, y, z);
                if (detail::count_fg_neighbors(n) <= 1) continue;
                if (!detail::is_simple(n)) continue;
                v.bits[idx] = 0;
                deleted.push_back(idx);
            }
        }
        if (deleted.empty()) break;
        // next cycle looks only near this cycle's deletions
        std::vector<std::uint32_t> next;
        next.reserve(deleted.size() * 27);
        for (std::uint32_t idx : deleted) {
            const int z = int(idx / plane);
            const int y = int((idx % plane) / std::size_t(v.nx));
            const int x = int(idx % std::size_t(v.nx));
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx, yy = y + dy, zz = z + dz;
                        if (v.in_bounds(xx, yy, zz) && v.get(xx, yy, zz))
                            next.push_back(std::uint32_t(v.index(xx, yy, zz)));
                    }
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        active = std::move(next);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Euclidean distance transform (squared), exact, separable
// ---------------------------------------------------------------------------

namespace detail {

// 1D lower-envelope squared distance transform (Felzenszwalb & Huttenlocher)
inline void edt_1d(const float* f, float* out, int n, std::vector<int>& v,
                   std::vector<float>& z) {
    v.resize(std::size_t(n));
    z.resize(std::size_t(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<float>::infinity();
    z[1] = std::numeric_limits<float>::infinity();
    for (int q = 1; q < n; ++q) {
        float s;
        while (true) {
            const int p = v[std::size_t(k)];
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0f * (q - p));
            if (s <= z[std::size_t(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[std::size_t(k)] = q;
        z[std::size_t(k)] = s;
        z[std::size_t(k) + 1] = std::numeric_limits<float>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[std::size_t(k) + 1] < float(q)) ++k;
        const int p = v[std::size_t(k)];
        out[q] = (q - p) * (q - p) + f[p];
    }
}

}  // namespace detail

/// Exact squared Euclidean distance (in voxels) from each voxel to the
/// nearest background voxel center; 0 on background. Assumes isotropic voxels.
inline std::vector<float> edt_squared(const BinaryVolume& v) {
    const float inf = 1e20f;
    std::vector<float> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = v.bits[i] ? inf : 0.0f;

    const std::size_t plane = std::size_t(v.nx) * v.ny;
    // x pass
    parallel_for(std::int64_t(v.ny) * v.nz, [&](std::int64_t l) {
        std::vector<int> vb;
        std::vector<float> zb;
        std::vector<float> line(static_cast<std::size_t>(v.nx));
        float* row = d.data() + std::size_t(l) * v.nx;
        std::copy(row, row + v.nx, line.begin());
        detail::edt_1d(line.data(), row, v.nx, vb, zb);
    });
    // y pass
    parallel_for(v.nz, [&](std::int64_t z) {
        std::vector<int> vb;
        std::vector<float> zb;
        std::vector<float> line(std::size_t(v.ny)), out(std::size_t(v.ny));
        for (int x = 0; x < v.nx; ++x) {
            for (int y = 0; y < v.ny; ++y) line[std::size_t(y)] = d[std::size_t(z) * plane + std::size_t(y) * v.nx + x];
            detail::edt_1d(line.data(), out.data(), v.ny, vb, zb);
            for (int y = 0; y < v.ny; ++y) d[std::size_t(z) * plane + std::size_t(y) * v.nx + x] = out[std::size_t(y)];
        }
    });
    // z pass
    parallel_for(v.ny, [&](std::int64_t y) {
        std::vector<int> vb;
        std::vector<float> zb;
        std::vector<float> line(std::size_t(v.nz)), out(std::size_t(v.nz));
        for (int x = 0; x < v.nx; ++x) {
            for (int z = 0; z < v.nz; ++z) line[std::size_t(z)] = d[std::size_t(z) * plane + std::size_t(y) * v.nx + x];
            detail::edt_1d(line.data(), out.data(), v.nz, vb, zb);
            for (int z = 0; z < v.nz; ++z) d[std::size_t(z) * plane + std::size_t(y) * v.nx + x] = out[std::size_t(z)];
        }
    });
    return d;
}

// ---------------------------------------------------------------------------
// local_thickness
// ---------------------------------------------------------------------------

/// Largest-fitting-sphere diameter map: each foreground voxel receives the
/// diameter of the biggest inscribed sphere that engulfs it, in voxel units
/// (zero on background). Spheres are centered on distance-ridge voxels with
/// radius EDT - 1/2; a sphere strictly dominated by a neighbouring one is
/// skipped, which leaves the painted maximum unchanged.
inline ImageStack local_thickness(const BinaryVolume& vol) {
    const auto d2 = edt_squared(vol);
    ImageStack lt(vol.nx, vol.ny, vol.nz);
    lt.sx = vol.sx; lt.sy = vol.sy; lt.sz = vol.sz;

    std::vector<float> radius(vol.size(), 0.0f);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!vol.bits[i]) continue;
        radius[i] = std::sqrt(d2[i]) - 0.5f;
        lt.voxels[i] = 2.0f * radius[i];
    }

    struct Center {
        float r;
        std::uint32_t idx;
    };
    std::vector<Center> centers;
    const std::size_t plane = std::size_t(vol.nx) * vol.ny;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!vol.bits[i]) continue;
        const int z = int(i / plane);
        const int y = int((i % plane) / std::size_t(vol.nx));
        const int x = int(i % std::size_t(vol.nx));
        const float r = radius[i];
        bool dominated = false;
        for (int dz = -1; dz <= 1 && !dominated; ++dz)
            for (int dy = -1; dy <= 1 && !dominated; ++dy)
                for (int dx = -1; dx <= 1 && !dominated; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const int xx = x + dx, yy = y + dy, zz = z + dz;
                    if (!vol.in_bounds(xx, yy, zz) || !vol.get(xx, yy, zz)) continue;
                    const float dist = std::sqrt(float(dx * dx + dy * dy + dz * dz));
                    if (radius[vol.index(xx, yy, zz)] >= r + dist - 1e-6f) dominated = true;
                }
        if (!dominated) centers.push_back({r, std::uint32_t(i)});
    }
    std::sort(centers.begin(), centers.end(), [](const Center& a, const Center& b) {
        return a.r > b.r || (a.r == b.r && a.idx < b.idx);
    });

    for (const Center& c : centers) {
        const int z = int(c.idx / plane);
        const int y = int((c.idx % plane) / std::size_t(vol.nx));
        const int x = int(c.idx % std::size_t(vol.nx));
        const int ri = int(c.r);
        const float r2 = c.r * c.r;
        const float diam = 2.0f * c.r;
        for (int dz = -ri; dz <= ri; ++dz) {
            const int zz = z + dz;
            if (zz < 0 || zz >= vol.nz) continue;
            for (int dy = -ri; dy <= ri; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= vol.ny) continue;
                const float dzy2 = float(dz * dz + dy * dy);
                if (dzy2 > r2) continue;
                const int span = int(std::sqrt(r2 - dzy2));
                const int x0 = std::max(0, x - span), x1 = std::min(vol.nx - 1, x + span);
                float* row = lt.voxels.data() + std::size_t(zz) * plane + std::size_t(yy) * vol.nx;
                for (int xx = x0; xx <= x1; ++xx)
                    if (vol.bits[std::size_t(zz) * plane + std::size_t(yy) * vol.nx + xx] &&
                        row[xx] < diam)
                        row[xx] = diam;
            }
        }
    }
    lt.observe_range();
    return lt;
}

// ---------------------------------------------------------------------------
// 3D connected component count (26-connectivity), used by topology checks
// ---------------------------------------------------------------------------

inline int count_components26(const BinaryVolume& v) {
    std::vector<std::uint8_t> seen(v.size(), 0);
    std::vector<std::uint32_t> stack;
    const std::size_t plane = std::size_t(v.nx) * v.ny;
    int comps = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v.bits[i] || seen[i]) continue;
        ++comps;
        seen[i] = 1;
        stack.push_back(std::uint32_t(i));
        while (!stack.empty()) {
            const std::uint32_t cur = stack.back();
            stack.pop_back();
            const int z = int(cur / plane);
            const int y = int((cur % plane) / std::size_t(v.nx));
            const int x = int(cur % std::size_t(v.nx));
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dx && !dy && !dz) continue;
                        const int xx = x + dx, yy = y + dy, zz = z + dz;
                        if (!v.in_bounds(xx, yy, zz)) continue;
                        const std::size_t ni = v.index(xx, yy, zz);
                        if (v.bits[ni] && !seen[ni]) {
                            seen[ni] = 1;
                            stack.push_back(std::uint32_t(ni));
                        }
                    }
        }
    }
    return comps;
}

}  // namespace poro
