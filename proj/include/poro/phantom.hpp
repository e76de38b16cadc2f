#pragma once
// Synthetic tubule/branch network phantoms with exact ground-truth graphs,
// tube rasterization with optional PSF blur and noise, and the pixel-size
// degradation model (lateral block averaging + nearest-neighbour return to
// the reference grid). Everything is deterministic for a fixed seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "graph.hpp"
#include "resample.hpp"
#include "vesselness.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// PhantomSpec
// ---------------------------------------------------------------------------

struct PhantomTube {
    std::vector<std::array<double, 3>> polyline;  // voxel coordinates
    double radius_um = 1.0;
};

struct PhantomJunction {
    int tubule = 0;
    double x = 0.0;  // attachment abscissa along the tubule, voxel units
};

struct PhantomSpec {
    int nx = 256, ny = 256, nz = 64;
    double sx = 100.0, sy = 100.0, sz = 350.0;  // nm
    std::vector<PhantomTube> tubules;           // radius in [0.5, 1.5] um
    std::vector<PhantomTube> branches;          // radius in [0.15, 0.35] um
    std::vector<PhantomJunction> junctions;
    std::uint64_t seed = 0;
};

struct PhantomParams {
    int nx = 256, ny = 256, nz = 64;
    double sx = 100.0, sy = 100.0, sz = 350.0;
    int n_tubules = 4;
    int n_branches = 3;
    double tubule_radius_um_min = 0.8, tubule_radius_um_max = 1.2;
    double branch_radius_um_min = 0.25, branch_radius_um_max = 0.35;
    double jitter_px = 4.0;                // lateral wobble of tubule axes
    double min_junction_separation_px = 32.0;
    double end_margin_px = 24.0;           // junction-free zone at tubule ends
    bool planar = false;                   // all centerlines in one z plane
    double lane_z_spread = 0.3;            // tubule lane separation in z, as a fraction of nz
};

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 streams, independent of the std library)
// ---------------------------------------------------------------------------

namespace detail {

struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t s) : state(s) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller; both uniforms drawn fresh each call
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

inline std::array<double, 3> point_on_polyline_at_x(
    const std::vector<std::array<double, 3>>& poly, double x) {
    for (std::size_t i = 1; i < poly.size(); ++i) {
        if (x <= poly[i][0] || i == poly.size() - 1) {
            const auto& a = poly[i - 1];
            const auto& b = poly[i];
            const double t = b[0] > a[0] ? std::clamp((x - a[0]) / (b[0] - a[0]), 0.0, 1.0) : 0.0;
            return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
        }
    }
    return poly.back();
}

inline double polyline_length_um(const std::vector<std::array<double, 3>>& poly, double sx,
                                 double sy, double sz, double x_from, double x_to) {
    // arc length of the x-monotone polyline between two abscissae, in um
    double total = 0.0;
    for (std::size_t i = 1; i < poly.size(); ++i) {
        const auto& a = poly[i - 1];
        const auto& b = poly[i];
        const double seg_lo = a[0], seg_hi = b[0];
        const double lo = std::max(seg_lo, x_from), hi = std::min(seg_hi, x_to);
        if (hi <= lo) continue;
        const double f = (hi - lo) / (seg_hi - seg_lo);
        const double dx = (b[0] - a[0]) * sx, dy = (b[1] - a[1]) * sy, dz = (b[2] - a[2]) * sz;
        total += f * std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return total / 1000.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate_network
// ---------------------------------------------------------------------------

/// Near-parallel jittered tubules spanning X, connected by straight branches
/// whose attachment points define the junctions. Deterministic for a fixed
/// seed; throws when the requested density cannot be placed.
inline PhantomSpec generate_network(const PhantomParams& p, std::uint64_t seed) {
    if (p.n_tubules < 1) throw std::invalid_argument("generate_network: need >= 1 tubule");
    if (p.n_branches > 0 && p.n_tubules < 2)
        throw std::invalid_argument("generate_network: branches need >= 2 tubules");

    PhantomSpec spec;
    spec.nx = p.nx; spec.ny = p.ny; spec.nz = p.nz;
    spec.sx = p.sx; spec.sy = p.sy; spec.sz = p.sz;
    spec.seed = seed;

    const double max_r_px = 1000.0 * p.tubule_radius_um_max / p.sx;
    const double lane_gap = double(p.ny) / double(p.n_tubules);
    if (lane_gap < 4.0 * max_r_px + 2.0 * p.jitter_px)
        throw std::invalid_argument(
            "generate_network: infeasible density, tubule lanes closer than clearance (" +
            std::to_string(lane_gap) + " px)");

    detail::SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + 0x1234567ull);
    for (int i = 0; i < p.n_tubules; ++i) {
        PhantomTube t;
        t.radius_um = rng.uniform(p.tubule_radius_um_min, p.tubule_radius_um_max);
        const double lane_y = (i + 0.5) * lane_gap;
        const double lane_z =
            p.planar ? 0.5 * p.nz : p.nz * (0.5 - 0.5 * p.lane_z_spread + p.lane_z_spread * (i % 2));
        const int n_ctrl = 5;
        for (int c = 0; c < n_ctrl; ++c) {
            const double x = double(p.nx - 1) * c / double(n_ctrl - 1);
            const double jy = rng.uniform(-p.jitter_px, p.jitter_px);
            const double jz =
                p.planar ? 0.0 : rng.uniform(-p.jitter_px, p.jitter_px) * p.sx / p.sz;
            t.polyline.push_back({x, lane_y + jy, lane_z + jz});
        }
        spec.tubules.push_back(std::move(t));
    }

    for (int b = 0; b < p.n_branches; ++b) {
        const int ta = b % (p.n_tubules - 1);
        const int tb = ta + 1;
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const double x = rng.uniform(p.end_margin_px, p.nx - 1 - p.end_margin_px);
            bool clear = true;
            for (const auto& j : spec.junctions)
                if ((j.tubule == ta || j.tubule == tb) &&
                    std::fabs(j.x - x) < p.min_junction_separation_px)
                    clear = false;
            if (!clear) continue;
            PhantomTube br;
            br.radius_um = rng.uniform(p.branch_radius_um_min, p.branch_radius_um_max);
            br.polyline = {detail::point_on_polyline_at_x(spec.tubules[std::size_t(ta)].polyline, x),
                           detail::point_on_polyline_at_x(spec.tubules[std::size_t(tb)].polyline, x)};
            spec.branches.push_back(std::move(br));
            spec.junctions.push_back({ta, x});
            spec.junctions.push_back({tb, x});
            placed = true;
        }
        if (!placed)
            throw std::runtime_error(
                "generate_network: infeasible density, could not place branch " +
                std::to_string(b) + " with the requested junction separation");
    }
    return spec;
}

/// Ground-truth network metrics derived analytically from the construction:
/// each junction splits its tubule, every branch is one edge, tubule ends
/// are degree-1 nodes and attachment points are degree-3 nodes.
inline GraphMetrics phantom_ground_truth(const PhantomSpec& spec) {
    GraphMetrics m;
    for (std::size_t t = 0; t < spec.tubules.size(); ++t) {
        std::vector<double> xs;
        for (const auto& j : spec.junctions)
            if (j.tubule == int(t)) xs.push_back(j.x);
        std::sort(xs.begin(), xs.end());
        const auto& poly = spec.tubules[t].polyline;
        double prev = poly.front()[0];
        for (double x : xs) {
            m.n_edges_tubule += 1;
            m.total_length_tubule_um +=
                detail::polyline_length_um(poly, spec.sx, spec.sy, spec.sz, prev, x);
            prev = x;
        }
        m.n_edges_tubule += 1;
        m.total_length_tubule_um +=
            detail::polyline_length_um(poly, spec.sx, spec.sy, spec.sz, prev, poly.back()[0]);
        m.n_nodes_degree1 += 2;
        m.n_nodes_degree3 += int(xs.size());
    }
    for (const auto& br : spec.branches) {
        m.n_edges_branch += 1;
        const double dx = (br.polyline.back()[0] - br.polyline.front()[0]) * spec.sx;
        const double dy = (br.polyline.back()[1] - br.polyline.front()[1]) * spec.sy;
        const double dz = (br.polyline.back()[2] - br.polyline.front()[2]) * spec.sz;
        m.total_length_branch_um += std::sqrt(dx * dx + dy * dy + dz * dz) / 1000.0;
    }
    m.n_edges_all = m.n_edges_tubule + m.n_edges_branch;
    m.total_length_all_um = m.total_length_tubule_um + m.total_length_branch_um;
    return m;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct RenderParams {
    double psf_fwhm_lateral_nm = 200.0;
    double psf_fwhm_axial_nm = 600.0;
    bool apply_psf = false;                                   // off for clean oracles
    double snr = std::numeric_limits<double>::infinity();    // additive noise
    double brightness_ratio = 3.0;                           // tubule : branch
    std::uint64_t noise_seed = 1;
};

namespace detail {

inline void rasterize_tube(ImageStack& vol, const PhantomTube& tube, float intensity) {
    const double r_nm = tube.radius_um * 1000.0;
    for (std::size_t s = 1; s < tube.polyline.size(); ++s) {
        const auto& a = tube.polyline[s - 1];
        const auto& b = tube.polyline[s];
        const double ax = a[0] * vol.sx, ay = a[1] * vol.sy, az = a[2] * vol.sz;
        const double bx = b[0] * vol.sx, by = b[1] * vol.sy, bz = b[2] * vol.sz;
        const int x0 = std::max(0, int(std::floor(std::min(a[0], b[0]) - r_nm / vol.sx - 1)));
        const int x1 = std::min(vol.nx - 1, int(std::ceil(std::max(a[0], b[0]) + r_nm / vol.sx + 1)));
        const int y0 = std::max(0, int(std::floor(std::min(a[1], b[1]) - r_nm / vol.sy - 1)));
        const int y1 = std::min(vol.ny - 1, int(std::ceil(std::max(a[1], b[1]) + r_nm / vol.sy + 1)));
        const int z0 = std::max(0, int(std::floor(std::min(a[2], b[2]) - r_nm / vol.sz - 1)));
        const int z1 = std::min(vol.nz - 1, int(std::ceil(std::max(a[2], b[2]) + r_nm / vol.sz + 1)));
        const double ux = bx - ax, uy = by - ay, uz = bz - az;
        const double uu = ux * ux + uy * uy + uz * uz;
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double px = x * vol.sx - ax, py = y * vol.sy - ay, pz = z * vol.sz - az;
                    double t = uu > 0.0 ? (px * ux + py * uy + pz * uz) / uu : 0.0;
                    t = std::clamp(t, 0.0, 1.0);
                    const double dx = px - t * ux, dy = py - t * uy, dz = pz - t * uz;
                    if (dx * dx + dy * dy + dz * dz <= r_nm * r_nm) {
                        float& v = vol.at(x, y, z);
                        v = std::max(v, intensity);
                    }
                }
    }
}

}  // namespace detail

/// Rasterizes the network (tubules at intensity 1, branches dimmer by the
/// brightness ratio), optionally blurs with the anisotropic PSF, optionally
/// adds Gaussian noise with sigma = peak / snr. snr = inf leaves the render
/// untouched.
inline ImageStack render(const PhantomSpec& spec, const RenderParams& rp = {}) {
    ImageStack vol(spec.nx, spec.ny, spec.nz);
    vol.sx = spec.sx; vol.sy = spec.sy; vol.sz = spec.sz;
    vol.range_lo = 0.0;
    vol.range_hi = 1.0;

    const float branch_val = float(1.0 / std::max(1.0, rp.brightness_ratio));
    for (const auto& t : spec.tubules) detail::rasterize_tube(vol, t, 1.0f);
    for (const auto& b : spec.branches) detail::rasterize_tube(vol, b, branch_val);

    if (rp.apply_psf) {
        const double sigx = rp.psf_fwhm_lateral_nm * fwhm_to_sigma / vol.sx;
        const double sigy = rp.psf_fwhm_lateral_nm * fwhm_to_sigma / vol.sy;
        const double sigz = rp.psf_fwhm_axial_nm * fwhm_to_sigma / vol.sz;
        std::vector<float> tmp(vol.size());
        auto blur_axis = [&](double sig, int axis) {
            if (sig <= 0.31) return;  // narrower than a voxel: no visible blur
            const auto k = conv::gaussian_kernel(sig, 0);
            conv::convolve_axis(vol.voxels.data(), tmp.data(), vol.nx, vol.ny, vol.nz, axis, k);
            vol.voxels.swap(tmp);
        };
        blur_axis(sigx, 0);
        blur_axis(sigy, 1);
        blur_axis(sigz, 2);
    }

    if (std::isfinite(rp.snr) && rp.snr > 0.0) {
        detail::SplitMix64 rng(rp.noise_seed * 0x2545f4914f6cdd1dull + spec.seed);
        const double sigma = 1.0 / rp.snr;
        for (float& v : vol.voxels) v = float(v + sigma * rng.normal());
        vol.observe_range();
    }
    return vol;
}

// ---------------------------------------------------------------------------
// degrade
// ---------------------------------------------------------------------------

/// Models coarser acquisition: lateral block averaging by the factor,
/// optional extra noise, then nearest-neighbour resampling back onto the
/// original grid. Z is untouched.
inline ImageStack degrade(const ImageStack& s, int factor,
                          double extra_noise_snr = std::numeric_limits<double>::infinity(),
                          std::uint64_t noise_seed = 1) {
    if (factor == 1) return s;
    if (factor != 2 && factor != 4 && factor != 8)
        throw std::invalid_argument("degrade: factor must be 1, 2, 4 or 8");
    if (s.nx % factor != 0 || s.ny % factor != 0)
        throw std::invalid_argument("degrade: dims not divisible by factor");

    ImageStack out = s;
    detail::SplitMix64 rng(noise_seed * 0x9e3779b97f4a7c15ull + 7);
    const bool noisy = std::isfinite(extra_noise_snr) && extra_noise_snr > 0.0;
    const double sigma = noisy ? (s.range_hi - s.range_lo) / extra_noise_snr : 0.0;
    for (int z = 0; z < s.nz; ++z) {
        Image2D lr = block_downsample(s.slice(z), factor);
        if (noisy)
            for (float& v : lr.pixels) v = float(v + sigma * rng.normal());
        out.set_slice(z, upsample_nn(lr, s.nx, s.ny));
    }
    return out;
}

// ---------------------------------------------------------------------------
// PhantomSpec JSON round trip (CLI artifact)
// ---------------------------------------------------------------------------

inline nlohmann::json phantom_spec_to_json(const PhantomSpec& s) {
    nlohmann::json j;
    j["dims"] = {s.nx, s.ny, s.nz};
    j["voxel_size_nm"] = {s.sx, s.sy, s.sz};
    j["seed"] = s.seed;
    auto tubes = [](const std::vector<PhantomTube>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : v) {
            nlohmann::json jt;
            jt["radius_um"] = t.radius_um;
            jt["polyline"] = nlohmann::json::array();
            for (const auto& p : t.polyline) jt["polyline"].push_back({p[0], p[1], p[2]});
            arr.push_back(std::move(jt));
        }
        return arr;
    };
    j["tubules"] = tubes(s.tubules);
    j["branches"] = tubes(s.branches);
    j["junctions"] = nlohmann::json::array();
    for (const auto& jn : s.junctions) j["junctions"].push_back({{"tubule", jn.tubule}, {"x", jn.x}});
    return j;
}

}  // namespace poro
