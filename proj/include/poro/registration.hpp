#pragma once
// Rigid X-Y alignment by mutual-information grid search. Registration is
// 2D only; stacks are acquired without Z drift, so no Z alignment here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "core.hpp"
#include "resample.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// RigidTransform2D
// ---------------------------------------------------------------------------

struct RigidTransform2D {
    double theta_deg = 0.0;  // rotation, degrees; |theta| stays <= 10
    double tx = 0.0, ty = 0.0;
    double cx = 0.0, cy = 0.0;  // rotation center, pixel coordinates

    [[nodiscard]] bool is_identity() const {
        return theta_deg == 0.0 && tx == 0.0 && ty == 0.0;
    }
};

struct SearchWindow {
    double max_shift_px = 16.0;
    double max_rotation_deg = 2.0;
};

// ---------------------------------------------------------------------------
// Mutual information
// ---------------------------------------------------------------------------

namespace detail {

inline void minmax(const Image2D& im, double& lo, double& hi) {
    lo = im.pixels[0];
    hi = im.pixels[0];
    for (float v : im.pixels) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
}

// MI over the pixels where mask != 0 (mask may be null for all pixels).
inline double mutual_information_masked(const Image2D& a, const Image2D& b,
                                        const std::uint8_t* mask, int bins) {
    double alo, ahi, blo, bhi;
    minmax(a, alo, ahi);
    minmax(b, blo, bhi);
    if (ahi <= alo || bhi <= blo) return 0.0;  // constant image: MI defined as 0

    const double ascale = bins / (ahi - alo);
    const double bscale = bins / (bhi - blo);
    std::vector<double> joint(std::size_t(bins) * bins, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask && !mask[i]) continue;
        int ia = int((a.pixels[i] - alo) * ascale);
        int ib = int((b.pixels[i] - blo) * bscale);
        ia = std::min(ia, bins - 1);
        ib = std::min(ib, bins - 1);
        joint[std::size_t(ia) * bins + ib] += 1.0;
        ++n;
    }
    if (n == 0) return 0.0;

    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    const double inv = 1.0 / double(n);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            const double p = joint[std::size_t(i) * bins + j] * inv;
            joint[std::size_t(i) * bins + j] = p;
            pa[i] += p;
            pb[j] += p;
        }
    double mi = 0.0;
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            const double p = joint[std::size_t(i) * bins + j];
            if (p > 0.0) mi += p * std::log(p / (pa[i] * pb[j]));
        }
    return mi;
}

}  // namespace detail

/// MI in nats over a joint histogram with `bins` equal-width bins per image,
/// each spanning that image's observed range. A constant image gives 0.
inline double mutual_information(const Image2D& a, const Image2D& b, int bins = 64) {
    if (!a.same_dims(b)) throw std::invalid_argument("mutual_information: dims mismatch");
    if (bins < 2) throw std::invalid_argument("mutual_information: bins must be >= 2");
    return detail::mutual_information_masked(a, b, nullptr, bins);
}

// ---------------------------------------------------------------------------
// apply_transform — backward warp with bilinear sampling
// ---------------------------------------------------------------------------

struct WarpResult {
    Image2D image;
    std::vector<std::uint8_t> valid;  // 1 where all bilinear taps were in bounds
};

/// Moves image content by t: output(y) = image(R(-theta) * (y - c - t) + c).
/// Out-of-bounds samples produce 0 and a cleared validity flag.
inline WarpResult apply_transform(const Image2D& img, const RigidTransform2D& t) {
    WarpResult r{Image2D(img.width, img.height), std::vector<std::uint8_t>(img.size(), 0)};
    const double rad = -t.theta_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double px = x - t.cx - t.tx;
            const double py = y - t.cy - t.ty;
            const double sxf = c * px - s * py + t.cx;
            const double syf = s * px + c * py + t.cy;
            if (sxf < 0.0 || syf < 0.0 || sxf > img.width - 1 || syf > img.height - 1) continue;
            const int x0 = std::min(int(sxf), img.width - 2 >= 0 ? img.width - 2 : 0);
            const int y0 = std::min(int(syf), img.height - 2 >= 0 ? img.height - 2 : 0);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double fx = sxf - x0, fy = syf - y0;
            const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
            const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
            const double v = (1 - fy) * ((1 - fx) * v00 + fx * v10) +
                             fy * ((1 - fx) * v01 + fx * v11);
            r.image.at(x, y) = float(v);
            r.valid[std::size_t(y) * img.width + x] = 1;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// register_rigid — coarse-to-fine exhaustive search
// ---------------------------------------------------------------------------

namespace detail {

struct Candidate {
    double mi = -1.0;
    double tx = 0.0, ty = 0.0, theta = 0.0;
};

// Deterministic preference: higher MI, then smaller (|tx|+|ty|, |theta|),
// then lexicographic (tx, ty, theta).
inline bool better(const Candidate& a, const Candidate& b) {
    if (a.mi != b.mi) return a.mi > b.mi;
    const double la = std::fabs(a.tx) + std::fabs(a.ty);
    const double lb = std::fabs(b.tx) + std::fabs(b.ty);
    if (la != lb) return la < lb;
    const double ra = std::fabs(a.theta), rb = std::fabs(b.theta);
    if (ra != rb) return ra < rb;
    return std::tie(a.tx, a.ty, a.theta) < std::tie(b.tx, b.ty, b.theta);
}

inline double score_candidate(const Image2D& moving, const Image2D& fixed, double tx,
                              double ty, double theta, int bins) {
    RigidTransform2D t;
    t.tx = tx;
    t.ty = ty;
    t.theta_deg = theta;
    t.cx = 0.5 * (moving.width - 1);
    t.cy = 0.5 * (moving.height - 1);
    const WarpResult w = apply_transform(moving, t);
    return mutual_information_masked(w.image, fixed, w.valid.data(), bins);
}

inline std::vector<double> grid(double center, double radius, double step) {
    std::vector<double> v;
    const int n = int(std::floor(radius / step + 1e-9));
    for (int i = -n; i <= n; ++i) v.push_back(center + i * step);
    return v;
}

}  // namespace detail

/// Finds the rigid transform maximizing MI between the warped moving image
/// and the fixed image. Coarse-to-fine over a 4x/2x/1x decimation pyramid;
/// translation steps 4/2/1 px with a final 0.5 px refinement, rotation steps
/// 1.0/0.5/0.25 degrees. Ties break toward the smallest motion, so
/// register_rigid(x, x) is exactly the identity.
inline RigidTransform2D register_rigid(const Image2D& moving, const Image2D& fixed,
                                       const SearchWindow& win, int bins = 64) {
    if (!moving.same_dims(fixed)) throw std::invalid_argument("register_rigid: dims mismatch");
    if (win.max_shift_px < 0.0 || win.max_rotation_deg < 0.0)
        throw std::invalid_argument("register_rigid: empty search window");

    struct Level {
        int decim;
        double tstep, rstep;
    };
    const Level levels[] = {{4, 4.0, 1.0}, {2, 2.0, 0.5}, {1, 1.0, 0.25}, {1, 0.5, 0.25}};

    detail::Candidate best{-1.0, 0.0, 0.0, 0.0};
    bool first_level = true;
    double prev_tstep = 0.0, prev_rstep = 0.0;

    for (const Level& lv : levels) {
        const Image2D m = decimate(moving, lv.decim);
        const Image2D f = decimate(fixed, lv.decim);

        std::vector<double> txs, tys, ths;
        if (first_level) {
            txs = detail::grid(0.0, win.max_shift_px, lv.tstep);
            tys = txs;
            ths = detail::grid(0.0, win.max_rotation_deg, lv.rstep);
        } else {
            txs = detail::grid(best.tx, prev_tstep, lv.tstep);
            tys = detail::grid(best.ty, prev_tstep, lv.tstep);
            ths = detail::grid(best.theta, prev_rstep, lv.rstep);
        }
        auto clamp_into = [](std::vector<double>& v, double lim) {
            for (double& x : v) x = std::clamp(x, -lim, lim);
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        clamp_into(txs, win.max_shift_px);
        clamp_into(tys, win.max_shift_px);
        clamp_into(ths, win.max_rotation_deg);

        std::vector<detail::Candidate> cands;
        for (double th : ths)
            for (double ty : tys)
                for (double tx : txs) cands.push_back({-1.0, tx, ty, th});

        std::vector<detail::Candidate> scored(cands.size());
        parallel_for(std::int64_t(cands.size()), [&](std::int64_t i) {
            detail::Candidate c = cands[std::size_t(i)];
            c.mi = detail::score_candidate(m, f, c.tx / lv.decim, c.ty / lv.decim, c.theta, bins);
            scored[std::size_t(i)] = c;
        });
        detail::Candidate lvbest = scored[0];
        for (const auto& c : scored)
            if (detail::better(c, lvbest)) lvbest = c;

        best = lvbest;
        prev_tstep = lv.tstep;
        prev_rstep = lv.rstep;
        first_level = false;
    }

    RigidTransform2D t;
    t.tx = best.tx;
    t.ty = best.ty;
    t.theta_deg = best.theta;
    t.cx = 0.5 * (moving.width - 1);
    t.cy = 0.5 * (moving.height - 1);
    return t;
}

}  // namespace poro
