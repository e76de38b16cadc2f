#pragma once
// Binarization of vesselness responses: multi-Otsu thresholds halved for
// faint-branch preservation, applied through two-threshold hysteresis
// (8-connectivity in 2D, 26-connectivity in 3D).

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "resample.hpp"
#include "vesselness.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// multi_otsu
// ---------------------------------------------------------------------------

/// Thresholds maximizing between-class variance of the binned histogram,
/// found by exhaustive search over bin boundaries; returned as bin centers.
/// Ties break toward the lexicographically smallest thresholds.
inline std::vector<double> multi_otsu(std::span<const float> values, int classes = 3,
                                      int bins = 256) {
    if (classes < 2 || classes > 4) throw std::invalid_argument("multi_otsu: classes in {2,3,4}");
    if (bins < classes) throw std::invalid_argument("multi_otsu: bins < classes");
    if (values.empty()) throw std::invalid_argument("multi_otsu: empty input");
    double lo = values[0], hi = values[0];
    for (float v : values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    if (hi <= lo) throw std::invalid_argument("multi_otsu: constant input");

    std::vector<double> hist(std::size_t(bins), 0.0);
    const double scale = bins / (hi - lo);
    for (float v : values) {
        int b = int((v - lo) * scale);
        b = std::min(b, bins - 1);
        hist[std::size_t(b)] += 1.0;
    }
    const double bin_width = (hi - lo) / bins;
    auto center = [&](int b) { return lo + (b + 0.5) * bin_width; };

    // prefix sums of mass and mass*center
    std::vector<double> w(std::size_t(bins) + 1, 0.0), m(std::size_t(bins) + 1, 0.0);
    for (int b = 0; b < bins; ++b) {
        w[std::size_t(b) + 1] = w[std::size_t(b)] + hist[std::size_t(b)];
        m[std::size_t(b) + 1] = m[std::size_t(b)] + hist[std::size_t(b)] * center(b);
    }
    const double total_w = w[std::size_t(bins)];
    const double total_mean = m[std::size_t(bins)] / total_w;

    // between-class variance of classes over bin ranges [a, b]
    auto bcv_term = [&](int a, int b) {
        const double cw = w[std::size_t(b) + 1] - w[std::size_t(a)];
        if (cw <= 0.0) return 0.0;
        const double cm = (m[std::size_t(b) + 1] - m[std::size_t(a)]) / cw;
        const double d = cm - total_mean;
        return cw * d * d;
    };

    double best = -1.0;
    std::vector<int> best_cut;
    std::vector<int> cut(std::size_t(classes) - 1);
    // cut[i] = last bin of class i; iterate in lexicographic order so the
    // first strictly-better candidate wins ties
    auto search = [&](auto&& self, int level, int from) -> void {
        if (level == classes - 1) {
            double v = bcv_term(0, cut[0]);
            for (int c = 1; c < classes - 1; ++c) v += bcv_term(cut[std::size_t(c) - 1] + 1, cut[std::size_t(c)]);
            v += bcv_term(cut[std::size_t(classes) - 2] + 1, bins - 1);
            if (v > best) {
                best = v;
                best_cut = cut;
            }
            return;
        }
        for (int b = from; b <= bins - 1 - (classes - 1 - level); ++b) {
            cut[std::size_t(level)] = b;
            self(self, level + 1, b + 1);
        }
    };
    search(search, 0, 0);

    std::vector<double> thresholds;
    thresholds.reserve(best_cut.size());
    for (int b : best_cut) thresholds.push_back(center(b));
    return thresholds;
}

// ---------------------------------------------------------------------------
// Hysteresis thresholding
// ---------------------------------------------------------------------------

struct HysteresisThresholds {
    double low = 0.1;
    double high = 0.3;

    void validate() const {
        if (!(low >= 0.0 && low < high))
            throw std::invalid_argument("HysteresisThresholds: need 0 <= low < high");
    }
};

/// Keeps voxels >= low that connect (26-connectivity; 8 in a single slice)
/// to some voxel >= high.
inline BinaryVolume hysteresis(const ImageStack& s, const HysteresisThresholds& t) {
    t.validate();
    BinaryVolume out = BinaryVolume::like(s);
    std::vector<std::size_t> stack;
    const float lo = float(t.low), hi = float(t.high);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.voxels[i] >= hi && !out.bits[i]) {
            out.bits[i] = 1;
            stack.push_back(i);
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                const int z = int(cur / (std::size_t(s.nx) * s.ny));
                const std::size_t rem = cur % (std::size_t(s.nx) * s.ny);
                const int y = int(rem / std::size_t(s.nx));
                const int x = int(rem % std::size_t(s.nx));
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (dx == 0 && dy == 0 && dz == 0) continue;
                            const int nx2 = x + dx, ny2 = y + dy, nz2 = z + dz;
                            if (nx2 < 0 || nx2 >= s.nx || ny2 < 0 || ny2 >= s.ny || nz2 < 0 ||
                                nz2 >= s.nz)
                                continue;
                            const std::size_t ni = s.index(nx2, ny2, nz2);
                            if (!out.bits[ni] && s.voxels[ni] >= lo) {
                                out.bits[ni] = 1;
                                stack.push_back(ni);
                            }
                        }
            }
        }
    }
    return out;
}

inline Binary2D hysteresis(const Image2D& img, const HysteresisThresholds& t) {
    ImageStack s(img.width, img.height, 1);
    s.voxels = img.pixels;
    return hysteresis(s, t).slice(0);
}

// ---------------------------------------------------------------------------
// binarize_pipeline
// ---------------------------------------------------------------------------

enum class ThresholdMode {
    fixed,     // use the supplied thresholds as-is (default 0.1 / 0.3)
    auto_otsu, // 3-class multi-Otsu on the response, divided by two
    cyclegan   // fixed 0.3 / 0.5 for inputs with inflated intensities
};

struct BinarizeParams {
    VesselnessParams vessel{};
    int dimensionality = 3;  // 2 = per-slice, 3 = volumetric after Z resampling
    ThresholdMode mode = ThresholdMode::fixed;
    HysteresisThresholds fixed_thresholds{0.1, 0.3};
    double z_factor = 0.0;   // 0 = derive sz/sx from spacing for isotropic voxels
};

struct BinarizeResult {
    BinaryVolume mask;
    ImageStack response;
    double low = 0.0, high = 0.0;
    double z_factor_used = 1.0;
};

namespace detail {

inline HysteresisThresholds pick_thresholds(const ImageStack& response,
                                            const BinarizeParams& p) {
    switch (p.mode) {
        case ThresholdMode::cyclegan: return {0.3, 0.5};
        case ThresholdMode::fixed: return p.fixed_thresholds;
        case ThresholdMode::auto_otsu: break;
    }
    const auto t = multi_otsu(std::span<const float>(response.voxels), 3, 256);
    return {t[0] / 2.0, t[1] / 2.0};
}

inline bool is_constant(const std::vector<float>& v) {
    for (float x : v)
        if (x != v[0]) return false;
    return true;
}

}  // namespace detail

/// Standard binarization pipeline. 3D: resample Z to isotropic voxels, run
/// the 3D vesselness filter, threshold with multi-Otsu/2 or fixed values,
/// then hysteresis. 2D: each slice is filtered and thresholded on its own.
inline BinarizeResult binarize_pipeline(const ImageStack& stack, const BinarizeParams& p) {
    p.vessel.validate();
    BinarizeResult r;

    if (p.dimensionality == 3) {
        double factor = p.z_factor > 0.0 ? p.z_factor : stack.sz / stack.sx;
        ImageStack iso = (factor != 1.0 && stack.nz > 1) ? resample_z(stack, factor) : stack;
        r.z_factor_used = (factor != 1.0 && stack.nz > 1) ? factor : 1.0;
        r.response = jerman_vesselness(iso, p.vessel);
        if (detail::is_constant(r.response.voxels)) {
            r.mask = BinaryVolume::like(r.response);
            return r;
        }
        const HysteresisThresholds t = detail::pick_thresholds(r.response, p);
        r.low = t.low;
        r.high = t.high;
        r.mask = hysteresis(r.response, t);
        return r;
    }
    if (p.dimensionality != 2) throw std::invalid_argument("binarize_pipeline: dim must be 2 or 3");

    r.response = ImageStack(stack.nx, stack.ny, stack.nz);
    r.response.sx = stack.sx; r.response.sy = stack.sy; r.response.sz = stack.sz;
    r.response.range_hi = 1.0;
    r.mask = BinaryVolume::like(stack);
    r.z_factor_used = 1.0;
    for (int z = 0; z < stack.nz; ++z) {
        const Image2D resp = jerman_vesselness(stack.slice(z), p.vessel);
        r.response.set_slice(z, resp);
        ImageStack one(stack.nx, stack.ny, 1);
        one.voxels = resp.pixels;
        if (detail::is_constant(one.voxels)) continue;
        const HysteresisThresholds t = detail::pick_thresholds(one, p);
        // thresholds reported from the last processed slice
        r.low = t.low;
        r.high = t.high;
        const BinaryVolume m = hysteresis(one, t);
        std::copy(m.bits.begin(), m.bits.end(),
                  r.mask.bits.begin() + std::size_t(z) * stack.nx * stack.ny);
    }
    return r;
}

}  // namespace poro
