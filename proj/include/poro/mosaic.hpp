#pragma once
// Patch decomposition, overlap-averaged restitching, and per-patch
// background homogenization for models that shift patch intensity.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// PatchGrid
// ---------------------------------------------------------------------------

struct PatchGrid {
    int patch_size = 0;
    int stride = 0;
    std::vector<std::pair<int, int>> origins;  // (x, y) top-left, row-major order
    int source_width = 0, source_height = 0;
};

namespace detail {

inline std::vector<int> patch_starts(int dim, int patch, int stride) {
    std::vector<int> starts;
    const int last = dim - patch;
    int x = 0;
    while (x < last) {
        starts.push_back(x);
        x += stride;
    }
    starts.push_back(last);  // edge patch clamped so it never exceeds bounds
    return starts;
}

}  // namespace detail

/// Splits an image into square patches with the given overlap fraction
/// (0, 0.25 or 0.5). stride = patch_size * (1 - overlap); the final row and
/// column are clamped to the image bounds, so edge patches may overlap more.
inline std::pair<PatchGrid, std::vector<Image2D>> extract_patches(const Image2D& img,
                                                                  int patch_size,
                                                                  double overlap_fraction) {
    if (patch_size > std::min(img.width, img.height))
        throw std::invalid_argument("extract_patches: patch larger than image");
    const bool supported = overlap_fraction == 0.0 || overlap_fraction == 0.25 ||
                           overlap_fraction == 0.5;
    if (!supported) throw std::invalid_argument("extract_patches: overlap must be 0, 0.25 or 0.5");

    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.stride = int(std::lround(patch_size * (1.0 - overlap_fraction)));
    grid.source_width = img.width;
    grid.source_height = img.height;

    const auto xs = detail::patch_starts(img.width, patch_size, grid.stride);
    const auto ys = detail::patch_starts(img.height, patch_size, grid.stride);
    std::vector<Image2D> patches;
    patches.reserve(xs.size() * ys.size());
    for (int y0 : ys)
        for (int x0 : xs) {
            grid.origins.emplace_back(x0, y0);
            Image2D p(patch_size, patch_size);
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x) p.at(x, y) = img.at(x0 + x, y0 + y);
            patches.push_back(std::move(p));
        }
    return {std::move(grid), std::move(patches)};
}

/// Reassembles patches; overlapping pixels are averaged (64-bit accumulation).
inline Image2D stitch(const PatchGrid& grid, const std::vector<Image2D>& patches) {
    if (patches.size() != grid.origins.size())
        throw std::invalid_argument("stitch: patch count mismatch");
    for (const auto& p : patches)
        if (p.width != grid.patch_size || p.height != grid.patch_size)
            throw std::invalid_argument("stitch: patch size mismatch");

    std::vector<double> acc(std::size_t(grid.source_width) * grid.source_height, 0.0);
    std::vector<std::uint32_t> cnt(acc.size(), 0);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto [x0, y0] = grid.origins[i];
        const Image2D& p = patches[i];
        for (int y = 0; y < grid.patch_size; ++y)
            for (int x = 0; x < grid.patch_size; ++x) {
                const std::size_t idx =
                    std::size_t(y0 + y) * grid.source_width + std::size_t(x0 + x);
                acc[idx] += p.at(x, y);
                cnt[idx] += 1;
            }
    }
    Image2D out(grid.source_width, grid.source_height);
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.pixels[i] = cnt[i] ? float(acc[i] / cnt[i]) : 0.0f;
    return out;
}

// ---------------------------------------------------------------------------
// Background homogenization
// ---------------------------------------------------------------------------

/// Which per-patch reference is pulled down to the baseline. The mean of the
/// darkest 10% of pixels is the default; the literal patch minimum is kept as
/// a selectable alternative since the two differ whenever a patch's darkest
/// pixel sits below its background average.
enum class BackgroundRef { darkest_mean, patch_min };

struct HomogenizeResult {
    // Shifted patches in double precision. The per-patch offset is quantized
    // to a multiple of 2^-30, so for integer-valued inputs below 2^16 every
    // subtraction is exact (<= 47 significant bits) and within-patch pixel
    // differences survive bit-for-bit.
    std::vector<std::vector<double>> patches;
    int patch_width = 0, patch_height = 0;
    std::vector<double> backgrounds;  // per-patch mean of the darkest 10%
    std::vector<double> offsets;      // amount subtracted from each patch
    double baseline = 0.0;            // min over per-patch backgrounds

    [[nodiscard]] Image2D patch_as_image(std::size_t k) const {
        Image2D img(patch_width, patch_height);
        for (std::size_t i = 0; i < patches[k].size(); ++i) img.pixels[i] = float(patches[k][i]);
        return img;
    }
    [[nodiscard]] std::vector<Image2D> patches_as_images() const {
        std::vector<Image2D> out;
        out.reserve(patches.size());
        for (std::size_t k = 0; k < patches.size(); ++k) out.push_back(patch_as_image(k));
        return out;
    }
};

namespace detail {

inline double quantize_offset(double o) { return std::ldexp(std::round(std::ldexp(o, 30)), -30); }

}  // namespace detail

/// Estimates each patch's background as the mean of its darkest 10% of
/// pixels (at least one), takes the minimum across patches as the baseline B,
/// and subtracts a constant from every patch whose background sits above B so
/// that its background average lands on B. Only a constant shift per patch:
/// within-patch contrast is untouched.
inline HomogenizeResult homogenize_background(const std::vector<Image2D>& patches,
                                              double darkest_fraction = 0.10,
                                              BackgroundRef ref = BackgroundRef::darkest_mean) {
    if (patches.empty()) throw std::invalid_argument("homogenize_background: no patches");
    HomogenizeResult r;
    r.patch_width = patches[0].width;
    r.patch_height = patches[0].height;
    r.backgrounds.resize(patches.size());
    r.offsets.assign(patches.size(), 0.0);
    r.patches.resize(patches.size());

    std::vector<float> sorted;
    for (std::size_t k = 0; k < patches.size(); ++k) {
        const auto& p = patches[k];
        if (p.size() == 0) throw std::invalid_argument("homogenize_background: empty patch");
        if (p.width != r.patch_width || p.height != r.patch_height)
            throw std::invalid_argument("homogenize_background: mixed patch dims");
        const std::size_t n_bg =
            std::max<std::size_t>(1, std::size_t(std::floor(darkest_fraction * double(p.size()))));
        sorted.assign(p.pixels.begin(), p.pixels.end());
        std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(n_bg - 1), sorted.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < n_bg; ++i) sum += sorted[i];
        r.backgrounds[k] = sum / double(n_bg);
    }
    r.baseline = *std::min_element(r.backgrounds.begin(), r.backgrounds.end());

    for (std::size_t k = 0; k < patches.size(); ++k) {
        const auto& src = patches[k].pixels;
        auto& dst = r.patches[k];
        dst.assign(src.begin(), src.end());
        if (r.backgrounds[k] <= r.baseline) continue;  // already on the baseline

        double offset;
        if (ref == BackgroundRef::darkest_mean) {
            offset = r.backgrounds[k] - r.baseline;
        } else {
            const float mn = *std::min_element(src.begin(), src.end());
            offset = double(mn) - r.baseline;
        }
        offset = detail::quantize_offset(offset);
        r.offsets[k] = offset;
        for (double& v : dst) v -= offset;
    }
    return r;
}

}  // namespace poro
