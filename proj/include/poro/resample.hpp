#pragma once
// Grid resampling: Z-axis linear resampling toward isotropic voxels,
// nearest-neighbour lateral upsampling, and block-average downsampling.

#include <cmath>
#include <stdexcept>

#include "core.hpp"

namespace poro {

/// Resamples along Z by `factor` with endpoint-anchored linear interpolation:
/// sample positions map [0, nz-1] -> [0, nz'-1] affinely, so the first and
/// last slices are reproduced exactly. nz' = round(nz * factor), sz' = sz / factor.
inline ImageStack resample_z(const ImageStack& s, double factor) {
    if (factor <= 0.0) throw std::invalid_argument("resample_z: factor must be > 0");
    if (factor == 1.0) return s;
    if (s.nz < 2) throw std::invalid_argument("resample_z: nz < 2 with factor != 1");

    const int nz_out = std::max(1, int(std::lround(double(s.nz) * factor)));
    ImageStack out(s.nx, s.ny, nz_out);
    out.sx = s.sx;
    out.sy = s.sy;
    out.sz = s.sz / factor;
    out.range_lo = s.range_lo;
    out.range_hi = s.range_hi;

    const std::size_t slice_px = std::size_t(s.nx) * s.ny;
    parallel_for(nz_out, [&](std::int64_t k) {
        double zsrc;
        if (nz_out == 1)
            zsrc = 0.5 * (s.nz - 1);
        else
            zsrc = double(k) * double(s.nz - 1) / double(nz_out - 1);
        const int z0 = std::min(int(std::floor(zsrc)), s.nz - 1);
        const int z1 = std::min(z0 + 1, s.nz - 1);
        const double t = zsrc - z0;
        const float* a = s.voxels.data() + std::size_t(z0) * slice_px;
        const float* b = s.voxels.data() + std::size_t(z1) * slice_px;
        float* dst = out.voxels.data() + std::size_t(k) * slice_px;
        for (std::size_t i = 0; i < slice_px; ++i)
            dst[i] = float((1.0 - t) * a[i] + t * b[i]);
    });
    return out;
}

/// Block-replicating nearest-neighbour upsampling. Target dims must be
/// integer multiples of the source dims.
inline Image2D upsample_nn(const Image2D& img, int target_w, int target_h) {
    if (target_w < img.width || target_h < img.height ||
        target_w % img.width != 0 || target_h % img.height != 0)
        throw std::invalid_argument("upsample_nn: target dims must be integer multiples");
    const int rx = target_w / img.width;
    const int ry = target_h / img.height;
    Image2D out(target_w, target_h);
    for (int y = 0; y < target_h; ++y) {
        const float* src = img.pixels.data() + std::size_t(y / ry) * img.width;
        float* dst = out.pixels.data() + std::size_t(y) * target_w;
        for (int x = 0; x < target_w; ++x) dst[x] = src[x / rx];
    }
    return out;
}

/// Mean over factor x factor blocks; dims must divide evenly.
inline Image2D block_downsample(const Image2D& img, int factor) {
    if (factor < 1) throw std::invalid_argument("block_downsample: factor must be >= 1");
    if (factor == 1) return img;
    if (img.width % factor != 0 || img.height % factor != 0)
        throw std::invalid_argument("block_downsample: dims not divisible by factor");
    Image2D out(img.width / factor, img.height / factor);
    const double inv = 1.0 / (double(factor) * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx)
                    acc += img.at(x * factor + dx, y * factor + dy);
            out.at(x, y) = float(acc * inv);
        }
    return out;
}

/// Block-mean decimation that tolerates non-divisible dims by cropping the
/// trailing remainder (used by the registration pyramid).
inline Image2D decimate(const Image2D& img, int factor) {
    if (factor == 1) return img;
    const int w = img.width - img.width % factor;
    const int h = img.height - img.height % factor;
    if (w < factor || h < factor) throw std::invalid_argument("decimate: image too small");
    Image2D cropped(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) cropped.at(x, y) = img.at(x, y);
    return block_downsample(cropped, factor);
}

}  // namespace poro
