#pragma once
// Multiscale Hessian enhancement of tubular structures, in 2D (per-slice
// analysis) and 3D (stack analysis). Scales are expressed as the full width
// at half maximum across a vessel, in pixels; the response is the
// regularized eigenvalue ratio filter with sensitivity tau, reduced across
// scales by a voxel-wise maximum.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace poro {

// FWHM of a Gaussian profile = 2*sqrt(2 ln 2) * sigma.
inline constexpr double fwhm_to_sigma = 0.42466090014400953;

// ---------------------------------------------------------------------------
// Scale configuration
// ---------------------------------------------------------------------------

struct ScaleRange {
    double min_fwhm = 2.0;
    double max_fwhm = 24.0;
    double step = 0.5;

    [[nodiscard]] std::vector<double> scales() const {
        if (min_fwhm <= 0 || max_fwhm < min_fwhm || step <= 0)
            throw std::invalid_argument("ScaleRange: need 0 < min <= max and step > 0");
        std::vector<double> s;
        for (double v = min_fwhm; v <= max_fwhm + 1e-9; v += step) s.push_back(v);
        return s;
    }
};

struct VesselnessParams {
    ScaleRange scales{};
    double tau = 0.5;           // sensitivity in (0, 1]
    bool bright_on_dark = true; // true for fluorescence

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in (0,1]");
        (void)scales.scales();
    }
};

// ---------------------------------------------------------------------------
// Separable convolution with sampled Gaussian-derivative kernels
// ---------------------------------------------------------------------------

namespace conv {

/// Sampled Gaussian (derivative) kernel truncated at 4 sigma, with discrete
/// moment corrections so that constants, ramps and parabolas produce exact
/// 0th/1st/2nd derivatives. Kernels are correlation kernels: the order-1
/// kernel applied as out[i] = sum_j k[j] * in[i+j-R] yields d/dx.
inline std::vector<double> gaussian_kernel(double sigma, int order) {
    if (sigma <= 0.3) throw std::invalid_argument("gaussian_kernel: sigma must be > 0.3 px");
    const int radius = int(std::ceil(4.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int j = -radius; j <= radius; ++j) k[std::size_t(j + radius)] = std::exp(-j * j * inv2s2);

    double sum = 0.0;
    for (double v : k) sum += v;
    for (double& v : k) v /= sum;  // base Gaussian, unit mass

    if (order == 0) return k;
    if (order == 1) {
        std::vector<double> d(k.size());
        double m1 = 0.0;
        for (int j = -radius; j <= radius; ++j) {
            d[std::size_t(j + radius)] = j * k[std::size_t(j + radius)];
            m1 += double(j) * d[std::size_t(j + radius)];
        }
        for (double& v : d) v /= m1;  // ramp response = 1
        return d;
    }
    if (order == 2) {
        std::vector<double> d(k.size());
        const double s2 = sigma * sigma;
        double m0 = 0.0;
        for (int j = -radius; j <= radius; ++j) {
            d[std::size_t(j + radius)] = (j * j / s2 - 1.0) / s2 * k[std::size_t(j + radius)];
            m0 += d[std::size_t(j + radius)];
        }
        const double bias = m0 / double(d.size());
        double m2 = 0.0;
        for (int j = -radius; j <= radius; ++j) {
            d[std::size_t(j + radius)] -= bias;  // constant response = 0
            m2 += double(j) * j * d[std::size_t(j + radius)];
        }
        for (double& v : d) v *= 2.0 / m2;  // parabola x^2 response = 2
        return d;
    }
    throw std::invalid_argument("gaussian_kernel: order must be 0, 1 or 2");
}

// Mirror index with edge repeat: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline int mirror(int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - 1 - i;
    return i;
}

// acc += k * src over n contiguous samples; isolated so the compiler can
// vectorize it without aliasing doubts
inline void axpy(double* __restrict__ acc, const float* __restrict__ src, double k, int n) {
    for (int i = 0; i < n; ++i) acc[i] += k * src[i];
}

/// Correlation along one axis of an x-fastest volume; reflect boundary,
/// 64-bit accumulation. Throws when the kernel is wider than the axis allows.
inline void convolve_axis(const float* in, float* out, int nx, int ny, int nz, int axis,
                          const std::vector<double>& kernel) {
    const int radius = int(kernel.size() / 2);
    const int dim = axis == 0 ? nx : axis == 1 ? ny : nz;
    if (radius >= dim) throw std::invalid_argument("convolve_axis: kernel wider than image");
    const std::size_t slice_px = std::size_t(nx) * ny;
    const std::vector<double>& kf = kernel;

    if (axis == 0) {
        const std::int64_t lines = std::int64_t(ny) * nz;
        parallel_for(lines, [&](std::int64_t l) {
            thread_local std::vector<float> pad_tls;
            thread_local std::vector<double> acc_tls;
            pad_tls.resize(std::size_t(nx + 2 * radius));
            acc_tls.assign(std::size_t(nx), 0.0);
            float* const __restrict__ pad = pad_tls.data();
            double* const __restrict__ acc = acc_tls.data();
            const float* src = in + std::size_t(l) * nx;
            float* dst = out + std::size_t(l) * nx;
            for (int i = -radius; i < nx + radius; ++i) pad[i + radius] = src[mirror(i, nx)];
            for (std::size_t j = 0; j < kf.size(); ++j) axpy(acc, pad + j, kf[j], nx);
            for (int i = 0; i < nx; ++i) dst[i] = float(acc[i]);
        });
    } else if (axis == 1) {
        parallel_for(nz, [&](std::int64_t z) {
            thread_local std::vector<double> acc_tls;
            acc_tls.resize(std::size_t(nx));
            double* const __restrict__ acc = acc_tls.data();
            const float* splane = in + std::size_t(z) * slice_px;
            float* dplane = out + std::size_t(z) * slice_px;
            for (int y = 0; y < ny; ++y) {
                std::fill(acc, acc + nx, 0.0);
                for (std::size_t j = 0; j < kf.size(); ++j)
                    axpy(acc, splane + std::size_t(mirror(y + int(j) - radius, ny)) * nx, kf[j],
                         nx);
                float* dst = dplane + std::size_t(y) * nx;
                for (int i = 0; i < nx; ++i) dst[i] = float(acc[i]);
            }
        });
    } else {
        parallel_for(nz, [&](std::int64_t z) {
            thread_local std::vector<double> acc_tls;
            acc_tls.assign(slice_px, 0.0);
            double* const __restrict__ acc = acc_tls.data();
            for (std::size_t j = 0; j < kf.size(); ++j)
                axpy(acc, in + std::size_t(mirror(int(z) + int(j) - radius, nz)) * slice_px,
                     kf[j], int(slice_px));
            float* dst = out + std::size_t(z) * slice_px;
            for (std::size_t i = 0; i < slice_px; ++i) dst[i] = float(acc[i]);
        });
    }
}

}  // namespace conv

// ---------------------------------------------------------------------------
// Hessian at one scale (gamma = 2 normalization: components scaled by sigma^2)
// ---------------------------------------------------------------------------

struct Hessian2D {
    int width = 0, height = 0;
    std::vector<float> xx, xy, yy;
};

struct Hessian3D {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> xx, yy, zz, xy, xz, yz;
};

inline Hessian2D hessian_at_scale(const Image2D& img, double sigma) {
    const auto g0 = conv::gaussian_kernel(sigma, 0);
    const auto g1 = conv::gaussian_kernel(sigma, 1);
    const auto g2 = conv::gaussian_kernel(sigma, 2);
    const double s2 = sigma * sigma;
    auto scaled = [s2](std::vector<double> k) {
        for (double& v : k) v *= s2;
        return k;
    };
    const auto g0s = scaled(g0), g1s = scaled(g1), g2s = scaled(g2);

    Hessian2D h;
    h.width = img.width;
    h.height = img.height;
    const std::size_t n = img.size();
    h.xx.resize(n);
    h.xy.resize(n);
    h.yy.resize(n);
    std::vector<float> tmp(n);

    // rows of the Hessian: second derivative along one axis, smoothing along the other
    conv::convolve_axis(img.pixels.data(), tmp.data(), img.width, img.height, 1, 1, g0);
    conv::convolve_axis(tmp.data(), h.xx.data(), img.width, img.height, 1, 0, g2s);
    conv::convolve_axis(img.pixels.data(), tmp.data(), img.width, img.height, 1, 1, g1);
    conv::convolve_axis(tmp.data(), h.xy.data(), img.width, img.height, 1, 0, g1s);
    conv::convolve_axis(img.pixels.data(), tmp.data(), img.width, img.height, 1, 1, g2);
    conv::convolve_axis(tmp.data(), h.yy.data(), img.width, img.height, 1, 0, g0s);
    return h;
}

inline Hessian3D hessian_at_scale(const ImageStack& s, double sigma) {
    const auto g0 = conv::gaussian_kernel(sigma, 0);
    const auto g1 = conv::gaussian_kernel(sigma, 1);
    const auto g2 = conv::gaussian_kernel(sigma, 2);
    const double s2 = sigma * sigma;
    auto scaled = [s2](std::vector<double> k) {
        for (double& v : k) v *= s2;
        return k;
    };
    const auto g0s = scaled(g0), g1s = scaled(g1), g2s = scaled(g2);

    Hessian3D h;
    h.nx = s.nx;
    h.ny = s.ny;
    h.nz = s.nz;
    const std::size_t n = s.size();
    h.xx.resize(n);
    h.yy.resize(n);
    h.zz.resize(n);
    h.xy.resize(n);
    h.xz.resize(n);
    h.yz.resize(n);

    std::vector<float> az(n), bz(n), cz(n), t(n);
    conv::convolve_axis(s.voxels.data(), az.data(), s.nx, s.ny, s.nz, 2, g0);
    conv::convolve_axis(s.voxels.data(), bz.data(), s.nx, s.ny, s.nz, 2, g1);
    conv::convolve_axis(s.voxels.data(), cz.data(), s.nx, s.ny, s.nz, 2, g2);

    conv::convolve_axis(az.data(), t.data(), s.nx, s.ny, s.nz, 1, g0);
    conv::convolve_axis(t.data(), h.xx.data(), s.nx, s.ny, s.nz, 0, g2s);
    conv::convolve_axis(az.data(), t.data(), s.nx, s.ny, s.nz, 1, g1);
    conv::convolve_axis(t.data(), h.xy.data(), s.nx, s.ny, s.nz, 0, g1s);
    conv::convolve_axis(az.data(), t.data(), s.nx, s.ny, s.nz, 1, g2);
    conv::convolve_axis(t.data(), h.yy.data(), s.nx, s.ny, s.nz, 0, g0s);

    conv::convolve_axis(bz.data(), t.data(), s.nx, s.ny, s.nz, 1, g0);
    conv::convolve_axis(t.data(), h.xz.data(), s.nx, s.ny, s.nz, 0, g1s);
    conv::convolve_axis(bz.data(), t.data(), s.nx, s.ny, s.nz, 1, g1);
    conv::convolve_axis(t.data(), h.yz.data(), s.nx, s.ny, s.nz, 0, g0s);

    conv::convolve_axis(cz.data(), t.data(), s.nx, s.ny, s.nz, 1, g0);
    conv::convolve_axis(t.data(), h.zz.data(), s.nx, s.ny, s.nz, 0, g0s);
    return h;
}

// ---------------------------------------------------------------------------
// Closed-form symmetric eigenvalues, sorted by absolute value ascending
// ---------------------------------------------------------------------------

inline void eigenvalues_sym(double a, double b, double c, double& l1, double& l2) {
    const double half_tr = 0.5 * (a + c);
    const double d = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    double e1 = half_tr + d, e2 = half_tr - d;
    if (std::fabs(e1) > std::fabs(e2)) std::swap(e1, e2);
    l1 = e1;
    l2 = e2;
}

inline void eigenvalues_sym(double a11, double a12, double a13, double a22, double a23,
                            double a33, double& l1, double& l2, double& l3) {
    const double p1 = a12 * a12 + a13 * a13 + a23 * a23;
    double e[3];
    if (p1 == 0.0) {
        e[0] = a11;
        e[1] = a22;
        e[2] = a33;
    } else {
        const double q = (a11 + a22 + a33) / 3.0;
        const double p2 = (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) +
                          (a33 - q) * (a33 - q) + 2.0 * p1;
        const double p = std::sqrt(p2 / 6.0);
        const double inv_p = 1.0 / p;
        const double b11 = (a11 - q) * inv_p, b22 = (a22 - q) * inv_p, b33 = (a33 - q) * inv_p;
        const double b12 = a12 * inv_p, b13 = a13 * inv_p, b23 = a23 * inv_p;
        double det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) +
                       b13 * (b12 * b23 - b22 * b13);
        double r = det_b / 2.0;
        r = std::clamp(r, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        e[0] = q + 2.0 * p * std::cos(phi);
        e[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
        e[1] = 3.0 * q - e[0] - e[2];
    }
    std::sort(e, e + 3, [](double x, double y) { return std::fabs(x) < std::fabs(y); });
    l1 = e[0];
    l2 = e[1];
    l3 = e[2];
}

// ---------------------------------------------------------------------------
// Regularized tubularity response
// ---------------------------------------------------------------------------

namespace detail {

// lam2/lam3 are sign-flipped so that bright tube interiors are positive.
// lambda_big is the volume maximum of lam3 at this scale (boundary excluded).
inline float tubular_response(double l2, double l3, double tau, double lambda_big) {
    double lrho;
    if (l3 > tau * lambda_big)
        lrho = l3;
    else if (l3 > 0.0)
        lrho = tau * lambda_big;
    else
        return 0.0f;
    if (l2 <= 0.0 || lrho <= 0.0) return 0.0f;
    if (l2 >= 0.5 * lrho) return 1.0f;
    const double f = 3.0 / (l2 + lrho);
    return float(l2 * l2 * (lrho - l2) * f * f * f);
}

}  // namespace detail

namespace detail {

template <class Vec>
inline bool constant_input(const Vec& v) {
    for (const auto& x : v)
        if (x != v[0]) return false;
    return true;
}

}  // namespace detail

/// Single-scale 3D response. `fwhm` is the vessel width in pixels; the
/// normalization maximum is taken over voxels further than 2 sigma from the
/// volume boundary (whole volume when nothing is left). A constant volume
/// has no structure and returns all zeros without touching the filters.
inline ImageStack jerman_single_scale(const ImageStack& s, double fwhm, double tau,
                                      bool bright_on_dark) {
    if (detail::constant_input(s.voxels)) {
        ImageStack out(s.nx, s.ny, s.nz);
        out.sx = s.sx; out.sy = s.sy; out.sz = s.sz;
        out.range_hi = 1.0;
        return out;
    }
    const double sigma = fwhm * fwhm_to_sigma;
    const Hessian3D h = hessian_at_scale(s, sigma);
    const std::size_t n = s.size();
    std::vector<float> lam2(n), lam3(n);
    const double flip = bright_on_dark ? -1.0 : 1.0;
    parallel_for(s.nz, [&](std::int64_t z) {
        for (int y = 0; y < s.ny; ++y)
            for (int x = 0; x < s.nx; ++x) {
                const std::size_t i = s.index(x, y, int(z));
                double l1, l2, l3;
                eigenvalues_sym(h.xx[i], h.xy[i], h.xz[i], h.yy[i], h.yz[i], h.zz[i], l1, l2, l3);
                lam2[i] = float(flip * l2);
                lam3[i] = float(flip * l3);
            }
    });

    int m = int(std::ceil(2.0 * sigma));
    if (2 * m >= s.nx || 2 * m >= s.ny || 2 * m >= s.nz) m = 0;
    double lambda_big = 0.0;
    for (int z = m; z < s.nz - m; ++z)
        for (int y = m; y < s.ny - m; ++y)
            for (int x = m; x < s.nx - m; ++x)
                lambda_big = std::max(lambda_big, double(lam3[s.index(x, y, z)]));

    ImageStack out(s.nx, s.ny, s.nz);
    out.sx = s.sx; out.sy = s.sy; out.sz = s.sz;
    out.range_lo = 0.0;
    out.range_hi = 1.0;
    if (lambda_big <= 0.0) return out;  // no bright structure at this scale
    parallel_for(std::int64_t(n), [&](std::int64_t i) {
        out.voxels[std::size_t(i)] =
            detail::tubular_response(lam2[std::size_t(i)], lam3[std::size_t(i)], tau, lambda_big);
    });
    return out;
}

/// Single-scale 2D response; lambda2 plays both eigenvalue roles. The
/// normalization maximum is per slice (each slice analyzed independently).
inline Image2D jerman_single_scale(const Image2D& img, double fwhm, double tau,
                                   bool bright_on_dark) {
    if (detail::constant_input(img.pixels)) return Image2D(img.width, img.height);
    const double sigma = fwhm * fwhm_to_sigma;
    const Hessian2D h = hessian_at_scale(img, sigma);
    const std::size_t n = img.size();
    std::vector<float> lam2(n);
    const double flip = bright_on_dark ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double l1, l2;
        eigenvalues_sym(h.xx[i], h.xy[i], h.yy[i], l1, l2);
        lam2[i] = float(flip * l2);
    }

    int m = int(std::ceil(2.0 * sigma));
    if (2 * m >= img.width || 2 * m >= img.height) m = 0;
    double lambda_big = 0.0;
    for (int y = m; y < img.height - m; ++y)
        for (int x = m; x < img.width - m; ++x)
            lambda_big = std::max(lambda_big, double(lam2[std::size_t(y) * img.width + x]));

    Image2D out(img.width, img.height);
    if (lambda_big <= 0.0) return out;
    for (std::size_t i = 0; i < n; ++i)
        out.pixels[i] = detail::tubular_response(lam2[i], lam2[i], tau, lambda_big);
    return out;
}

/// Multiscale response: voxel-wise maximum of the single-scale responses.
inline ImageStack jerman_vesselness(const ImageStack& s, const VesselnessParams& params) {
    params.validate();
    ImageStack out(s.nx, s.ny, s.nz);
    out.sx = s.sx; out.sy = s.sy; out.sz = s.sz;
    out.range_lo = 0.0;
    out.range_hi = 1.0;
    for (double fwhm : params.scales.scales()) {
        const ImageStack r = jerman_single_scale(s, fwhm, params.tau, params.bright_on_dark);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.voxels[i] = std::max(out.voxels[i], r.voxels[i]);
    }
    return out;
}

inline Image2D jerman_vesselness(const Image2D& img, const VesselnessParams& params) {
    params.validate();
    Image2D out(img.width, img.height);
    for (double fwhm : params.scales.scales()) {
        const Image2D r = jerman_single_scale(img, fwhm, params.tau, params.bright_on_dark);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.pixels[i] = std::max(out.pixels[i], r.pixels[i]);
    }
    return out;
}

}  // namespace poro
