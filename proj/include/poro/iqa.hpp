#pragma once
// Full-reference similarity metrics and distribution distances, with the
// per-slice averaging convention for stack scores. Distribution distances
// on embedding features (Frechet, kernel MMD) consume externally supplied
// feature matrices; no feature extractor lives here.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "io.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// MetricValue — finite, infinite (PSNR on identical images) or undefined
// ---------------------------------------------------------------------------

struct MetricValue {
    enum class State { finite, infinite, undefined };
    double value = 0.0;
    State state = State::finite;

    static MetricValue of(double v) { return {v, State::finite}; }
    static MetricValue infinite() { return {0.0, State::infinite}; }
    static MetricValue undefined() { return {0.0, State::undefined}; }
    [[nodiscard]] bool finite() const { return state == State::finite; }
};

// ---------------------------------------------------------------------------
// MSE / PSNR / NCC
// ---------------------------------------------------------------------------

inline double mse(const Image2D& a, const Image2D& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("mse: dims mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        acc += d * d;
    }
    return acc / double(a.size());
}

inline MetricValue psnr(const Image2D& a, const Image2D& b, double data_range) {
    if (data_range <= 0.0) throw std::invalid_argument("psnr: data_range must be > 0");
    const double e = mse(a, b);
    if (e == 0.0) return MetricValue::infinite();
    return MetricValue::of(10.0 * std::log10(data_range * data_range / e));
}

/// Normalized cross-correlation with population standard deviations;
/// undefined when either image is constant.
inline MetricValue ncc(const Image2D& a, const Image2D& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("ncc: dims mismatch");
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a.pixels[i];
        mb += b.pixels[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va <= 0.0 || vb <= 0.0) return MetricValue::undefined();
    return MetricValue::of(cov / (n * std::sqrt(va / n) * std::sqrt(vb / n)));
}

// ---------------------------------------------------------------------------
// SSIM — 11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03
// ---------------------------------------------------------------------------

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01, k2 = 0.03;
    double data_range = 255.0;
};

namespace detail {

inline std::vector<double> ssim_window(int n, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(n));
    const int r = n / 2;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        w[std::size_t(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
        sum += w[std::size_t(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// separable weighted local mean over the valid region; out dims shrink by n-1
inline void weighted_local_mean(const std::vector<double>& img, int w, int h,
                                const std::vector<double>& win, std::vector<double>& out,
                                std::vector<double>& scratch) {
    const int n = int(win.size());
    const int ow = w - n + 1, oh = h - n + 1;
    scratch.assign(std::size_t(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += win[std::size_t(j)] * img[std::size_t(y) * w + x + j];
            scratch[std::size_t(y) * ow + x] = acc;
        }
    out.assign(std::size_t(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += win[std::size_t(j)] * scratch[std::size_t(y + j) * ow + x];
            out[std::size_t(y) * ow + x] = acc;
        }
}

struct SsimMoments {
    int w = 0, h = 0;  // valid-region dims
    std::vector<double> mu_a, mu_b, var_a, var_b, cov;
};

inline SsimMoments ssim_moments(const Image2D& a, const Image2D& b, const SsimParams& p) {
    if (!a.same_dims(b)) throw std::invalid_argument("ssim: dims mismatch");
    if (a.width < p.window || a.height < p.window)
        throw std::invalid_argument("ssim: image smaller than window");
    const auto win = ssim_window(p.window, p.sigma);
    const std::size_t n = a.size();
    std::vector<double> da(n), db(n), daa(n), dbb(n), dab(n);
    for (std::size_t i = 0; i < n; ++i) {
        da[i] = a.pixels[i];
        db[i] = b.pixels[i];
        daa[i] = da[i] * da[i];
        dbb[i] = db[i] * db[i];
        dab[i] = da[i] * db[i];
    }
    SsimMoments m;
    m.w = a.width - p.window + 1;
    m.h = a.height - p.window + 1;
    std::vector<double> scratch, saa, sbb, sab;
    weighted_local_mean(da, a.width, a.height, win, m.mu_a, scratch);
    weighted_local_mean(db, a.width, a.height, win, m.mu_b, scratch);
    weighted_local_mean(daa, a.width, a.height, win, saa, scratch);
    weighted_local_mean(dbb, a.width, a.height, win, sbb, scratch);
    weighted_local_mean(dab, a.width, a.height, win, sab, scratch);
    const std::size_t nn = m.mu_a.size();
    m.var_a.resize(nn);
    m.var_b.resize(nn);
    m.cov.resize(nn);
    for (std::size_t i = 0; i < nn; ++i) {
        m.var_a[i] = saa[i] - m.mu_a[i] * m.mu_a[i];
        m.var_b[i] = sbb[i] - m.mu_b[i] * m.mu_b[i];
        m.cov[i] = sab[i] - m.mu_a[i] * m.mu_b[i];
    }
    return m;
}

}  // namespace detail

/// Mean SSIM over the valid (fully windowed) region.
inline double ssim(const Image2D& a, const Image2D& b, const SsimParams& p = {}) {
    const auto m = detail::ssim_moments(a, b, p);
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    double acc = 0.0;
    for (std::size_t i = 0; i < m.mu_a.size(); ++i) {
        const double num = (2.0 * m.mu_a[i] * m.mu_b[i] + c1) * (2.0 * m.cov[i] + c2);
        const double den = (m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + c1) *
                           (m.var_a[i] + m.var_b[i] + c2);
        acc += num / den;
    }
    return acc / double(m.mu_a.size());
}

// ---------------------------------------------------------------------------
// MS-SSIM — 5 scales, 2x mean downsampling between scales
// ---------------------------------------------------------------------------

inline constexpr double ms_ssim_weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

inline double ms_ssim(const Image2D& a, const Image2D& b, const SsimParams& p = {}) {
    if (!a.same_dims(b)) throw std::invalid_argument("ms_ssim: dims mismatch");
    if (std::min(a.width, a.height) < p.window * 16)
        throw std::invalid_argument("ms_ssim: image too small for 5 scales");
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);

    Image2D ca = a, cb = b;
    double score = 1.0;
    for (int s = 0; s < 5; ++s) {
        const auto m = detail::ssim_moments(ca, cb, p);
        double cs_acc = 0.0, l_acc = 0.0;
        for (std::size_t i = 0; i < m.mu_a.size(); ++i) {
            cs_acc += (2.0 * m.cov[i] + c2) / (m.var_a[i] + m.var_b[i] + c2);
            l_acc += (2.0 * m.mu_a[i] * m.mu_b[i] + c1) /
                     (m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + c1);
        }
        const double cs = std::max(0.0, cs_acc / double(m.mu_a.size()));
        score *= std::pow(cs, ms_ssim_weights[s]);
        if (s == 4) {
            const double l = std::max(0.0, l_acc / double(m.mu_a.size()));
            score *= std::pow(l, ms_ssim_weights[4]);
        } else {
            // 2x2 block mean then subsample (trailing odd row/column dropped)
            Image2D na(ca.width / 2, ca.height / 2), nb(ca.width / 2, ca.height / 2);
            for (int y = 0; y < na.height; ++y)
                for (int x = 0; x < na.width; ++x) {
                    na.at(x, y) = 0.25f * (ca.at(2 * x, 2 * y) + ca.at(2 * x + 1, 2 * y) +
                                           ca.at(2 * x, 2 * y + 1) + ca.at(2 * x + 1, 2 * y + 1));
                    nb.at(x, y) = 0.25f * (cb.at(2 * x, 2 * y) + cb.at(2 * x + 1, 2 * y) +
                                           cb.at(2 * x, 2 * y + 1) + cb.at(2 * x + 1, 2 * y + 1));
                }
            ca = std::move(na);
            cb = std::move(nb);
        }
    }
    return score;
}

// ---------------------------------------------------------------------------
// HaarPSI — 3-level Haar decomposition, C = 30, alpha = 4.2
// ---------------------------------------------------------------------------

namespace detail {

// 'same' 2D convolution with the scale-k Haar filter (2^k x 2^k, entries
// +-2^-k, top half negative). transpose = true gives the other orientation.
inline std::vector<double> haar_response(const Image2D& img, int k, bool transpose) {
    const int size = 1 << k;
    const double mag = std::ldexp(1.0, -k);
    const int w = img.width, h = img.height;
    std::vector<double> out(std::size_t(w) * h, 0.0);
    // separable: along one axis weights are [-mag.. +mag] split, other axis flat
    std::vector<double> tmp(std::size_t(w) * h, 0.0);
    // pass 1: signed axis (rows of the filter): prefix of -1, suffix of +1
    // conv 'same' anchor: for even n, output(i) covers taps in [i-n/2, i+n/2-1]
    const int lo = -size / 2, hi = size / 2 - 1;
    auto sgn = [&](int t) { return t - lo < size / 2 ? -1.0 : 1.0; };
    if (!transpose) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = lo; t <= hi; ++t) {
                    const int yy = y - t;  // convolution flips the kernel
                    if (yy < 0 || yy >= h) continue;
                    acc += sgn(t) * img.at(x, yy);
                }
                tmp[std::size_t(y) * w + x] = acc;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = lo; t <= hi; ++t) {
                    const int xx = x - t;
                    if (xx < 0 || xx >= w) continue;
                    acc += tmp[std::size_t(y) * w + xx];
                }
                out[std::size_t(y) * w + x] = acc * mag * mag;
            }
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = lo; t <= hi; ++t) {
                    const int xx = x - t;
                    if (xx < 0 || xx >= w) continue;
                    acc += sgn(t) * img.at(xx, y);
                }
                tmp[std::size_t(y) * w + x] = acc;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = lo; t <= hi; ++t) {
                    const int yy = y - t;
                    if (yy < 0 || yy >= h) continue;
                    acc += tmp[std::size_t(yy) * w + x];
                }
                out[std::size_t(y) * w + x] = acc * mag * mag;
            }
    }
    return out;
}

}  // namespace detail

struct HaarPsiParams {
    double c = 30.0;
    double alpha = 4.2;
    double data_range = 255.0;  // inputs are rescaled to [0, 255]
};

/// Haar wavelet-based perceptual similarity in (0, 1].
inline double haarpsi(const Image2D& a, const Image2D& b, const HaarPsiParams& p = {}) {
    if (!a.same_dims(b)) throw std::invalid_argument("haarpsi: dims mismatch");
    if (a.width < 8 || a.height < 8) throw std::invalid_argument("haarpsi: dims must be >= 8");

    Image2D sa(a.width, a.height), sb(a.width, a.height);
    const double scale = 255.0 / p.data_range;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa.pixels[i] = float(a.pixels[i] * scale);
        sb.pixels[i] = float(b.pixels[i] * scale);
    }

    const std::size_t n = sa.size();
    double num = 0.0, den = 0.0;
    auto logistic = [&](double v) { return 1.0 / (1.0 + std::exp(-p.alpha * v)); };
    for (int orient = 0; orient < 2; ++orient) {
        const bool tr = orient == 1;
        const auto a1 = detail::haar_response(sa, 1, tr);
        const auto a2 = detail::haar_response(sa, 2, tr);
        const auto a3 = detail::haar_response(sa, 3, tr);
        const auto b1 = detail::haar_response(sb, 1, tr);
        const auto b2 = detail::haar_response(sb, 2, tr);
        const auto b3 = detail::haar_response(sb, 3, tr);
        for (std::size_t i = 0; i < n; ++i) {
            const double s1 = (2.0 * std::fabs(a1[i]) * std::fabs(b1[i]) + p.c) /
                              (a1[i] * a1[i] + b1[i] * b1[i] + p.c);
            const double s2 = (2.0 * std::fabs(a2[i]) * std::fabs(b2[i]) + p.c) /
                              (a2[i] * a2[i] + b2[i] * b2[i] + p.c);
            const double sim = 0.5 * (s1 + s2);
            const double wgt = std::max(std::fabs(a3[i]), std::fabs(b3[i]));
            num += logistic(sim) * wgt;
            den += wgt;
        }
    }
    if (den <= 0.0) return 1.0;  // no structure anywhere: nothing to weight
    const double mean = num / den;
    const double inv = std::log(mean / (1.0 - mean)) / p.alpha;
    return inv * inv;
}

// ---------------------------------------------------------------------------
// Intensity-histogram Wasserstein distance
// ---------------------------------------------------------------------------

/// W1 between the normalized intensity histograms of two images, binned as
/// `bins` levels shared over [0, data_range]. A pure shift by c moves the
/// distance by c (up to bin granularity).
inline double wd_intensity(const Image2D& a, const Image2D& b, double data_range,
                           int bins = 256) {
    if (!a.same_dims(b)) throw std::invalid_argument("wd_intensity: dims mismatch");
    if (data_range <= 0.0 || bins < 2) throw std::invalid_argument("wd_intensity: bad params");
    const double step = data_range / double(bins - 1);
    std::vector<double> ha(std::size_t(bins), 0.0), hb(std::size_t(bins), 0.0);
    auto bin_of = [&](float v) {
        const auto k = std::int64_t(std::lround(double(v) / step));
        return std::size_t(std::clamp<std::int64_t>(k, 0, bins - 1));
    };
    for (float v : a.pixels) ha[bin_of(v)] += 1.0;
    for (float v : b.pixels) hb[bin_of(v)] += 1.0;
    const double inv = 1.0 / double(a.size());
    double ca = 0.0, cb = 0.0, acc = 0.0;
    for (int k = 0; k < bins; ++k) {
        ca += ha[std::size_t(k)] * inv;
        cb += hb[std::size_t(k)] * inv;
        acc += std::fabs(ca - cb);
    }
    return acc * step;
}

// ---------------------------------------------------------------------------
// Frechet distance on feature matrices
// ---------------------------------------------------------------------------

namespace detail {

// cyclic Jacobi eigendecomposition of a symmetric matrix (values only)
inline std::vector<double> jacobi_eigenvalues(std::vector<double> m, int n) {
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += m[std::size_t(i) * n + j] * m[std::size_t(i) * n + j];
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = m[std::size_t(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = m[std::size_t(p) * n + p];
                const double aqq = m[std::size_t(q) * n + q];
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = m[std::size_t(k) * n + p];
                    const double akq = m[std::size_t(k) * n + q];
                    m[std::size_t(k) * n + p] = c * akp - s * akq;
                    m[std::size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = m[std::size_t(p) * n + k];
                    const double aqk = m[std::size_t(q) * n + k];
                    m[std::size_t(p) * n + k] = c * apk - s * aqk;
                    m[std::size_t(q) * n + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ev[std::size_t(i)] = m[std::size_t(i) * n + i];
    return ev;
}

// eigendecomposition with vectors, for the symmetric square root
inline void jacobi_eigen(std::vector<double> m, int n, std::vector<double>& values,
                         std::vector<double>& vectors) {
    vectors.assign(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vectors[std::size_t(i) * n + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += m[std::size_t(i) * n + j] * m[std::size_t(i) * n + j];
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = m[std::size_t(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = m[std::size_t(p) * n + p];
                const double aqq = m[std::size_t(q) * n + q];
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = m[std::size_t(k) * n + p];
                    const double akq = m[std::size_t(k) * n + q];
                    m[std::size_t(k) * n + p] = c * akp - s * akq;
                    m[std::size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = m[std::size_t(p) * n + k];
                    const double aqk = m[std::size_t(q) * n + k];
                    m[std::size_t(p) * n + k] = c * apk - s * aqk;
                    m[std::size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vectors[std::size_t(k) * n + p];
                    const double vkq = vectors[std::size_t(k) * n + q];
                    vectors[std::size_t(k) * n + p] = c * vkp - s * vkq;
                    vectors[std::size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    values.assign(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) values[std::size_t(i)] = m[std::size_t(i) * n + i];
}

inline void mean_and_cov(const FeatureMatrix& f, std::vector<double>& mu,
                         std::vector<double>& cov) {
    const int n = f.rows, d = f.dim;
    mu.assign(std::size_t(d), 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) mu[std::size_t(c)] += f.at(r, c);
    for (double& v : mu) v /= double(n);
    cov.assign(std::size_t(d) * d, 0.0);
    for (int r = 0; r < n; ++r)
        for (int i = 0; i < d; ++i) {
            const double di = f.at(r, i) - mu[std::size_t(i)];
            for (int j = i; j < d; ++j)
                cov[std::size_t(i) * d + j] += di * (f.at(r, j) - mu[std::size_t(j)]);
        }
    const double norm = 1.0 / double(n - 1);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            cov[std::size_t(i) * d + j] *= norm;
            cov[std::size_t(j) * d + i] = cov[std::size_t(i) * d + j];
        }
}

// symmetric PSD square root via eigendecomposition; negatives clamped
inline std::vector<double> sym_sqrt(const std::vector<double>& m, int n, bool* clamped) {
    std::vector<double> values, vectors;
    jacobi_eigen(m, n, values, vectors);
    for (double& v : values) {
        if (v < 0.0) {
            if (v < -1e-9 && clamped) *clamped = true;
            v = 0.0;
        }
    }
    std::vector<double> out(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k)
                acc += vectors[std::size_t(i) * n + k] * std::sqrt(values[std::size_t(k)]) *
                       vectors[std::size_t(j) * n + k];
            out[std::size_t(i) * n + j] = acc;
        }
    return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int n) {
    std::vector<double> out(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[std::size_t(i) * n + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] += aik * b[std::size_t(k) * n + j];
        }
    return out;
}

}  // namespace detail

/// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)) with sample covariances.
/// The square root is taken on the symmetrized product sqrt(Sa) Sb sqrt(Sa);
/// negative eigenvalues are clamped to zero with a warning on stderr.
inline double frechet_distance(const FeatureMatrix& fa, const FeatureMatrix& fb,
                               bool quiet = false) {
    if (fa.dim != fb.dim) throw std::invalid_argument("frechet_distance: dim mismatch");
    if (fa.rows < 2 || fb.rows < 2)
        throw std::invalid_argument("frechet_distance: need >= 2 rows per set");
    const int d = fa.dim;
    std::vector<double> mu_a, mu_b, cov_a, cov_b;
    detail::mean_and_cov(fa, mu_a, cov_a);
    detail::mean_and_cov(fb, mu_b, cov_b);

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = mu_a[std::size_t(i)] - mu_b[std::size_t(i)];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int i = 0; i < d; ++i) {
        tr_a += cov_a[std::size_t(i) * d + i];
        tr_b += cov_b[std::size_t(i) * d + i];
    }

    bool clamped = false;
    const auto sqrt_a = detail::sym_sqrt(cov_a, d, &clamped);
    auto inner = detail::matmul(detail::matmul(sqrt_a, cov_b, d), sqrt_a, d);
    for (int i = 0; i < d; ++i)  // enforce exact symmetry before the eigensolve
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (inner[std::size_t(i) * d + j] + inner[std::size_t(j) * d + i]);
            inner[std::size_t(i) * d + j] = v;
            inner[std::size_t(j) * d + i] = v;
        }
    auto ev = detail::jacobi_eigenvalues(std::move(inner), d);
    double tr_sqrt = 0.0;
    for (double v : ev) {
        if (v < 0.0) {
            if (v < -1e-9) clamped = true;
            v = 0.0;
        }
        tr_sqrt += std::sqrt(v);
    }
    if (clamped && !quiet)
        std::cerr << "frechet_distance: negative eigenvalues clamped to 0\n";
    return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

// ---------------------------------------------------------------------------
// Kernel MMD (unbiased) on feature matrices
// ---------------------------------------------------------------------------

/// Unbiased MMD^2 with the polynomial kernel (x.y / dim + 1)^degree. May be
/// slightly negative by construction; reported as-is.
inline double kid(const FeatureMatrix& fa, const FeatureMatrix& fb, int degree = 3) {
    if (fa.dim != fb.dim) throw std::invalid_argument("kid: dim mismatch");
    if (fa.rows < 2 || fb.rows < 2) throw std::invalid_argument("kid: need >= 2 rows per set");
    const int d = fa.dim, m = fa.rows, n = fb.rows;
    auto kernel = [&](const FeatureMatrix& fx, int i, const FeatureMatrix& fy, int j) {
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += fx.at(i, c) * fy.at(j, c);
        return std::pow(dot / double(d) + 1.0, double(degree));
    };
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) kaa += kernel(fa, i, fa, j);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) kbb += kernel(fb, i, fb, j);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) kab += kernel(fa, i, fb, j);
    return kaa / (double(m) * (m - 1)) + kbb / (double(n) * (n - 1)) -
           2.0 * kab / (double(m) * n);
}

// ---------------------------------------------------------------------------
// Stack scoring — per-slice metric values averaged over the stack
// ---------------------------------------------------------------------------

struct StackScore {
    double mean = 0.0;
    int slices_used = 0;
    int slices_excluded = 0;  // infinite/undefined per-slice values
};

inline StackScore stack_score(const std::function<MetricValue(const Image2D&, const Image2D&)>& metric,
                              const ImageStack& a, const ImageStack& b) {
    if (a.nz != b.nz) throw std::invalid_argument("stack_score: slice counts differ");
    StackScore s;
    double acc = 0.0;
    for (int z = 0; z < a.nz; ++z) {
        const MetricValue v = metric(a.slice(z), b.slice(z));
        if (!v.finite()) {
            ++s.slices_excluded;
            continue;
        }
        acc += v.value;
        ++s.slices_used;
    }
    if (s.slices_used == 0) throw std::runtime_error("stack_score: no usable slices");
    s.mean = acc / double(s.slices_used);
    return s;
}

}  // namespace poro
