#pragma once
// Shared test fixtures and independent oracles. Oracles deliberately use
// naive direct formulations so they stay independent of the library's
// optimized code paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <poro/core.hpp>

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline poro::Image2D random_image(int w, int h, std::uint64_t seed, float lo = 0.0f,
                                  float hi = 255.0f) {
    auto g = rng(seed);
    std::uniform_real_distribution<float> d(lo, hi);
    poro::Image2D img(w, h);
    for (auto& v : img.pixels) v = d(g);
    return img;
}

inline poro::Image2D random_integer_image(int w, int h, std::uint64_t seed, int hi = 65535) {
    auto g = rng(seed);
    std::uniform_int_distribution<int> d(0, hi);
    poro::Image2D img(w, h);
    for (auto& v : img.pixels) v = float(d(g));
    return img;
}

// smooth textured image: sum of a few random sinusoids, for registration tests
inline poro::Image2D textured_image(int w, int h, std::uint64_t seed) {
    auto g = rng(seed);
    std::uniform_real_distribution<double> freq(0.02, 0.25), phase(0.0, 6.28), amp(0.3, 1.0);
    struct Wave {
        double fx, fy, ph, a;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 8; ++i) waves.push_back({freq(g), freq(g), phase(g), amp(g)});
    poro::Image2D img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (const auto& wv : waves) v += wv.a * std::sin(wv.fx * x + wv.fy * y + wv.ph);
            img.at(x, y) = float(128.0 + 40.0 * v);
        }
    return img;
}

inline poro::BinaryVolume random_binary_volume(int nx, int ny, int nz, std::uint64_t seed,
                                               double fill = 0.5) {
    auto g = rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    poro::BinaryVolume v(nx, ny, nz);
    for (auto& b : v.bits) b = d(g) < fill ? 1 : 0;
    return v;
}

inline poro::Binary2D random_binary_image(int w, int h, std::uint64_t seed, double fill = 0.4) {
    auto g = rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    poro::Binary2D m(w, h);
    for (auto& b : m.bits) b = d(g) < fill ? 1 : 0;
    return m;
}

// blobby random mask: thresholded sum of randomly placed disks, gives
// realistic component structure instead of salt-and-pepper noise
inline poro::Binary2D blobby_mask(int w, int h, std::uint64_t seed, int n_blobs = 12,
                                  double r_lo = 2.0, double r_hi = 9.0) {
    auto g = rng(seed);
    std::uniform_real_distribution<double> px(0, w - 1), py(0, h - 1), pr(r_lo, r_hi);
    poro::Binary2D m(w, h);
    for (int b = 0; b < n_blobs; ++b) {
        const double cx = px(g), cy = py(g), r = pr(g);
        const int x0 = std::max(0, int(cx - r - 1)), x1 = std::min(w - 1, int(cx + r + 1));
        const int y0 = std::max(0, int(cy - r - 1)), y1 = std::min(h - 1, int(cy + r + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
    }
    return m;
}

// 3x3 symmetric eigenvalues by cyclic Jacobi iteration (oracle for the
// closed-form solver)
inline std::vector<double> jacobi_eig3(double a11, double a12, double a13, double a22,
                                       double a23, double a33) {
    double m[3][3] = {{a11, a12, a13}, {a12, a22, a23}, {a13, a23, a33}};
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        if (off < 1e-30) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::fabs(m[p][q]) < 1e-300) continue;
                const double theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double mkp = m[k][p], mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double mpk = m[p][k], mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
    }
    std::vector<double> ev = {m[0][0], m[1][1], m[2][2]};
    std::sort(ev.begin(), ev.end(),
              [](double a, double b) { return std::fabs(a) < std::fabs(b); });
    return ev;
}

}  // namespace testutil
