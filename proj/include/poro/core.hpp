#pragma once
// Core image/volume containers shared by every stage of the assessment
// pipeline. Voxel payloads are 32-bit floats; accumulations elsewhere use
// doubles. All types are plain value types, immutable by convention once
// built, and safe to share across threads.

#include <cstdint>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace poro {

inline constexpr const char* version_string = "0.1.0";

// ---------------------------------------------------------------------------
// Image2D — single slice, row-major, x fastest
// ---------------------------------------------------------------------------

struct Image2D {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image2D() = default;
    Image2D(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(std::size_t(w) * std::size_t(h), fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("Image2D: dims must be >= 1");
    }

    [[nodiscard]] std::size_t size() const { return pixels.size(); }
    [[nodiscard]] float& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
    [[nodiscard]] float at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
    [[nodiscard]] bool same_dims(const Image2D& o) const {
        return width == o.width && height == o.height;
    }
};

// ---------------------------------------------------------------------------
// Binary2D — per-pixel mask used by the 2D connected-component analysis
// ---------------------------------------------------------------------------

struct Binary2D {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Binary2D() = default;
    Binary2D(int w, int h, bool fill = false)
        : width(w), height(h), bits(std::size_t(w) * std::size_t(h), fill ? 1 : 0) {
        if (w < 1 || h < 1) throw std::invalid_argument("Binary2D: dims must be >= 1");
    }

    [[nodiscard]] std::size_t size() const { return bits.size(); }
    [[nodiscard]] bool get(int x, int y) const { return bits[std::size_t(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[std::size_t(y) * width + x] = v ? 1 : 0; }
};

// ---------------------------------------------------------------------------
// ImageStack — 3D scalar volume with anisotropic voxel spacing (nm)
// ---------------------------------------------------------------------------

struct ImageStack {
    int nx = 0, ny = 0, nz = 0;
    double sx = 100.0, sy = 100.0, sz = 300.0;  // voxel spacing in nm
    double range_lo = 0.0, range_hi = 0.0;      // declared intensity range
    std::vector<float> voxels;                  // x fastest, then y, then z

    ImageStack() = default;
    ImageStack(int x, int y, int z, float fill = 0.0f)
        : nx(x), ny(y), nz(z),
          voxels(std::size_t(x) * std::size_t(y) * std::size_t(z), fill) {
        if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("ImageStack: dims must be >= 1");
    }

    [[nodiscard]] std::size_t size() const { return voxels.size(); }
    [[nodiscard]] std::size_t index(int x, int y, int z) const {
        return (std::size_t(z) * ny + std::size_t(y)) * nx + std::size_t(x);
    }
    [[nodiscard]] float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    [[nodiscard]] float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    [[nodiscard]] bool same_dims(const ImageStack& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz;
    }

    [[nodiscard]] Image2D slice(int z) const {
        Image2D s(nx, ny);
        const std::size_t off = std::size_t(z) * nx * ny;
        std::copy(voxels.begin() + off, voxels.begin() + off + std::size_t(nx) * ny,
                  s.pixels.begin());
        return s;
    }
    void set_slice(int z, const Image2D& s) {
        if (s.width != nx || s.height != ny)
            throw std::invalid_argument("set_slice: dims mismatch");
        std::copy(s.pixels.begin(), s.pixels.end(),
                  voxels.begin() + std::size_t(z) * nx * ny);
    }

    void observe_range() {
        if (voxels.empty()) return;
        double lo = voxels[0], hi = voxels[0];
        for (float v : voxels) {
            if (v < lo) lo = v;
            if (v > hi) hi = v;
        }
        range_lo = lo;
        range_hi = hi;
    }
};

// ---------------------------------------------------------------------------
// BinaryVolume — foreground mask, dims/spacing inherited from its source
// ---------------------------------------------------------------------------

struct BinaryVolume {
    int nx = 0, ny = 0, nz = 0;
    double sx = 100.0, sy = 100.0, sz = 300.0;
    std::vector<std::uint8_t> bits;

    BinaryVolume() = default;
    BinaryVolume(int x, int y, int z, bool fill = false)
        : nx(x), ny(y), nz(z),
          bits(std::size_t(x) * std::size_t(y) * std::size_t(z), fill ? 1 : 0) {
        if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("BinaryVolume: dims must be >= 1");
    }
    static BinaryVolume like(const ImageStack& s, bool fill = false) {
        BinaryVolume b(s.nx, s.ny, s.nz, fill);
        b.sx = s.sx; b.sy = s.sy; b.sz = s.sz;
        return b;
    }

    [[nodiscard]] std::size_t size() const { return bits.size(); }
    [[nodiscard]] std::size_t index(int x, int y, int z) const {
        return (std::size_t(z) * ny + std::size_t(y)) * nx + std::size_t(x);
    }
    [[nodiscard]] bool get(int x, int y, int z) const { return bits[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v) { bits[index(x, y, z)] = v ? 1 : 0; }
    [[nodiscard]] bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += b != 0;
        return n;
    }

    [[nodiscard]] Binary2D slice(int z) const {
        Binary2D s(nx, ny);
        const std::size_t off = std::size_t(z) * nx * ny;
        std::copy(bits.begin() + off, bits.begin() + off + std::size_t(nx) * ny, s.bits.begin());
        return s;
    }
};

// ---------------------------------------------------------------------------
// Threading — worker count comes from the PORO_THREADS env var only
// ---------------------------------------------------------------------------

inline unsigned thread_count() {
    static const unsigned n = [] {
        if (const char* env = std::getenv("PORO_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v > 0) return unsigned(v);
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc ? hc : 1u;
    }();
    return n;
}

/// Chunked parallel loop over [0, n). The body must write disjoint outputs;
/// results are then independent of the worker count.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
    const unsigned workers = thread_count();
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        const std::int64_t lo = std::int64_t(w) * chunk;
        if (lo >= n) break;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        pool.emplace_back([lo, hi, &body] {
            for (std::int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

inline bool nearly_equal(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

/// Rounds half-up (0.5 -> 1, -0.5 -> 0), used when quantizing to integer dtypes.
inline double round_half_up(double v) { return std::floor(v + 0.5); }

}  // namespace poro
