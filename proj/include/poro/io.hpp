#pragma once
// Stack and feature-matrix file I/O.
//
// Native stack format: a `.json` sidecar header next to a little-endian
// `.raw` payload (x fastest, then y, then z). A directory of per-slice
// binary PGM files (16-bit, lexicographic order) is accepted as an
// ingestion alternative. TIFF and microscope formats are deliberately not
// parsed; convert externally.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace poro {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// StackHeader
// ---------------------------------------------------------------------------

enum class Dtype : std::uint8_t { u8, u16, f32 };

inline std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::u8: return 1;
        case Dtype::u16: return 2;
        case Dtype::f32: return 4;
    }
    return 0;
}

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::u8: return "u8";
        case Dtype::u16: return "u16";
        case Dtype::f32: return "f32";
    }
    return "";
}

inline Dtype parse_dtype(const std::string& s) {
    if (s == "u8") return Dtype::u8;
    if (s == "u16") return Dtype::u16;
    if (s == "f32") return Dtype::f32;
    throw std::runtime_error("unknown dtype tag: " + s);
}

struct StackHeader {
    int width = 0, height = 0, depth = 0;
    Dtype dtype = Dtype::f32;
    double voxel_size_nm[3] = {100.0, 100.0, 300.0};

    [[nodiscard]] std::size_t payload_bytes() const {
        return std::size_t(width) * height * depth * dtype_size(dtype);
    }
};

inline StackHeader read_stack_header(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open header: " + json_path.string());
    nlohmann::json j;
    in >> j;
    StackHeader h;
    h.width = j.at("width").get<int>();
    h.height = j.at("height").get<int>();
    h.depth = j.at("depth").get<int>();
    h.dtype = parse_dtype(j.at("dtype").get<std::string>());
    if (j.contains("voxel_size_nm")) {
        auto v = j.at("voxel_size_nm");
        for (int i = 0; i < 3; ++i) h.voxel_size_nm[i] = v.at(i).get<double>();
    }
    if (h.width < 1 || h.height < 1 || h.depth < 1)
        throw std::runtime_error("header dims must be >= 1: " + json_path.string());
    if (h.voxel_size_nm[0] <= 0 || h.voxel_size_nm[1] <= 0 || h.voxel_size_nm[2] <= 0)
        throw std::runtime_error("header voxel size must be > 0: " + json_path.string());
    return h;
}

inline void write_stack_header(const StackHeader& h, const fs::path& json_path) {
    nlohmann::json j;
    j["width"] = h.width;
    j["height"] = h.height;
    j["depth"] = h.depth;
    j["dtype"] = dtype_name(h.dtype);
    j["voxel_size_nm"] = {h.voxel_size_nm[0], h.voxel_size_nm[1], h.voxel_size_nm[2]};
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write header: " + json_path.string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Raw payload helpers (little-endian; this code assumes an LE host)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + p.string());
    in.seekg(0, std::ios::end);
    const std::streamoff n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), n);
    if (!in) throw std::runtime_error("short read: " + p.string());
    return buf;
}

// Resolve "stack", "stack.json" or "stack.raw" to the json/raw pair.
inline std::pair<fs::path, fs::path> stack_pair(const fs::path& path) {
    fs::path base = path;
    const auto ext = base.extension().string();
    if (ext == ".json" || ext == ".raw") base.replace_extension();
    fs::path j = base;
    j += ".json";
    fs::path r = base;
    r += ".raw";
    return {j, r};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM slice directories (binary P5, 8- or 16-bit; 16-bit is big-endian)
// ---------------------------------------------------------------------------

namespace detail {

struct PgmImage {
    int width = 0, height = 0, maxval = 0;
    std::vector<std::uint16_t> samples;
};

inline PgmImage read_pgm(const fs::path& p) {
    auto bytes = read_file_bytes(p);
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            const char c = char(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> int {
        skip_ws();
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw std::runtime_error("malformed PGM header: " + p.string());
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw std::runtime_error("not a binary PGM (P5): " + p.string());
    pos = 2;
    PgmImage img;
    img.width = read_int();
    img.height = read_int();
    img.maxval = read_int();
    ++pos;  // single whitespace after maxval
    const bool wide = img.maxval > 255;
    const std::size_t n = std::size_t(img.width) * img.height;
    const std::size_t need = n * (wide ? 2 : 1);
    if (bytes.size() - pos < need) throw std::runtime_error("PGM payload too short: " + p.string());
    img.samples.resize(n);
    if (wide) {
        for (std::size_t i = 0; i < n; ++i)
            img.samples[i] = std::uint16_t((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    } else {
        for (std::size_t i = 0; i < n; ++i) img.samples[i] = bytes[pos + i];
    }
    return img;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// load_stack / save_stack
// ---------------------------------------------------------------------------

/// Loads a volume from a json+raw pair, or from a directory of per-slice
/// binary PGM files ordered lexicographically. Values are converted to f32
/// without rescaling; the declared intensity range comes from the dtype
/// (u8 -> [0,255], u16 -> [0,65535], f32 -> observed min/max).
inline ImageStack load_stack(const fs::path& path) {
    if (fs::is_directory(path)) {
        std::vector<fs::path> slices;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && e.path().extension() == ".pgm")
                slices.push_back(e.path());
        }
        if (slices.empty()) throw std::runtime_error("no .pgm slices in " + path.string());
        std::sort(slices.begin(), slices.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        auto first = detail::read_pgm(slices[0]);
        ImageStack s(first.width, first.height, int(slices.size()));
        s.sx = 100.0;
        s.sy = 100.0;
        s.sz = 300.0;
        s.range_lo = 0.0;
        s.range_hi = first.maxval > 255 ? 65535.0 : 255.0;
        for (std::size_t z = 0; z < slices.size(); ++z) {
            auto img = z == 0 ? std::move(first) : detail::read_pgm(slices[z]);
            if (img.width != s.nx || img.height != s.ny)
                throw std::runtime_error("PGM slice dims mismatch: " + slices[z].string());
            float* dst = s.voxels.data() + std::size_t(z) * s.nx * s.ny;
            for (std::size_t i = 0; i < img.samples.size(); ++i) dst[i] = float(img.samples[i]);
        }
        return s;
    }

    const auto [jpath, rpath] = detail::stack_pair(path);
    const StackHeader h = read_stack_header(jpath);
    const auto payload = detail::read_file_bytes(rpath);
    if (payload.size() != h.payload_bytes())
        throw std::runtime_error("payload size mismatch for " + rpath.string() + ": got " +
                                 std::to_string(payload.size()) + ", header implies " +
                                 std::to_string(h.payload_bytes()));

    ImageStack s(h.width, h.height, h.depth);
    s.sx = h.voxel_size_nm[0];
    s.sy = h.voxel_size_nm[1];
    s.sz = h.voxel_size_nm[2];
    const std::size_t n = s.size();
    switch (h.dtype) {
        case Dtype::u8:
            for (std::size_t i = 0; i < n; ++i) s.voxels[i] = float(payload[i]);
            s.range_lo = 0.0;
            s.range_hi = 255.0;
            break;
        case Dtype::u16:
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint16_t v =
                    std::uint16_t(payload[2 * i] | (payload[2 * i + 1] << 8));
                s.voxels[i] = float(v);
            }
            s.range_lo = 0.0;
            s.range_hi = 65535.0;
            break;
        case Dtype::f32: {
            std::memcpy(s.voxels.data(), payload.data(), n * 4);
            for (std::size_t i = 0; i < n; ++i)
                if (!std::isfinite(s.voxels[i]))
                    throw std::runtime_error("non-finite value in f32 payload at voxel " +
                                             std::to_string(i));
            s.observe_range();
            break;
        }
    }
    return s;
}

/// Writes a json+raw pair. Integer dtypes clamp to range then round half-up;
/// f32 round-trips bit-exactly.
inline void save_stack(const ImageStack& s, const fs::path& path, Dtype dtype) {
    const auto [jpath, rpath] = detail::stack_pair(path);
    StackHeader h;
    h.width = s.nx;
    h.height = s.ny;
    h.depth = s.nz;
    h.dtype = dtype;
    h.voxel_size_nm[0] = s.sx;
    h.voxel_size_nm[1] = s.sy;
    h.voxel_size_nm[2] = s.sz;
    write_stack_header(h, jpath);

    std::ofstream out(rpath, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write payload: " + rpath.string());
    const std::size_t n = s.size();
    switch (dtype) {
        case Dtype::u8: {
            std::vector<std::uint8_t> buf(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = std::clamp(double(s.voxels[i]), 0.0, 255.0);
                buf[i] = std::uint8_t(round_half_up(v));
            }
            out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
            break;
        }
        case Dtype::u16: {
            std::vector<std::uint8_t> buf(n * 2);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = std::clamp(double(s.voxels[i]), 0.0, 65535.0);
                const auto q = std::uint16_t(round_half_up(v));
                buf[2 * i] = std::uint8_t(q & 0xff);
                buf[2 * i + 1] = std::uint8_t(q >> 8);
            }
            out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
            break;
        }
        case Dtype::f32:
            out.write(reinterpret_cast<const char*>(s.voxels.data()), std::streamsize(n * 4));
            break;
    }
    if (!out) throw std::runtime_error("short write: " + rpath.string());
}

// ---------------------------------------------------------------------------
// Feature matrices — {rows, dim} json header + little-endian f32 raw, the
// interchange format for externally computed embedding features
// ---------------------------------------------------------------------------

struct FeatureMatrix {
    int rows = 0, dim = 0;
    std::vector<double> data;  // row-major

    FeatureMatrix() = default;
    FeatureMatrix(int r, int d) : rows(r), dim(d), data(std::size_t(r) * d, 0.0) {}
    [[nodiscard]] double& at(int r, int c) { return data[std::size_t(r) * dim + c]; }
    [[nodiscard]] double at(int r, int c) const { return data[std::size_t(r) * dim + c]; }
};

inline FeatureMatrix load_features(const fs::path& path) {
    const auto [jpath, rpath] = detail::stack_pair(path);
    std::ifstream in(jpath);
    if (!in) throw std::runtime_error("cannot open feature header: " + jpath.string());
    nlohmann::json j;
    in >> j;
    FeatureMatrix m(j.at("rows").get<int>(), j.at("dim").get<int>());
    const auto payload = detail::read_file_bytes(rpath);
    if (payload.size() != m.data.size() * 4)
        throw std::runtime_error("feature payload size mismatch: " + rpath.string());
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        float f;
        std::memcpy(&f, payload.data() + 4 * i, 4);
        m.data[i] = double(f);
    }
    return m;
}

inline void save_features(const FeatureMatrix& m, const fs::path& path) {
    const auto [jpath, rpath] = detail::stack_pair(path);
    nlohmann::json j;
    j["rows"] = m.rows;
    j["dim"] = m.dim;
    std::ofstream hout(jpath);
    if (!hout) throw std::runtime_error("cannot write feature header: " + jpath.string());
    hout << j.dump(2) << "\n";
    std::ofstream out(rpath, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write feature payload: " + rpath.string());
    for (double v : m.data) {
        const float f = float(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
}

}  // namespace poro
