#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"

namespace tslens {

// TLT1 tensor file: magic "TLT1" | u32le ndim | u64le dims[ndim] |
// row-major float32le payload. Byte-identical across platforms.

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::string encode_tensor(const std::vector<std::uint64_t>& dims,
                                 const std::vector<float>& values) {
    std::uint64_t count = 1;
    for (std::uint64_t d : dims) count *= d;
    if (count != values.size()) throw ShapeMismatch("write_tensor: dims product != value count");

    std::string out;
    out.reserve(4 + 4 + 8 * dims.size() + 4 * values.size());
    out += "TLT1";
    detail::put_u32le(out, static_cast<std::uint32_t>(dims.size()));
    for (std::uint64_t d : dims) detail::put_u64le(out, d);
    for (float v : values) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline void write_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                         const std::vector<float>& values) {
    const std::string bytes = encode_tensor(dims, values);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("write_tensor: cannot open " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoFailure("write_tensor: short write to " + path);
}

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> values;
};

inline Tensor decode_tensor(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "TLT1", 4) != 0)
        throw BadMagic("read_tensor: bad magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t ndim = detail::get_u32le(p + 4);
    const std::size_t header = 8 + 8ull * ndim;
    if (bytes.size() < header) throw TruncatedPayload("read_tensor: truncated header");
    Tensor t;
    t.dims.resize(ndim);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.dims[i] = detail::get_u64le(p + 8 + 8ull * i);
        count *= t.dims[i];
    }
    if (bytes.size() < header + 4 * count)
        throw TruncatedPayload("read_tensor: payload shorter than header claims");
    t.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        t.values[i] = std::bit_cast<float>(detail::get_u32le(p + header + 4 * i));
    return t;
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("read_tensor: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes);
}

// --- JSON metadata sidecar ---

struct MetaSidecar {
    std::string kind;  // dataset | captures | weights | steering | probes
    std::vector<std::uint64_t> dims;
    std::uint64_t model_hash = 0;
    std::uint64_t dataset_checksum = 0;
    std::vector<std::int32_t> labels;
    nlohmann::json extra = nlohmann::json::object();
};

inline std::string sidecar_path(const std::string& artifact_path) {
    return artifact_path + ".meta.json";
}

inline void write_sidecar(const std::string& artifact_path, const MetaSidecar& meta) {
    nlohmann::json j;
    j["kind"] = meta.kind;
    j["dims"] = meta.dims;
    j["model_hash"] = hex64(meta.model_hash);
    j["dataset_checksum"] = hex64(meta.dataset_checksum);
    if (!meta.labels.empty()) j["labels"] = meta.labels;
    j["extra"] = meta.extra;
    std::ofstream f(sidecar_path(artifact_path), std::ios::trunc);
    if (!f) throw IoFailure("write_sidecar: cannot open " + sidecar_path(artifact_path));
    f << j.dump(2) << "\n";
}

inline MetaSidecar read_sidecar(const std::string& artifact_path) {
    std::ifstream f(sidecar_path(artifact_path));
    if (!f) throw IoFailure("read_sidecar: cannot open " + sidecar_path(artifact_path));
    nlohmann::json j = nlohmann::json::parse(f);
    MetaSidecar meta;
    meta.kind = j.value("kind", "");
    if (j.contains("dims")) meta.dims = j["dims"].get<std::vector<std::uint64_t>>();
    meta.model_hash = std::stoull(j.value("model_hash", "0"), nullptr, 16);
    meta.dataset_checksum = std::stoull(j.value("dataset_checksum", "0"), nullptr, 16);
    if (j.contains("labels")) meta.labels = j["labels"].get<std::vector<std::int32_t>>();
    if (j.contains("extra")) meta.extra = j["extra"];
    return meta;
}

// --- CSV ---

/// Comma-separated, newline-terminated rows, fixed 8-decimal formatting
/// ("1.00000000"), no header.
inline void write_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("write_matrix_csv: cannot open " + path);
    char buf[64];
    for (std::size_t i = 0; i < m.rows; ++i) {
        std::string line;
        for (std::size_t j = 0; j < m.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.8f", m(i, j));
            if (j) line.push_back(',');
            line += buf;
        }
        line.push_back('\n');
        f << line;
    }
    if (!f) throw IoFailure("write_matrix_csv: short write to " + path);
}

inline Matrix read_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("read_matrix_csv: cannot open " + path);
    std::vector<double> data;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::size_t row_cols = 0;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            data.push_back(std::strtod(line.substr(pos, next - pos).c_str(), nullptr));
            ++row_cols;
            pos = next + 1;
            if (next == line.size()) break;
        }
        if (rows == 0) cols = row_cols;
        else if (row_cols != cols) throw IoFailure("read_matrix_csv: ragged rows in " + path);
        ++rows;
    }
    Matrix m(rows, cols);
    m.data = std::move(data);
    return m;
}

// --- SVG heatmap ---

namespace detail {

struct Rgb {
    double r, g, b;
};

// Piecewise-linear colormap anchored at five points (viridis-like).
inline Rgb heat_color(double v) {
    static const Rgb anchors[5] = {
        {0x44, 0x01, 0x54},  // 0.00
        {0x3B, 0x52, 0x8B},  // 0.25
        {0x21, 0x91, 0x8C},  // 0.50
        {0x5E, 0xC9, 0x62},  // 0.75
        {0xFD, 0xE7, 0x25},  // 1.00
    };
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    const double scaled = v * 4.0;
    std::size_t lo = static_cast<std::size_t>(scaled);
    if (lo >= 4) lo = 3;
    const double t = scaled - static_cast<double>(lo);
    const Rgb& a = anchors[lo];
    const Rgb& b = anchors[lo + 1];
    return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

inline std::string hex_color(const Rgb& c) {
    char buf[8];
    auto clamp255 = [](double x) {
        const int v = static_cast<int>(x + 0.5);
        return v < 0 ? 0 : (v > 255 ? 255 : v);
    };
    std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", clamp255(c.r), clamp255(c.g),
                  clamp255(c.b));
    return buf;
}

}  // namespace detail

/// One rect per cell; entries are expected in [0, 1] (caller normalizes).
inline void write_svg_heatmap(const std::string& path, const Matrix& m,
                              const std::string& title) {
    const int cell = 24, margin = 30, title_h = 28;
    const int width = margin * 2 + cell * static_cast<int>(m.cols);
    const int height = margin * 2 + title_h + cell * static_cast<int>(m.rows);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("write_svg_heatmap: cannot open " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << margin << "\" y=\"" << margin - 8
      << "\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            const std::string fill = detail::hex_color(detail::heat_color(m(i, j)));
            f << "<rect x=\"" << margin + cell * static_cast<int>(j) << "\" y=\""
              << margin + title_h + cell * static_cast<int>(i) << "\" width=\"" << cell
              << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
        }
    }
    f << "</svg>\n";
    if (!f) throw IoFailure("write_svg_heatmap: short write to " + path);
}

}  // namespace tslens
