#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bmaptk/phantom.hpp"

#include <json.hpp>

namespace bmaptk {

// BMAP container: magic "BMAP1\n", u32-LE width/height/channels, then
// channels*height*width float64-LE values, channel-major, row-major per channel.
namespace bmapfmt {

constexpr char magic[6] = {'B', 'M', 'A', 'P', '1', '\n'};

inline void put_u32(std::ostream& os, uint32_t x) {
    unsigned char b[4] = {(unsigned char)(x & 0xff), (unsigned char)((x >> 8) & 0xff),
                          (unsigned char)((x >> 16) & 0xff), (unsigned char)((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is, size_t offset, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw io_error("bmap: truncated " + what + " at byte offset " + std::to_string(offset));
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

inline void put_f64(std::ostream& os, double x) {
    uint64_t u;
    std::memcpy(&u, &x, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is, size_t offset) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw io_error("bmap: truncated payload at byte offset " + std::to_string(offset));
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
    double x;
    std::memcpy(&x, &u, 8);
    return x;
}

} // namespace bmapfmt

// Multi-channel raster, payload interpretation left to the caller.
struct BmapData {
    uint32_t width = 0, height = 0;
    std::vector<std::vector<double>> channels;
};

inline void save_bmap(const BmapData& data, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("bmap: cannot open for writing: " + path);
    os.write(bmapfmt::magic, 6);
    bmapfmt::put_u32(os, data.width);
    bmapfmt::put_u32(os, data.height);
    bmapfmt::put_u32(os, uint32_t(data.channels.size()));
    for (const auto& ch : data.channels)
        for (double x : ch) bmapfmt::put_f64(os, x);
    if (!os) throw io_error("bmap: write failed: " + path);
}

inline BmapData load_bmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("bmap: cannot open: " + path);
    char m[6];
    if (!is.read(m, 6) || std::memcmp(m, bmapfmt::magic, 6) != 0)
        throw io_error("bmap: bad magic at byte offset 0 in " + path);
    BmapData data;
    data.width = bmapfmt::get_u32(is, 6, "width");
    data.height = bmapfmt::get_u32(is, 10, "height");
    uint32_t nch = bmapfmt::get_u32(is, 14, "channel count");
    size_t npix = size_t(data.width) * data.height;
    data.channels.assign(nch, std::vector<double>(npix));
    size_t off = 18;
    for (uint32_t c = 0; c < nch; ++c)
        for (size_t i = 0; i < npix; ++i, off += 8)
            data.channels[c][i] = bmapfmt::get_f64(is, off);
    return data;
}

inline void save_maps(const ProbabilityMaps& maps, const std::string& path) {
    BmapData data;
    data.width = uint32_t(maps.width);
    data.height = uint32_t(maps.height);
    data.channels = {maps.csf, maps.gm, maps.wm};
    save_bmap(data, path);
}

inline ProbabilityMaps load_maps(const std::string& path) {
    BmapData data = load_bmap(path);
    if (data.channels.size() != 3)
        throw io_error("bmap: expected 3 channels (csf,gm,wm), found " +
                       std::to_string(data.channels.size()) + " in " + path);
    ProbabilityMaps maps(int(data.width), int(data.height));
    maps.csf = std::move(data.channels[0]);
    maps.gm = std::move(data.channels[1]);
    maps.wm = std::move(data.channels[2]);
    maps.validate();
    return maps;
}

// CSV: one row per pixel, columns x,y,csf,gm,wm.
inline void save_maps_csv(const ProbabilityMaps& maps, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("csv: cannot open for writing: " + path);
    os << "x,y,csf,gm,wm\n";
    char buf[128];
    for (int y = 0; y < maps.height; ++y)
        for (int x = 0; x < maps.width; ++x) {
            size_t i = size_t(y) * maps.width + x;
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", x, y, maps.csf[i],
                          maps.gm[i], maps.wm[i]);
            os << buf;
        }
}

inline ProbabilityMaps load_maps_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("csv: cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw io_error("csv: empty file: " + path);
    struct Row {
        int x, y;
        double c, g, w;
    };
    std::vector<Row> rows;
    int maxx = -1, maxy = -1;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        Row r;
        char comma;
        std::istringstream ss(line);
        if (!(ss >> r.x >> comma >> r.y >> comma >> r.c >> comma >> r.g >> comma >> r.w))
            throw io_error("csv: malformed row at line " + std::to_string(lineno));
        rows.push_back(r);
        maxx = std::max(maxx, r.x);
        maxy = std::max(maxy, r.y);
    }
    if (rows.empty()) throw io_error("csv: no pixel rows in " + path);
    ProbabilityMaps maps(maxx + 1, maxy + 1);
    for (const Row& r : rows) {
        size_t i = size_t(r.y) * maps.width + r.x;
        maps.csf[i] = r.c;
        maps.gm[i] = r.g;
        maps.wm[i] = r.w;
    }
    maps.validate();
    return maps;
}

// Raw importer: one 8-bit unsigned raster per channel plus a JSON sidecar
// declaring dimensions, scale (default 1/255) and the three raster files.
inline ProbabilityMaps import_raw(const std::string& sidecar_path) {
    std::ifstream is(sidecar_path);
    if (!is) throw io_error("raw: cannot open sidecar: " + sidecar_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw io_error("raw: sidecar is not valid JSON: " + std::string(e.what()));
    }
    for (const char* key : {"width", "height", "csf", "gm", "wm"})
        if (!j.contains(key)) throw io_error("raw: sidecar missing field '" + std::string(key) + "'");
    int w = j["width"].get<int>(), h = j["height"].get<int>();
    double scale = j.value("scale", 1.0 / 255.0);
    if (w <= 0 || h <= 0) throw io_error("raw: sidecar dimensions must be positive");

    auto dir = std::filesystem::path(sidecar_path).parent_path();
    ProbabilityMaps maps(w, h);
    const char* keys[3] = {"csf", "gm", "wm"};
    for (int c = 0; c < 3; ++c) {
        auto p = dir / j[keys[c]].get<std::string>();
        std::ifstream raw(p, std::ios::binary);
        if (!raw) throw io_error("raw: cannot open raster: " + p.string());
        std::vector<unsigned char> bytes(size_t(w) * h);
        if (!raw.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size())))
            throw io_error("raw: raster truncated: " + p.string());
        for (size_t i = 0; i < bytes.size(); ++i) maps.channel(c)[i] = bytes[i] * scale;
    }
    maps.validate();
    return maps;
}

// 16-bit binary PGM, max-normalized; for quick visual inspection.
inline void save_pgm(const grid<double>& img, const std::string& path) {
    double mx = 0;
    for (double x : img.v) mx = std::max(mx, x);
    if (mx <= 0) mx = 1.0;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("pgm: cannot open for writing: " + path);
    os << "P5\n" << img.nx << " " << img.ny << "\n65535\n";
    for (double x : img.v) {
        unsigned v = unsigned(std::lround(std::clamp(x / mx, 0.0, 1.0) * 65535.0));
        unsigned char b[2] = {(unsigned char)(v >> 8), (unsigned char)(v & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
}

} // namespace bmaptk
