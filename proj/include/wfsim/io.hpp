#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfsim/field.hpp"

namespace wfsim::io {

// Binary PGM (P5), 8 or 16 bit, values scaled by max_value. No comments or
// timestamps: identical input gives identical bytes.
inline void write_pgm(const std::string& path, const Image& img, double max_value,
                      unsigned bits = 8) {
    if (bits != 8 && bits != 16) throw std::invalid_argument("write_pgm: bits must be 8 or 16");
    if (max_value <= 0.0) throw std::invalid_argument("write_pgm: max_value must be positive");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open '" + path + "'");
    const unsigned maxval = bits == 8 ? 255u : 65535u;
    os << "P5\n" << img.side << " " << img.side << "\n" << maxval << "\n";
    std::vector<unsigned char> buf;
    buf.reserve(img.v.size() * (bits / 8));
    for (double x : img.v) {
        double t = x / max_value;
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
        const unsigned q = static_cast<unsigned>(std::lround(t * maxval));
        if (bits == 16) buf.push_back(static_cast<unsigned char>((q >> 8) & 0xff));
        buf.push_back(static_cast<unsigned char>(q & 0xff));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("write_pgm: short write to '" + path + "'");
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("short write to '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return s;
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

} // namespace wfsim::io
