#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace aftrans {

/// 8-bit binary PPM (P6, maxval 255), RGB interleaved row-major.
struct PpmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) {
        return data[(y * width + x) * 3 + ch];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const {
        return data[(y * width + x) * 3 + ch];
    }
};

/// Throws ValueError naming the file on malformed input.
PpmImage read_ppm(const std::string& path);

void write_ppm(const std::string& path, const PpmImage& img);

}  // namespace aftrans
