#pragma once

#include <algorithm>
#include <vector>

#include "aftrans/config.hpp"
#include "aftrans/ppm.hpp"
#include "aftrans/region.hpp"
#include "aftrans/tensor.hpp"

namespace aftrans {

/// Upsample the class row to pixel resolution: each pixel accumulates the
/// class-row value of every window covering it, divided by its coverage
/// count, then the whole map is max-normalized to [0,1].
inline std::vector<double> render_heatmap(const std::vector<double>& class_row,
                                          std::size_t grid_side, std::size_t patch_size,
                                          std::size_t stride, std::size_t image_size) {
    std::vector<double> acc(image_size * image_size, 0.0);
    std::vector<std::size_t> cover(image_size * image_size, 0);
    for (std::size_t wr = 0; wr < grid_side; ++wr)
        for (std::size_t wc = 0; wc < grid_side; ++wc) {
            const double v = class_row[wr * grid_side + wc];
            for (std::size_t y = wr * stride; y < wr * stride + patch_size && y < image_size; ++y)
                for (std::size_t x = wc * stride; x < wc * stride + patch_size && x < image_size; ++x) {
                    acc[y * image_size + x] += v;
                    cover[y * image_size + x] += 1;
                }
        }
    double mx = 0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        if (cover[i] > 0) acc[i] /= static_cast<double>(cover[i]);
        mx = std::max(mx, acc[i]);
    }
    if (mx > 0)
        for (auto& v : acc) v /= mx;
    return acc;
}

/// Blend toward pure red proportional to heat: out = in*(1-0.6h) + red*0.6h.
inline PpmImage overlay_heatmap(const PpmImage& base, const std::vector<double>& heat) {
    PpmImage out = base;
    for (std::size_t y = 0; y < base.height; ++y)
        for (std::size_t x = 0; x < base.width; ++x) {
            const double h = heat[y * base.width + x];
            const double w = 0.6 * h;
            const double red[3] = {255.0, 0.0, 0.0};
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = base.at(y, x, c) * (1.0 - w) + red[c] * w;
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    return out;
}

/// 2-pixel red rectangle along the box border, clamped to the image.
inline PpmImage draw_box(const PpmImage& base, const RegionBox& box) {
    PpmImage out = base;
    const long h = static_cast<long>(base.height), w = static_cast<long>(base.width);
    auto paint = [&](long y, long x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 0) = 255;
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 1) = 0;
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 2) = 0;
    };
    for (long t = 0; t < 2; ++t) {
        for (long x = box.col_min; x < box.col_max; ++x) {
            paint(box.row_min + t, x);
            paint(box.row_max - 1 - t, x);
        }
        for (long y = box.row_min; y < box.row_max; ++y) {
            paint(y, box.col_min + t);
            paint(y, box.col_max - 1 - t);
        }
    }
    return out;
}

}  // namespace aftrans
