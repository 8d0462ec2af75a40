#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "aftrans/region.hpp"
#include "aftrans/tensor.hpp"

namespace aftrans {

/// Bilinear resample of a [C,H,W] image using half-pixel centers with edge
/// clamping. Value-only: no gradient flows through resampling.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw ShapeError("bilinear_resize: image must be [C,H,W]");
    if (out_h == 0 || out_w == 0) throw ValueError("bilinear_resize: zero-extent output");
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h == 0 || w == 0) throw ShapeError("bilinear_resize: empty source image");
    if (out_h == h && out_w == w) return image.detached_copy();

    auto out = Tensor<T>::zeros({c, out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(std::floor(fy));
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(std::floor(fx));
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T* plane = image.data->data() + ch * h * w;
                const double top = plane[y0 * w + x0] * (1.0 - wx) + plane[y0 * w + x1] * wx;
                const double bot = plane[y1 * w + x0] * (1.0 - wx) + plane[y1 * w + x1] * wx;
                (*out.data)[ch * out_h * out_w + oy * out_w + ox] =
                    static_cast<T>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

/// Sub-image copy of a [C,H,W] image. The box is clamped to the image; a box
/// that degenerates after clamping falls back to the full image. Stop-gradient:
/// box coordinates never carry gradient.
template <typename T>
Tensor<T> crop(const Tensor<T>& image, const RegionBox& box) {
    if (image.rank() != 3) throw ShapeError("crop: image must be [C,H,W]");
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    long r0 = std::clamp(box.row_min, 0L, static_cast<long>(h));
    long r1 = std::clamp(box.row_max, 0L, static_cast<long>(h));
    long c0 = std::clamp(box.col_min, 0L, static_cast<long>(w));
    long c1 = std::clamp(box.col_max, 0L, static_cast<long>(w));
    if (r1 <= r0 || c1 <= c0) {
        r0 = 0; r1 = static_cast<long>(h);
        c0 = 0; c1 = static_cast<long>(w);
    }
    const std::size_t oh = static_cast<std::size_t>(r1 - r0);
    const std::size_t ow = static_cast<std::size_t>(c1 - c0);
    auto out = Tensor<T>::zeros({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y) {
            const T* src = image.data->data() + ch * h * w + (r0 + y) * w + c0;
            std::copy(src, src + ow, out.data->data() + ch * oh * ow + y * ow);
        }
    return out;
}

}  // namespace aftrans
