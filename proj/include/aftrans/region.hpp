#pragma once

#include <cstddef>
#include <vector>

namespace aftrans {

/// Pixel-space rectangle, half-open [min, max) on both axes, with the grid
/// indices it was built from.
struct RegionBox {
    long row_min = 0;
    long col_min = 0;
    long row_max = 0;
    long col_max = 0;
    std::vector<std::size_t> selected_patches;  // flat grid indices, sorted
    std::size_t component_size = 0;

    long height() const { return row_max - row_min; }
    long width() const { return col_max - col_min; }

    static RegionBox full_image(std::size_t h, std::size_t w) {
        RegionBox b;
        b.row_max = static_cast<long>(h);
        b.col_max = static_cast<long>(w);
        return b;
    }
};

/// Intersection-over-union of two half-open boxes.
double box_iou(const RegionBox& a, const RegionBox& b);

/// Number of tokens selected for a given patch count and keep fraction:
/// min(N, ceil(N*lambda)), at least 1.
std::size_t selection_count(std::size_t num_patches, double lambda);

/// Rank patch tokens by class-row relevance and mark the top ceil(N*lambda)
/// on the G x G window grid (row-major). Ties go to the lower flat index.
std::vector<bool> select_tokens(const std::vector<double>& class_row,
                                std::size_t grid_side, double lambda);

/// Largest 4-connected component of a G x G boolean grid; size ties go to the
/// component containing the smallest flat index. Returns sorted flat indices.
std::vector<std::size_t> largest_connected_component(const std::vector<bool>& grid,
                                                     std::size_t grid_side);

/// Union of the P x P windows (stride S) of the given grid indices, clamped
/// to the image.
RegionBox region_to_box(const std::vector<std::size_t>& patches, std::size_t grid_side,
                        std::size_t patch_size, std::size_t stride,
                        std::size_t image_h, std::size_t image_w);

}  // namespace aftrans
