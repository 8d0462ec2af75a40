#include "aftrans/region.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "aftrans/tensor.hpp"

namespace aftrans {

double box_iou(const RegionBox& a, const RegionBox& b) {
    const long ir0 = std::max(a.row_min, b.row_min);
    const long ir1 = std::min(a.row_max, b.row_max);
    const long ic0 = std::max(a.col_min, b.col_min);
    const long ic1 = std::min(a.col_max, b.col_max);
    const long inter = std::max(0L, ir1 - ir0) * std::max(0L, ic1 - ic0);
    const long area_a = a.height() * a.width();
    const long area_b = b.height() * b.width();
    const long uni = area_a + area_b - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::size_t selection_count(std::size_t num_patches, double lambda) {
    if (lambda <= 0.0 || lambda > 1.0)
        throw ValueError("selection_count: lambda must be in (0,1]");
    const double t = static_cast<double>(num_patches) * lambda;
    const long long nearest = std::llround(t);
    long long m = (std::abs(t - static_cast<double>(nearest)) < 1e-9)
                      ? nearest
                      : static_cast<long long>(std::ceil(t));
    m = std::max(1LL, std::min(m, static_cast<long long>(num_patches)));
    return static_cast<std::size_t>(m);
}

std::vector<bool> select_tokens(const std::vector<double>& class_row,
                                std::size_t grid_side, double lambda) {
    const std::size_t n = class_row.size();
    if (n != grid_side * grid_side)
        throw ShapeError("select_tokens: class_row length must equal grid_side^2");
    const std::size_t m = selection_count(n, lambda);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (class_row[a] != class_row[b]) return class_row[a] > class_row[b];
        return a < b;
    });

    std::vector<bool> grid(n, false);
    for (std::size_t i = 0; i < m; ++i)
        grid[order[i]] = true;
    return grid;
}

std::vector<std::size_t> largest_connected_component(const std::vector<bool>& grid,
                                                     std::size_t grid_side) {
    const std::size_t n = grid_side * grid_side;
    if (grid.size() != n)
        throw ShapeError("largest_connected_component: grid size mismatch");

    std::vector<int> label(n, -1);
    std::vector<std::vector<std::size_t>> components;
    std::vector<std::size_t> stack;

    for (std::size_t start = 0; start < n; ++start) {
        if (!grid[start] || label[start] != -1) continue;
        const int id = static_cast<int>(components.size());
        components.emplace_back();
        stack.clear();
        stack.push_back(start);
        label[start] = id;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            components[id].push_back(cur);
            const std::size_t r = cur / grid_side, c = cur % grid_side;
            const std::size_t nbrs[4][2] = {
                {r > 0 ? r - 1 : r, c}, {r + 1, c}, {r, c > 0 ? c - 1 : c}, {r, c + 1}};
            for (auto& nb : nbrs) {
                if (nb[0] >= grid_side || nb[1] >= grid_side) continue;
                const std::size_t idx = nb[0] * grid_side + nb[1];
                if (idx == cur || !grid[idx] || label[idx] != -1) continue;
                label[idx] = id;
                stack.push_back(idx);
            }
        }
        std::sort(components[id].begin(), components[id].end());
    }

    if (components.empty())
        throw ValueError("largest_connected_component: all-false grid");

    // Components are discovered in order of their smallest flat index, so the
    // first maximal component wins ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < components.size(); ++i)
        if (components[i].size() > components[best].size()) best = i;
    return components[best];
}

RegionBox region_to_box(const std::vector<std::size_t>& patches, std::size_t grid_side,
                        std::size_t patch_size, std::size_t stride,
                        std::size_t image_h, std::size_t image_w) {
    if (patches.empty())
        throw ValueError("region_to_box: empty patch set");
    std::size_t min_r = grid_side, max_r = 0, min_c = grid_side, max_c = 0;
    for (std::size_t idx : patches) {
        const std::size_t r = idx / grid_side, c = idx % grid_side;
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
    }
    RegionBox box;
    box.row_min = static_cast<long>(min_r * stride);
    box.col_min = static_cast<long>(min_c * stride);
    box.row_max = std::min(static_cast<long>(max_r * stride + patch_size),
                           static_cast<long>(image_h));
    box.col_max = std::min(static_cast<long>(max_c * stride + patch_size),
                           static_cast<long>(image_w));
    box.selected_patches = patches;
    std::sort(box.selected_patches.begin(), box.selected_patches.end());
    box.component_size = patches.size();
    return box;
}

}  // namespace aftrans
