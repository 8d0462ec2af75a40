#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "aftrans/region.hpp"
#include "aftrans/sacm.hpp"
#include "aftrans/vit.hpp"

using namespace aftrans;
using Td = Tensor<double>;

namespace {

AttentionStack<double> random_stack(std::size_t layers, std::size_t heads,
                                    std::size_t extent, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.01, 1.0);
    AttentionStack<double> stack;
    stack.num_layers = layers;
    stack.num_heads = heads;
    stack.extent = extent;
    stack.maps.resize(layers);
    for (std::size_t li = 0; li < layers; ++li) {
        for (std::size_t h = 0; h < heads; ++h) {
            auto m = Td::zeros({extent, extent});
            // Row-stochastic like a real attention map.
            for (std::size_t r = 0; r < extent; ++r) {
                double row_sum = 0;
                for (std::size_t c = 0; c < extent; ++c) {
                    (*m.data)[r * extent + c] = dist(rng);
                    row_sum += (*m.data)[r * extent + c];
                }
                for (std::size_t c = 0; c < extent; ++c)
                    (*m.data)[r * extent + c] /= row_sum;
            }
            stack.maps[li].push_back(std::move(m));
        }
    }
    return stack;
}

// Reference flood fill used as an independent oracle for the component search.
std::vector<std::size_t> oracle_largest_component(const std::vector<bool>& grid,
                                                  std::size_t g) {
    std::vector<bool> seen(grid.size(), false);
    std::vector<std::size_t> best;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        if (!grid[s] || seen[s]) continue;
        std::vector<std::size_t> comp, frontier{s};
        seen[s] = true;
        while (!frontier.empty()) {
            const std::size_t cur = frontier.back();
            frontier.pop_back();
            comp.push_back(cur);
            const long r = static_cast<long>(cur / g), c = static_cast<long>(cur % g);
            const long cand[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (auto& nb : cand) {
                if (nb[0] < 0 || nb[1] < 0 || nb[0] >= static_cast<long>(g) ||
                    nb[1] >= static_cast<long>(g))
                    continue;
                const std::size_t idx =
                    static_cast<std::size_t>(nb[0]) * g + static_cast<std::size_t>(nb[1]);
                if (!grid[idx] || seen[idx]) continue;
                seen[idx] = true;
                frontier.push_back(idx);
            }
        }
        std::sort(comp.begin(), comp.end());
        // Strictly larger wins; on ties the earlier (smaller min index) one stays.
        if (comp.size() > best.size()) best = comp;
    }
    return best;
}

}  // namespace

TEST_CASE("fuse_heads: matches the elementwise-product oracle") {
    auto stack = random_stack(3, 4, 5, 101);
    auto fused = fuse_heads(stack);
    REQUIRE(fused.size() == 3);
    for (std::size_t li = 0; li < 3; ++li) {
        REQUIRE(fused[li].shape == std::vector<std::size_t>{5, 5});
        for (std::size_t i = 0; i < 25; ++i) {
            double expect = 1.0;
            for (std::size_t h = 0; h < 4; ++h)
                expect *= (*stack.at(li, h).data)[i];
            CHECK((*fused[li].data)[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("fuse_heads: single head is an identity copy") {
    auto stack = random_stack(2, 1, 4, 102);
    auto fused = fuse_heads(stack);
    for (std::size_t li = 0; li < 2; ++li)
        for (std::size_t i = 0; i < 16; ++i)
            CHECK((*fused[li].data)[i] == (*stack.at(li, 0).data)[i]);
}

TEST_CASE("fuse_heads: invariant under head order") {
    auto stack = random_stack(2, 3, 4, 103);
    auto reversed = stack;
    for (auto& layer : reversed.maps) std::reverse(layer.begin(), layer.end());
    auto a = fuse_heads(stack);
    auto b = fuse_heads(reversed);
    for (std::size_t li = 0; li < 2; ++li)
        for (std::size_t i = 0; i < 16; ++i)
            CHECK((*a[li].data)[i] == doctest::Approx((*b[li].data)[i]).epsilon(1e-12));
}

TEST_CASE("compute_gates: zero-initialized gate network yields exactly 0.5") {
    ModelConfig cfg;
    cfg.num_layers = 6;
    cfg.reduction_ratio = 4;
    auto params = init_gate_params<double>(cfg);
    for (int rep = 0; rep < 20; ++rep) {
        auto stack = random_stack(6, 2, 5, 200 + static_cast<std::uint64_t>(rep));
        auto gates = compute_gates(fuse_heads(stack), params);
        REQUIRE(gates.size() == 6);
        for (double gate : gates) CHECK(gate == 0.5);
    }
}

TEST_CASE("compute_gates: matches a hand-evaluated two-layer oracle") {
    // L = 2, hidden = 1. Pick maps with known means.
    std::vector<Td> maps;
    maps.push_back(Td::from({2, 2}, {0.1, 0.2, 0.3, 0.4}));  // mean 0.25
    maps.push_back(Td::from({2, 2}, {1.0, 1.0, 1.0, 1.0}));  // mean 1.0
    GateParams<double> p;
    p.w1 = Td::from({1, 2}, {2.0, -0.5});
    p.b1 = Td::from({1}, {0.25});
    p.w2 = Td::from({2, 1}, {1.5, -3.0});
    p.b2 = Td::from({2}, {0.0, 0.1});

    const double hidden = std::max(0.0, 2.0 * 0.25 - 0.5 * 1.0 + 0.25);  // 0.25
    const double g0 = 1.0 / (1.0 + std::exp(-(1.5 * hidden + 0.0)));
    const double g1 = 1.0 / (1.0 + std::exp(-(-3.0 * hidden + 0.1)));

    auto gates = compute_gates(maps, p);
    CHECK(gates[0] == doctest::Approx(g0).epsilon(1e-12));
    CHECK(gates[1] == doctest::Approx(g1).epsilon(1e-12));
}

TEST_CASE("compute_gates: relu clips the hidden unit") {
    std::vector<Td> maps;
    maps.push_back(Td::from({1, 1}, {1.0}));
    GateParams<double> p;
    p.w1 = Td::from({1, 1}, {-5.0});  // pre-activation -5 -> relu 0
    p.b1 = Td::from({1}, {0.0});
    p.w2 = Td::from({1, 1}, {100.0});
    p.b2 = Td::from({1}, {0.0});
    auto gates = compute_gates(maps, p);
    CHECK(gates[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("compute_gates: rejects mismatched layer count") {
    ModelConfig cfg;
    cfg.num_layers = 4;
    auto params = init_gate_params<double>(cfg);
    std::vector<Td> maps(3, Td::zeros({2, 2}));
    CHECK_THROWS_AS(compute_gates(maps, params), ShapeError);
}

TEST_CASE("fuse_layers: matches the weighted-sum oracle") {
    auto stack = random_stack(3, 2, 4, 300);
    auto maps = fuse_heads(stack);
    std::vector<double> gates = {0.2, 0.9, 0.45};
    auto fused = fuse_layers(maps, gates);
    for (std::size_t i = 0; i < 16; ++i) {
        const double expect = 0.2 * (*maps[0].data)[i] + 0.9 * (*maps[1].data)[i] +
                              0.45 * (*maps[2].data)[i];
        CHECK((*fused.data)[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK_THROWS_AS(fuse_layers(maps, std::vector<double>{1.0, 1.0}), ShapeError);
}

TEST_CASE("fuse_layers: fresh gate network gives exactly half the plain sum") {
    ModelConfig cfg;
    cfg.num_layers = 4;
    auto params = init_gate_params<double>(cfg);
    auto stack = random_stack(4, 2, 5, 301);
    auto maps = fuse_heads(stack);
    auto fused = fuse_layers(maps, compute_gates(maps, params));
    for (std::size_t i = 0; i < 25; ++i) {
        double plain = 0;
        for (std::size_t li = 0; li < 4; ++li) plain += 0.5 * (*maps[li].data)[i];
        CHECK((*fused.data)[i] == doctest::Approx(plain).epsilon(1e-12));
    }
}

TEST_CASE("selection_count: ceiling law over a lambda grid") {
    for (std::size_t n : {25UL, 100UL, 1369UL}) {
        for (double lambda : {0.1, 0.2, 0.3, 0.4, 0.5}) {
            const auto m = selection_count(n, lambda);
            const auto expect = static_cast<std::size_t>(
                std::ceil(static_cast<double>(n) * lambda - 1e-9));
            CHECK(m == std::max<std::size_t>(1, std::min(n, expect)));
        }
    }
    CHECK(selection_count(100, 1.0) == 100);
    CHECK(selection_count(7, 0.0001) == 1);  // floor at one token
    CHECK(selection_count(10, 0.3) == 3);    // 10*0.3 = 2.999...996 snaps to 3, not ceil 3->3
    CHECK_THROWS_AS(selection_count(10, 0.0), ValueError);
    CHECK_THROWS_AS(selection_count(10, 1.5), ValueError);
}

TEST_CASE("select_tokens: picks the top scores with lower-index tie-break") {
    // 3x3 grid, two entries tied at the cut.
    std::vector<double> row = {0.9, 0.1, 0.5, 0.5, 0.2, 0.3, 0.05, 0.5, 0.0};
    auto grid = select_tokens(row, 3, 0.4);  // ceil(9*0.4) = 4
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < 9; ++i)
        if (grid[i]) picked.push_back(i);
    // Top scores: 0.9 (idx 0) then the 0.5 ties at 2, 3, 7 -> lower indices first.
    CHECK(picked == std::vector<std::size_t>{0, 2, 3, 7});
}

TEST_CASE("select_tokens: invariant under positive rescaling of the scores") {
    std::mt19937_64 rng(400);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> row(36);
        for (auto& v : row) v = dist(rng);
        auto scaled = row;
        for (auto& v : scaled) v *= 7.3;
        for (double lambda : {0.1, 0.25, 0.4, 0.8}) {
            CHECK(select_tokens(row, 6, lambda) == select_tokens(scaled, 6, lambda));
        }
    }
}

TEST_CASE("select_tokens: rejects a row that does not match the grid") {
    std::vector<double> row(8, 0.0);
    CHECK_THROWS_AS(select_tokens(row, 3, 0.4), ShapeError);
}

TEST_CASE("largest_connected_component: agrees with a flood-fill oracle") {
    std::mt19937_64 rng(500);
    for (int rep = 0; rep < 300; ++rep) {
        std::uniform_int_distribution<std::size_t> side_dist(2, 12);
        const std::size_t g = side_dist(rng);
        std::bernoulli_distribution coin(0.45);
        std::vector<bool> grid(g * g);
        bool any = false;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid[i] = coin(rng);
            any = any || grid[i];
        }
        if (!any) grid[rng() % grid.size()] = true;
        CHECK(largest_connected_component(grid, g) == oracle_largest_component(grid, g));
    }
}

TEST_CASE("largest_connected_component: tie goes to the smaller leading index") {
    // Two separate 2-cell components on a 3x3 grid.
    //  X . X
    //  X . X
    //  . . .
    std::vector<bool> grid = {true, false, true, true, false, true, false, false, false};
    auto comp = largest_connected_component(grid, 3);
    CHECK(comp == std::vector<std::size_t>{0, 3});
}

TEST_CASE("largest_connected_component: diagonal cells are not connected") {
    std::vector<bool> grid = {true, false, false, true};  // 2x2 diagonal
    auto comp = largest_connected_component(grid, 2);
    CHECK(comp == std::vector<std::size_t>{0});
}

TEST_CASE("largest_connected_component: rejects an all-false grid") {
    std::vector<bool> grid(9, false);
    CHECK_THROWS_AS(largest_connected_component(grid, 3), ValueError);
}

TEST_CASE("region_to_box: two diagonal windows at patch 16 stride 12") {
    // Grid positions (0,0) and (1,1): union covers rows/cols [0, 12+16) = [0, 28).
    std::vector<std::size_t> patches = {0, 38};  // grid side 37 -> (1,1) = 38
    auto box = region_to_box(patches, 37, 16, 12, 448, 448);
    CHECK(box.row_min == 0);
    CHECK(box.col_min == 0);
    CHECK(box.row_max == 28);
    CHECK(box.col_max == 28);
    CHECK(box.component_size == 2);
}

TEST_CASE("region_to_box: single window and edge clamping") {
    // Index 36 on a 37-wide grid is (0, 36): starts at col 432, 432+16 = 448.
    auto box = region_to_box({36}, 37, 16, 12, 448, 448);
    CHECK(box.row_min == 0);
    CHECK(box.row_max == 16);
    CHECK(box.col_min == 432);
    CHECK(box.col_max == 448);

    // Clamp against a smaller image.
    auto clamped = region_to_box({36}, 37, 16, 12, 440, 440);
    CHECK(clamped.col_max == 440);
    CHECK_THROWS_AS(region_to_box({}, 37, 16, 12, 448, 448), ValueError);
}

TEST_CASE("propose_region: single-layer mode reproduces that layer alone") {
    ModelConfig cfg;
    cfg.image_size_global = 16;
    cfg.image_size_local = 16;
    cfg.patch_size = 8;
    cfg.stride = 8;
    cfg.embed_dim = 8;
    cfg.num_layers = 3;
    cfg.num_heads = 2;
    cfg.lambda_thresh = 0.5;
    const std::size_t g = cfg.tokens_per_side(cfg.image_size_global);
    REQUIRE(g == 2);
    auto stack = random_stack(cfg.num_layers, cfg.num_heads, g * g + 1, 600);
    auto params = init_gate_params<double>(cfg);

    cfg.fusion_mode = FusionMode::single_layer;
    cfg.single_layer_index = 1;
    auto [box, fam] = propose_region(stack, params, cfg);

    auto maps = fuse_heads(stack);
    for (std::size_t i = 0; i < fam.fused.numel(); ++i)
        CHECK((*fam.fused.data)[i] == doctest::Approx((*maps[1].data)[i]).epsilon(1e-12));
    CHECK(fam.gates == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(box.height() >= 8);
    CHECK(box.width() >= 8);
}

TEST_CASE("propose_region: no-gate mode sums all layers with unit weight") {
    ModelConfig cfg;
    cfg.image_size_global = 16;
    cfg.image_size_local = 16;
    cfg.patch_size = 8;
    cfg.stride = 8;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.lambda_thresh = 0.5;
    cfg.fusion_mode = FusionMode::no_gate;
    auto stack = random_stack(2, 2, 5, 601);
    auto params = init_gate_params<double>(cfg);
    auto [box, fam] = propose_region(stack, params, cfg);

    auto maps = fuse_heads(stack);
    for (std::size_t i = 0; i < fam.fused.numel(); ++i) {
        const double expect = (*maps[0].data)[i] + (*maps[1].data)[i];
        CHECK((*fam.fused.data)[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(fam.gates == std::vector<double>(2, 1.0));
}

TEST_CASE("propose_region: concentrated attention pins the box to that corner") {
    ModelConfig cfg;
    cfg.image_size_global = 32;
    cfg.image_size_local = 32;
    cfg.patch_size = 8;
    cfg.stride = 8;
    cfg.num_layers = 3;
    cfg.num_heads = 2;
    cfg.num_classes = 2;
    cfg.lambda_thresh = 0.25;  // 16 patches -> select 4
    const std::size_t g = cfg.tokens_per_side(cfg.image_size_global);
    REQUIRE(g == 4);
    const std::size_t extent = g * g + 1;

    // Build a stack whose class row peaks on the top-left 2x2 patch block.
    AttentionStack<double> stack;
    stack.num_layers = 3;
    stack.num_heads = 2;
    stack.extent = extent;
    stack.maps.resize(3);
    const std::vector<std::size_t> hot = {0, 1, 4, 5};
    for (std::size_t li = 0; li < 3; ++li) {
        for (std::size_t h = 0; h < 2; ++h) {
            auto m = Td::zeros({extent, extent});
            for (std::size_t r = 0; r < extent; ++r)
                for (std::size_t c = 0; c < extent; ++c)
                    m.at(r, c) = 0.01;
            for (std::size_t idx : hot) m.at(0, 1 + idx) = 0.9;
            stack.maps[li].push_back(std::move(m));
        }
    }
    auto params = init_gate_params<double>(cfg);
    auto [box, fam] = propose_region(stack, params, cfg);
    CHECK(box.selected_patches == hot);
    CHECK(box.row_min == 0);
    CHECK(box.col_min == 0);
    CHECK(box.row_max == 16);  // second window starts at 8, width 8
    CHECK(box.col_max == 16);
    for (double gate : fam.gates) CHECK(gate == 0.5);
    REQUIRE(fam.class_row.size() == 16);
    CHECK(fam.class_row[0] == doctest::Approx(3 * 0.5 * 0.9 * 0.9).epsilon(1e-12));
}

TEST_CASE("propose_region: uniform attention is deterministic via the tie-break") {
    ModelConfig cfg;
    cfg.image_size_global = 16;
    cfg.image_size_local = 16;
    cfg.patch_size = 8;
    cfg.stride = 8;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.lambda_thresh = 0.5;  // 4 patches -> select 2
    AttentionStack<double> stack;
    stack.num_layers = 2;
    stack.num_heads = 2;
    stack.extent = 5;
    stack.maps.resize(2);
    for (std::size_t li = 0; li < 2; ++li)
        for (std::size_t h = 0; h < 2; ++h) {
            auto m = Td::zeros({5, 5});
            for (auto& v : *m.data) v = 0.2;
            stack.maps[li].push_back(std::move(m));
        }
    auto params = init_gate_params<double>(cfg);
    auto [box, fam] = propose_region(stack, params, cfg);
    // All scores equal -> indices 0 and 1 win, which are grid cells (0,0), (0,1).
    CHECK(box.selected_patches == std::vector<std::size_t>{0, 1});
    CHECK(box.row_min == 0);
    CHECK(box.row_max == 8);
    CHECK(box.col_min == 0);
    CHECK(box.col_max == 16);
}
