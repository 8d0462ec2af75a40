#include <doctest.h>

#include <random>

#include "aftrans/image.hpp"
#include "aftrans/region.hpp"
#include "aftrans/tensor.hpp"

using namespace aftrans;
using Td = Tensor<double>;

TEST_CASE("bilinear_resize: same size is bitwise identical") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(0, 1);
    auto img = Td::zeros({3, 5, 7});
    for (auto& v : *img.data) v = dist(rng);
    auto out = bilinear_resize(img, 5, 7);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK((*out.data)[i] == (*img.data)[i]);
}

TEST_CASE("bilinear_resize: constant image stays constant at any size") {
    auto img = Td::zeros({2, 4, 4});
    for (auto& v : *img.data) v = 0.37;
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 9}, {8, 2}}) {
        auto out = bilinear_resize(img, h, w);
        for (auto v : *out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("bilinear_resize: 2x2 to 1x1 matches the half-pixel sampling oracle") {
    auto img = Td::from({1, 2, 2}, {0, 2, 4, 6});
    auto out = bilinear_resize(img, 1, 1);
    // Oracle: evaluate the sampling equation directly at output pixel (0,0).
    const double fy = std::clamp((0 + 0.5) * 2.0 / 1.0 - 0.5, 0.0, 1.0);
    const double fx = std::clamp((0 + 0.5) * 2.0 / 1.0 - 0.5, 0.0, 1.0);
    const std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
    const std::size_t y1 = std::min<std::size_t>(y0 + 1, 1), x1 = std::min<std::size_t>(x0 + 1, 1);
    const double wy = fy - y0, wx = fx - x0;
    auto px = [&](std::size_t y, std::size_t x) { return (*img.data)[y * 2 + x]; };
    const double expect = (px(y0, x0) * (1 - wx) + px(y0, x1) * wx) * (1 - wy) +
                          (px(y1, x0) * (1 - wx) + px(y1, x1) * wx) * wy;
    CHECK((*out.data)[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK((*out.data)[0] == doctest::Approx(3.0));  // center of [[0,2],[4,6]]
}

TEST_CASE("bilinear_resize: zero-extent output rejected") {
    auto img = Td::zeros({1, 2, 2});
    CHECK_THROWS_AS(bilinear_resize(img, 0, 3), ValueError);
}

TEST_CASE("crop: full-image box is bitwise identical") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(0, 1);
    auto img = Td::zeros({3, 6, 8});
    for (auto& v : *img.data) v = dist(rng);
    auto out = crop(img, RegionBox::full_image(6, 8));
    CHECK(out.shape == img.shape);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK((*out.data)[i] == (*img.data)[i]);
}

TEST_CASE("crop: 1x1 box picks the single pixel") {
    auto img = Td::zeros({2, 4, 4});
    for (std::size_t i = 0; i < img.numel(); ++i) (*img.data)[i] = static_cast<double>(i);
    RegionBox box;
    box.row_min = 2; box.row_max = 3;
    box.col_min = 1; box.col_max = 2;
    auto out = crop(img, box);
    CHECK(out.shape == std::vector<std::size_t>{2, 1, 1});
    CHECK((*out.data)[0] == (*img.data)[2 * 4 + 1]);
    CHECK((*out.data)[1] == (*img.data)[16 + 2 * 4 + 1]);
}

TEST_CASE("crop: random boxes satisfy the index-map oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0, 1);
    auto img = Td::zeros({3, 10, 12});
    for (auto& v : *img.data) v = dist(rng);

    std::uniform_int_distribution<long> rr(0, 9), cc(0, 11);
    for (int rep = 0; rep < 50; ++rep) {
        long r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
        if (r0 > r1) std::swap(r0, r1);
        if (c0 > c1) std::swap(c0, c1);
        ++r1; ++c1;
        RegionBox box;
        box.row_min = r0; box.row_max = r1;
        box.col_min = c0; box.col_max = c1;
        auto out = crop(img, box);
        REQUIRE(out.shape[1] == static_cast<std::size_t>(r1 - r0));
        REQUIRE(out.shape[2] == static_cast<std::size_t>(c1 - c0));
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (long y = 0; y < r1 - r0; ++y)
                for (long x = 0; x < c1 - c0; ++x)
                    CHECK((*out.data)[ch * out.shape[1] * out.shape[2] + y * out.shape[2] + x] ==
                          (*img.data)[ch * 120 + (r0 + y) * 12 + (c0 + x)]);
    }
}

TEST_CASE("crop: degenerate box falls back to the full image") {
    auto img = Td::zeros({1, 4, 4});
    (*img.data)[5] = 1.0;
    RegionBox empty;
    empty.row_min = 6; empty.row_max = 9;  // entirely outside, clamps to nothing
    empty.col_min = 0; empty.col_max = 2;
    auto out = crop(img, empty);
    CHECK(out.shape == img.shape);
    CHECK((*out.data)[5] == 1.0);
}

TEST_CASE("box_iou: exact overlap and the 64/448 example") {
    RegionBox a, b;
    a.row_min = 0; a.row_max = 16; a.col_min = 0; a.col_max = 16;
    CHECK(box_iou(a, a) == doctest::Approx(1.0));
    b.row_min = 8; b.row_max = 24; b.col_min = 8; b.col_max = 24;
    CHECK(box_iou(a, b) == doctest::Approx(64.0 / 448.0));
}
