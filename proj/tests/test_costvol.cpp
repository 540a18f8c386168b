#include "mfuse/costvol.hpp"
#include "mfuse/errors.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/synthscene.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mfuse;

namespace {

constexpr Direction kAll[] = {Direction::Left, Direction::Right, Direction::Top, Direction::Bottom};

Image mirror_x(const Image& img) {
    Image out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(img.width() - 1 - x, y);
    return out;
}

} // namespace

TEST_SUITE("costvol") {

TEST_CASE("identical constant images cost nothing at d = 0") {
    const Image img(6, 5, 10.0f);
    for (int rho : {0, 1, 2}) {
        const auto vol = sad_cost_volume(img, img, Direction::Right, {rho, 0, 0});
        for (float c : vol.slice(0)) CHECK(c == 0.0f);
    }
}

TEST_CASE("single-pixel SAD example") {
    Image ref(3, 3, 0.0f);
    Image target(3, 3, 0.0f);
    ref.at(1, 1) = 5;
    target.at(0, 1) = 7;
    const auto vol = sad_cost_volume(ref, target, Direction::Right, {0, 1, 1});
    CHECK(vol.at(1, 1, 1) == 2.0f);
    CHECK(vol.at(1, 1, 0) == kLargeCost);  // (0 - 1, 1) is outside
}

TEST_CASE("SAD matches the brute-force oracle bit for bit") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> dim(1, 12);
    std::uniform_int_distribution<int> rho(0, 2);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = dim(rng), h = dim(rng);
        const Image ref = oracle::random_image(rng, w, h);
        const Image target = oracle::random_image(rng, w, h);
        const BlockMatchParams p{rho(rng), 0, std::max(w, h)};
        for (Direction d : kAll) REQUIRE(sad_cost_volume(ref, target, d, p) == oracle::sad(ref, target, d, p));
    }
}

TEST_CASE("SAD: 8x8 random pair at rho 1 over the full range") {
    std::mt19937_64 rng(8);
    const Image ref = oracle::random_image(rng, 8, 8);
    const Image target = oracle::random_image(rng, 8, 8);
    const BlockMatchParams p{1, 0, 7};
    CHECK(sad_cost_volume(ref, target, Direction::Left, p) == oracle::sad(ref, target, Direction::Left, p));
}

TEST_CASE("mirrored images swap LEFT and RIGHT") {
    std::mt19937_64 rng(9);
    const Image ref = oracle::random_image(rng, 9, 6);
    const Image target = oracle::random_image(rng, 9, 6);
    const BlockMatchParams p{1, 0, 4};
    const auto right = sad_cost_volume(ref, target, Direction::Right, p);
    const auto left = sad_cost_volume(mirror_x(ref), mirror_x(target), Direction::Left, p);
    for (int d = 0; d <= 4; ++d)
        for (int v = 0; v < 6; ++v)
            for (int u = 0; u < 9; ++u) REQUIRE(right.at(d, v, u) == left.at(d, v, 8 - u));
}

TEST_CASE("BT interval examples") {
    CHECK(bt_dissimilarity(15.0f, {8.0f, 12.0f}) == 3.0f);
    CHECK(bt_dissimilarity(10.0f, {8.0f, 12.0f}) == 0.0f);
    CHECK(bt_dissimilarity(5.0f, {8.0f, 12.0f}) == 3.0f);
}

TEST_CASE("BT interval covers the five half-pixel neighbors") {
    Image t(3, 3, 0.0f);
    t.at(1, 1) = 10;
    t.at(0, 1) = 2;
    t.at(2, 1) = 30;
    t.at(1, 0) = 10;
    t.at(1, 2) = 4;
    const auto iv = bt_interval(t, 1, 1);
    CHECK(iv.lo == 6.0f);   // (10 + 2) / 2
    CHECK(iv.hi == 20.0f);  // (10 + 30) / 2
    const auto corner = bt_interval(t, 0, 0);  // offsets clamp at the border
    CHECK(corner.lo == 0.0f);
    CHECK(corner.hi == 5.0f);
}

TEST_CASE("BT is zero on equal images and bounded by the absolute difference") {
    const Image flat(5, 5, 42.0f);
    const auto zero = bt_cost_volume(flat, flat, Direction::Top, {0, 0, 0});
    for (float c : zero.data()) CHECK(c == 0.0f);

    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Image ref = oracle::random_image(rng, 7, 6);
        const Image target = oracle::random_image(rng, 7, 6);
        for (Direction dir : kAll) {
            const auto vol = bt_cost_volume(ref, target, dir, {0, 0, 3});
            for (int d = 0; d <= 3; ++d) {
                for (int v = 0; v < 6; ++v) {
                    for (int u = 0; u < 7; ++u) {
                        const int x = u + direction_dx(dir) * d;
                        const int y = v + direction_dy(dir) * d;
                        if (!target.contains(x, y)) {
                            REQUIRE(vol.at(d, v, u) == kLargeCost);
                            continue;
                        }
                        REQUIRE(vol.at(d, v, u) >= 0.0f);
                        REQUIRE(vol.at(d, v, u) <= std::fabs(ref.at(u, v) - target.at(x, y)));
                    }
                }
            }
        }
    }
}

TEST_CASE("dimension mismatch and invalid parameters") {
    CHECK_THROWS_AS(sad_cost_volume(Image(3, 3), Image(3, 4), Direction::Left, {}), InputError);
    CHECK_THROWS_AS(bt_cost_volume(Image(3, 3), Image(4, 3), Direction::Left, {}), InputError);
    CHECK_THROWS_AS(sad_cost_volume(Image(3, 3), Image(3, 3), Direction::Left, {-1, 0, 1}), InputError);
    CHECK_THROWS_AS(sad_cost_volume(Image(3, 3), Image(3, 3), Direction::Left, {1, 3, 1}), InputError);
    CHECK_THROWS_AS(sad_cost_volume(Image(3, 3), Image(3, 3), Direction::Left, {1, -1, 1}), InputError);
}

TEST_CASE("multiscopic volumes follow the set order") {
    std::mt19937_64 rng(11);
    const Image c = oracle::random_image(rng, 6, 6);
    const Image r = oracle::random_image(rng, 6, 6);
    const Image l = oracle::random_image(rng, 6, 6);
    const BlockMatchParams p{1, 0, 2};
    const MultiscopicSet one(c, {{Direction::Right, r}});
    const auto v1 = multiscopic_volumes(one, Matcher::Sad, p);
    REQUIRE(v1.size() == 1);
    CHECK(v1[0] == sad_cost_volume(c, r, Direction::Right, p));

    const MultiscopicSet two(c, {{Direction::Left, l}, {Direction::Right, r}});
    const auto v2 = multiscopic_volumes(two, Matcher::Bt, p);
    REQUIRE(v2.size() == 2);
    CHECK(v2[0] == bt_cost_volume(c, l, Direction::Left, p));
    CHECK(v2[1] == bt_cost_volume(c, r, Direction::Right, p));
}

TEST_CASE("equal parallax: every view agrees on a constant-disparity scene") {
    SceneSpec spec;
    spec.width = 32;
    spec.height = 32;
    spec.d_max = 8;
    spec.layers = {SceneLayer{3}};
    const auto scene = generate_scene(spec, 5);
    const auto vols = multiscopic_volumes(scene.views, Matcher::Sad, {1, 0, 6});
    REQUIRE(vols.size() == 4);
    for (const auto& vol : vols) {
        const auto disp = wta_disparity(vol, false);
        int agree = 0, total = 0;
        for (int y = 8; y < 24; ++y) {
            for (int x = 8; x < 24; ++x) {
                ++total;
                agree += disp.at(x, y) == 3.0f;
            }
        }
        CHECK(agree == total);
    }
}

TEST_CASE("MCV1 container") {
    testing::TempDir dir("mcv");
    std::mt19937_64 rng(12);
    const Image a = oracle::random_image(rng, 5, 4);
    const Image b = oracle::random_image(rng, 5, 4);
    const auto vol = sad_cost_volume(a, b, Direction::Bottom, {1, 2, 5});
    write_volume(dir / "v.mcv", vol);
    CHECK(read_volume(dir / "v.mcv") == vol);

    const auto bytes = encode_volume(vol);
    REQUIRE(bytes.size() == 20 + vol.data().size() * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MCV1");
    CHECK(bytes[4] == 2);  // d_min, little-endian
    CHECK(bytes[8] == 5);
    CHECK(bytes[12] == 5);
    CHECK(bytes[16] == 4);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_volume(bad), FormatError);
    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_AS(decode_volume(cut), FormatError);
}

} // TEST_SUITE
