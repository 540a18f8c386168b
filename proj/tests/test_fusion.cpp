#include "mfuse/errors.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/synthscene.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mfuse;

namespace {

CostVolume cell_volume(float c) {
    CostVolume v(1, 1, 1, 1);
    v.at(1, 0, 0) = c;
    return v;
}

std::vector<CostVolume> cells(std::initializer_list<float> costs) {
    std::vector<CostVolume> out;
    for (float c : costs) out.push_back(cell_volume(c));
    return out;
}

float fused(std::initializer_list<float> costs, FusionStrategy s) { return fuse(cells(costs), s).at(1, 0, 0); }

CostVolume profile(std::initializer_list<float> costs, int d_min) {
    CostVolume v(d_min, d_min + static_cast<int>(costs.size()) - 1, 1, 1);
    int d = d_min;
    for (float c : costs) v.at(d++, 0, 0) = c;
    return v;
}

} // namespace

TEST_SUITE("fusion") {

TEST_CASE("worked examples for each strategy") {
    CHECK(fused({3, 1, 4, 2}, FusionStrategy::Min) == 1.0f);
    CHECK(fused({3, 1, 4, 2}, FusionStrategy::Mean) == 2.5f);
    CHECK(fused({3, 1, 4, 2}, FusionStrategy::Heuristic) == 2.0f);
    CHECK(fused({1, 2, 10, 11}, FusionStrategy::Heuristic) == 1.5f);
    CHECK(fused({5, 3}, FusionStrategy::Heuristic) == 3.0f);
    CHECK(fused({7}, FusionStrategy::Heuristic) == 7.0f);
    CHECK(fused({1, 2, 7}, FusionStrategy::Heuristic) == 1.5f);
    CHECK(fused({1, 2, 6}, FusionStrategy::Heuristic) == 3.0f);  // 6 is not > 3 * 2
}

TEST_CASE("outlier factor is configurable") {
    const float c[] = {1, 2, 5};
    CHECK(heuristic_fuse(c, 3.0f) == doctest::Approx(8.0 / 3.0));
    CHECK(heuristic_fuse(c, 2.0f) == 1.5f);
}

TEST_CASE("sentinels lose every sort") {
    CHECK(fused({kLargeCost, 4, kLargeCost, 2}, FusionStrategy::Heuristic) == 3.0f);
    CHECK(fused({kLargeCost, 4}, FusionStrategy::Min) == 4.0f);
}

TEST_CASE("MIN <= HEURISTIC <= MEAN on random cells") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> val(0.0f, 1000.0f);
    std::uniform_int_distribution<int> n(1, 6);
    for (int trial = 0; trial < 20000; ++trial) {
        std::vector<float> c(n(rng));
        for (float& x : c) x = val(rng);
        std::vector<CostVolume> vols;
        for (float x : c) vols.push_back(cell_volume(x));
        const float mn = fuse(vols, FusionStrategy::Min).at(1, 0, 0);
        const float he = fuse(vols, FusionStrategy::Heuristic).at(1, 0, 0);
        const float me = fuse(vols, FusionStrategy::Mean).at(1, 0, 0);
        REQUIRE(mn <= he);
        REQUIRE(he <= me);
    }
}

TEST_CASE("single volume is the identity and order does not matter") {
    std::mt19937_64 rng(2);
    std::vector<CostVolume> vols;
    for (int k = 0; k < 4; ++k) {
        CostVolume v(0, 3, 5, 4);
        for (float& c : v.data()) c = static_cast<float>(rng() % 500);
        vols.push_back(v);
    }
    for (auto s : {FusionStrategy::Mean, FusionStrategy::Min, FusionStrategy::Heuristic}) {
        CHECK(fuse(std::span(vols.data(), 1), s) == vols[0]);
        auto perm = vols;
        const auto reference = fuse(vols, s);
        for (int k = 0; k < 6; ++k) {
            std::shuffle(perm.begin(), perm.end(), rng);
            CHECK(fuse(perm, s) == reference);
        }
    }
}

TEST_CASE("fusion input validation") {
    CHECK_THROWS_AS(fuse(std::vector<CostVolume>{}, FusionStrategy::Mean), InputError);
    const std::vector<CostVolume> mixed = {CostVolume(0, 3, 2, 2), CostVolume(0, 4, 2, 2)};
    CHECK_THROWS_AS(fuse(mixed, FusionStrategy::Mean), InputError);
    CHECK(parse_fusion("heuristic") == FusionStrategy::Heuristic);
    CHECK_THROWS_AS(parse_fusion("median"), InputError);
}

TEST_CASE("winner-take-all and subpixel refinement") {
    const auto v = profile({5, 1, 4, 9}, 1);
    CHECK(wta_disparity(v, false).at(0, 0) == 2.0f);
    CHECK(wta_disparity(v, true).at(0, 0) == doctest::Approx(2.0 + 1.0 / 14.0).epsilon(1e-7));
    CHECK(subpixel_refine(2, 5, 1, 4) == doctest::Approx(2.0 + 1.0 / 14.0).epsilon(1e-12));
    CHECK(subpixel_refine(2, 4, 1, 4) == 2.0);
    CHECK(subpixel_refine(2, 1, 1, 1) == 2.0);
    CHECK(wta_disparity(profile({4, 1, 4}, 1), true).at(0, 0) == 2.0f);
    CHECK(wta_disparity(profile({1, 1, 1}, 1), true).at(0, 0) == 1.0f);  // tie -> smallest d
    CHECK(wta_disparity(profile({3, 1, 1}, 1), false).at(0, 0) == 2.0f);
    CHECK(wta_disparity(profile({1, 2, 3}, 1), true).at(0, 0) == 1.0f);  // boundary winner stays integer
}

TEST_CASE("all-sentinel pixels are invalid and sentinel neighbors block refinement") {
    CHECK_FALSE(wta_disparity(profile({kLargeCost, kLargeCost}, 0), false).valid(0, 0));
    CHECK(wta_disparity(profile({kLargeCost, 1, 4}, 0), true).at(0, 0) == 1.0f);
}

TEST_CASE("symmetric triples refine to the integer and offsets stay below one") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> val(0.0f, 100.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        const float c0 = val(rng);
        const float side = c0 + 1.0f + val(rng);
        CHECK(subpixel_refine(7, side, c0, side) == 7.0);
        const float cm = c0 + val(rng) + 1e-3f;
        const float cp = c0 + val(rng) + 1e-3f;
        CHECK(std::fabs(subpixel_refine(7, cm, c0, cp) - 7.0) < 1.0);
    }
}

TEST_CASE("WTA recovers a textured constant-disparity scene under every strategy") {
    SceneSpec spec;
    spec.width = 48;
    spec.height = 48;
    spec.d_max = 10;
    spec.noise_sigma = 1.0;
    spec.layers = {SceneLayer{4}};
    const auto scene = generate_scene(spec, 17);
    const auto vols = multiscopic_volumes(scene.views, Matcher::Sad, {2, 1, 10});
    for (auto s : {FusionStrategy::Mean, FusionStrategy::Min, FusionStrategy::Heuristic}) {
        const auto disp = wta_disparity(fuse(vols, s), true);
        // Within d of the border one view has no match at the true disparity.
        const int margin = 6;
        int good = 0, total = 0;
        for (int y = margin; y < 48 - margin; ++y) {
            for (int x = margin; x < 48 - margin; ++x) {
                good += std::fabs(disp.at(x, y) - 4.0f) <= 0.5f;
                ++total;
            }
        }
        CHECK(good >= 0.95 * total);
    }
}

} // TEST_SUITE
