#include "mfuse/errors.hpp"
#include "mfuse/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mfuse;

namespace {

DisparityMap filled(int w, int h, float v) { return DisparityMap(w, h, v); }

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect prediction") {
    const auto gt = filled(4, 4, 3.0f);
    const auto r = evaluate(gt, gt);
    CHECK(r.rms == 0.0);
    CHECK(r.avg_err == 0.0);
    for (const auto& [t, v] : r.bad) CHECK(v == 0.0);
    CHECK(r.pixels == 16);
}

TEST_CASE("off by one everywhere") {
    const auto r = evaluate(filled(3, 3, 4.0f), filled(3, 3, 3.0f));
    CHECK(r.rms == 1.0);
    CHECK(r.avg_err == 1.0);
    CHECK(r.bad.at(0.5) == 100.0);
    CHECK(r.bad.at(1.0) == 0.0);
    CHECK(r.bad.at(2.0) == 0.0);
}

TEST_CASE("half off by two") {
    auto pred = filled(4, 2, 1.0f);
    const auto gt = filled(4, 2, 1.0f);
    for (int x = 0; x < 4; ++x) pred.at(x, 0) = 3.0f;
    const auto r = evaluate(pred, gt);
    CHECK(r.avg_err == 1.0);
    CHECK(r.rms == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(r.bad.at(1.0) == 50.0);
    CHECK(r.bad.at(2.0) == 0.0);
}

TEST_CASE("invalid predictions fail every threshold unless masked") {
    auto pred = filled(2, 1, 5.0f);
    const auto gt = filled(2, 1, 5.0f);
    pred.at(1, 0) = DisparityMap::kInvalid;
    const auto pen = evaluate(pred, gt);
    CHECK(std::isinf(pen.rms));
    CHECK(std::isinf(pen.avg_err));
    CHECK(pen.bad.at(2.0) == 50.0);
    CHECK(pen.invalid == 1);
    const auto mask = evaluate(pred, gt, kDefaultThresholds, InvalidPolicy::MaskOut);
    CHECK(mask.rms == 0.0);
    CHECK(mask.pixels == 1);
}

TEST_CASE("invalid ground truth is skipped; nothing to evaluate is an error") {
    auto gt = filled(2, 1, 1.0f);
    gt.at(0, 0) = DisparityMap::kInvalid;
    const auto r = evaluate(filled(2, 1, 2.0f), gt);
    CHECK(r.pixels == 1);
    CHECK_THROWS_AS(evaluate(filled(2, 1, 1.0f), filled(2, 1, DisparityMap::kInvalid)), InputError);
    CHECK_THROWS_AS(evaluate(filled(2, 1, DisparityMap::kInvalid), filled(2, 1, 1.0f)), InputError);
    CHECK_THROWS_AS(evaluate(filled(2, 1, 1.0f), filled(1, 2, 1.0f)), InputError);
}

TEST_CASE("random properties: monotone bad, rms >= avg, sign symmetry") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> val(0.0f, 20.0f);
    std::uniform_real_distribution<float> off(0.0f, 4.0f);
    const std::vector<double> ts = {0.25, 0.5, 1.0, 1.5, 2.0, 3.0};
    for (int trial = 0; trial < 300; ++trial) {
        DisparityMap gt(6, 5), pred(6, 5);
        for (std::size_t i = 0; i < gt.size(); ++i) {
            gt.data()[i] = val(rng);
            pred.data()[i] = rng() % 10 == 0 ? DisparityMap::kInvalid : val(rng);
        }
        pred.data()[0] = gt.data()[0];
        for (auto policy : {InvalidPolicy::Penalize, InvalidPolicy::MaskOut}) {
            const auto r = evaluate(pred, gt, ts, policy);
            double prev = 100.0;
            for (const auto& [t, v] : r.bad) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= prev);
                prev = v;
            }
            REQUIRE(r.rms >= r.avg_err);
            REQUIRE(r.avg_err >= 0.0);
        }
        const float c = off(rng);
        DisparityMap up = gt, down = gt;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            up.data()[i] = gt.data()[i] + c;
            down.data()[i] = gt.data()[i] - c;
        }
        // gt + c and gt - c round to different floats; compare the exact errors they encode.
        const auto a = evaluate(up, gt, ts);
        const auto b = evaluate(down, gt, ts);
        CHECK(a.avg_err == doctest::Approx(b.avg_err).epsilon(1e-5));
        CHECK(a.rms == doctest::Approx(b.rms).epsilon(1e-5));
    }
}

TEST_CASE("sign symmetry is exact for representable offsets") {
    const auto gt = filled(3, 3, 8.0f);
    for (float c : {0.25f, 0.5f, 1.0f, 2.5f}) {
        const auto a = evaluate(filled(3, 3, 8.0f + c), gt);
        const auto b = evaluate(filled(3, 3, 8.0f - c), gt);
        CHECK(a.rms == b.rms);
        CHECK(a.avg_err == b.avg_err);
        CHECK(a.bad == b.bad);
    }
}

TEST_CASE("dataset aggregation is an unweighted mean") {
    const auto gt = filled(2, 2, 0.0f);
    const auto one = filled(2, 2, 1.0f);
    const auto gt_big = filled(8, 8, 0.0f);
    const auto three = filled(8, 8, 3.0f);
    const auto report = evaluate_dataset({{"a", &one, &gt}, {"b", &three, &gt_big}});
    REQUIRE(report.scenes.size() == 2);
    CHECK(report.mean.avg_err == 2.0);
    CHECK(report.mean.rms == 2.0);
    CHECK(report.mean.bad.at(0.5) == 100.0);
    CHECK(report.mean.bad.at(2.0) == 50.0);

    const auto single = evaluate_dataset({{"only", &three, &gt_big}});
    CHECK(single.mean.avg_err == single.scenes[0].report.avg_err);
    CHECK(single.mean.bad == single.scenes[0].report.bad);
}

TEST_CASE("dataset errors name the scene") {
    const auto gt = filled(2, 2, 0.0f);
    const DisparityMap empty;
    try {
        evaluate_dataset({{"fine", &gt, &gt}, {"scene_0007", &empty, &gt}});
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("scene_0007") != std::string::npos);
    }
    CHECK_THROWS_AS(evaluate_dataset({}), InputError);
}

TEST_CASE("table layout") {
    const auto gt = filled(2, 2, 0.0f);
    const auto one = filled(2, 2, 1.0f);
    const auto table = format_table(evaluate_dataset({{"s0", &one, &gt}}));
    CHECK(table ==
          "scene\tRMS\tAvgErr\tBad0.5\tBad1\tBad2\n"
          "s0\t1.0000\t1.0000\t100.0000\t0.0000\t0.0000\n"
          "mean\t1.0000\t1.0000\t100.0000\t0.0000\t0.0000\n");
}

} // TEST_SUITE
