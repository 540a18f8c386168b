#include "mfuse/errors.hpp"
#include "mfuse/synthscene.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mfuse;
namespace fs = std::filesystem;

namespace {

SceneLayer flat_layer(int d, double intensity, bool full, Rect region, int w, int h) {
    SceneLayer l;
    l.disparity = d;
    l.full = full;
    l.region = region;
    l.mean_intensity = intensity;
    l.flat_patches = {full ? Rect{-w, -h, 3 * w, 3 * h} : region};
    return l;
}

// Index of the front-most layer drawn at view pixel (x, y).
int front_layer(const SceneSpec& spec, Direction dir, int x, int y) {
    for (int k = static_cast<int>(spec.layers.size()) - 1; k >= 0; --k) {
        const auto& l = spec.layers[k];
        const int cx = x - direction_dx(dir) * l.disparity;
        const int cy = y - direction_dy(dir) * l.disparity;
        if (l.full || l.region.contains(cx, cy)) return k;
    }
    return -1;
}

const Image& view(const SyntheticScene& s, Direction d) { return *s.views.find(d); }

} // namespace

TEST_SUITE("synthscene") {

TEST_CASE("zero parallax scene renders identical views") {
    SceneSpec spec;
    spec.width = 16;
    spec.height = 12;
    spec.layers = {SceneLayer{0}};
    const auto s = generate_scene(spec, 1);
    for (const auto& v : s.views.surround()) CHECK(v.image == s.views.center());
    for (float d : s.ground_truth.data()) CHECK(d == 0.0f);
}

TEST_CASE("hand-composed two-layer scene") {
    const int w = 12, h = 12;
    const Rect square{4, 4, 2, 2};
    SceneSpec spec;
    spec.width = w;
    spec.height = h;
    spec.d_max = 3;
    spec.layers = {flat_layer(1, 100, true, {}, w, h), flat_layer(3, 200, false, square, w, h)};
    const auto s = generate_scene(spec, 9);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            CHECK(s.ground_truth.at(x, y) == (square.contains(x, y) ? 3.0f : 1.0f));
            CHECK(s.views.center().at(x, y) == (square.contains(x, y) ? 200.0f : 100.0f));
            // The square moves 3 px: right -> left, left -> right, top -> down, bottom -> up.
            CHECK(view(s, Direction::Right).at(x, y) == (square.contains(x + 3, y) ? 200.0f : 100.0f));
            CHECK(view(s, Direction::Left).at(x, y) == (square.contains(x - 3, y) ? 200.0f : 100.0f));
            CHECK(view(s, Direction::Top).at(x, y) == (square.contains(x, y - 3) ? 200.0f : 100.0f));
            CHECK(view(s, Direction::Bottom).at(x, y) == (square.contains(x, y + 3) ? 200.0f : 100.0f));
        }
    }
}

TEST_CASE("disparity limits are enforced") {
    SceneSpec spec;
    spec.width = 8;
    spec.height = 8;
    spec.d_max = 4;
    spec.layers = {SceneLayer{1}, SceneLayer{3, false, Rect{3, 3, 2, 2}}};
    CHECK_THROWS_AS(generate_scene(spec, 0), SpecError);  // 3 > 8 / 4
    spec.layers = {SceneLayer{5}};
    spec.width = spec.height = 64;
    CHECK_THROWS_AS(generate_scene(spec, 0), SpecError);  // above d_max
    spec.layers.clear();
    CHECK_THROWS_AS(generate_scene(spec, 0), SpecError);
}

TEST_CASE("ground truth is consistent with every view at zero noise") {
    SceneRanges r;
    r.noise_sigma = 0.0;
    for (int i = 0; i < 6; ++i) {
        const auto seed = scene_seed(77, i);
        const SceneSpec spec = random_scene_spec(r, seed);
        const auto s = generate_scene(spec, seed);
        int checked = 0;
        for (int v = 0; v < spec.height; ++v) {
            for (int u = 0; u < spec.width; ++u) {
                const int d = static_cast<int>(s.ground_truth.at(u, v));
                const int center_layer = [&] {
                    for (int j = static_cast<int>(spec.layers.size()) - 1; j >= 0; --j)
                        if (spec.layers[j].full || spec.layers[j].region.contains(u, v)) return j;
                    return -1;
                }();
                for (Direction dir : {Direction::Left, Direction::Right, Direction::Top, Direction::Bottom}) {
                    const int x = u + direction_dx(dir) * d;
                    const int y = v + direction_dy(dir) * d;
                    if (x < 0 || y < 0 || x >= spec.width || y >= spec.height) continue;
                    if (front_layer(spec, dir, x, y) != center_layer) continue;  // occluded in this view
                    REQUIRE(view(s, dir).at(x, y) == s.views.center().at(u, v));
                    ++checked;
                }
            }
        }
        CHECK(checked > spec.width * spec.height * 3);
    }
}

TEST_CASE("layered scenes contain one-sided occlusions") {
    SceneRanges r;
    int found = 0;
    for (int i = 0; i < 5; ++i) {
        const auto seed = scene_seed(5, i);
        const SceneSpec spec = random_scene_spec(r, seed);
        bool one_sided = false;
        for (int v = 0; v < spec.height && !one_sided; ++v) {
            for (int u = 0; u < spec.width && !one_sided; ++u) {
                int center_layer = -1;
                for (int j = static_cast<int>(spec.layers.size()) - 1; j >= 0 && center_layer < 0; --j)
                    if (spec.layers[j].full || spec.layers[j].region.contains(u, v)) center_layer = j;
                const int d = spec.layers[center_layer].disparity;
                const bool in_right = u - d >= 0 && front_layer(spec, Direction::Right, u - d, v) == center_layer;
                const bool in_left = u + d < spec.width && front_layer(spec, Direction::Left, u + d, v) == center_layer;
                one_sided = !in_right && in_left;
            }
        }
        found += one_sided;
    }
    CHECK(found == 5);
}

TEST_CASE("random specs are valid and multi-layer") {
    SceneRanges r;
    for (int i = 0; i < 50; ++i) {
        const auto spec = random_scene_spec(r, scene_seed(1, i));
        CHECK_NOTHROW(spec.validate());
        CHECK(spec.layers.size() >= 3);
        CHECK(spec.d_max <= 16);
    }
}

TEST_CASE("datasets are deterministic and round-trip through files") {
    testing::TempDir a("ds_a");
    testing::TempDir b("ds_b");
    SceneRanges r;
    r.width = 24;
    r.height = 24;
    r.d_max = 6;
    const auto manifest = generate_dataset(r, 2, 1234, a.path());
    generate_dataset(r, 2, 1234, b.path());
    CHECK(manifest == std::vector<std::string>{"scene_0000", "scene_0001"});

    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a.path()))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a.path()));
    CHECK(files.size() == 1 + 2 * 7);
    for (const auto& f : files) CHECK(read_file(a.path() / f) == read_file(b.path() / f));

    const auto seed = scene_seed(1234, 1);
    const auto scene = generate_scene(random_scene_spec(r, seed), seed);
    CHECK(read_pfm(a / "scene_0001/gt.pfm") == scene.ground_truth);
    const auto loaded = load_scene_dir(a / "scene_0001");
    CHECK(loaded.center() == scene.views.center());
    CHECK(loaded.surround().size() == 4);
    CHECK(loaded.baseline() == 20.0);

    const auto meta = read_file(a / "scene_0001/meta.txt");
    const std::string text(meta.begin(), meta.end());
    CHECK(text.find("baseline=20\n") != std::string::npos);
    CHECK(text.find("d_max=6\n") != std::string::npos);
    CHECK(text.find("seed=" + std::to_string(seed) + "\n") != std::string::npos);

    CHECK_THROWS_AS(generate_dataset(r, 0, 1, a.path()), InputError);
}

} // TEST_SUITE
