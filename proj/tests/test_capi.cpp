// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfuse/mfuse.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Dir {
    fs::path path;
    explicit Dir(const char* name) : path(fs::temp_directory_path() / ("mfuse_capi_" + std::string(name))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~Dir() { fs::remove_all(path); }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    T** out() { return &p; }
    operator T*() const { return p; }
};
using Scene = Handle<mf_scene, mf_scene_free>;
using Volume = Handle<mf_volume, mf_volume_free>;
using Disparity = Handle<mf_disparity, mf_disparity_free>;
using Net = Handle<mf_network, mf_network_free>;
using Trainset = Handle<mf_trainset, mf_trainset_free>;

mf_synth_options small_options() {
    mf_synth_options o;
    mf_synth_options_default(&o);
    o.width = 32;
    o.height = 32;
    o.d_max = 6;
    return o;
}

mf_block_params block(int d_max) {
    mf_block_params b;
    mf_block_params_default(&b);
    b.d_max = d_max;
    return b;
}

std::vector<Volume> volumes_of(const mf_scene* scene, mf_matcher m, const mf_block_params& b) {
    std::vector<Volume> out(mf_scene_view_count(scene));
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(mf_volume_compute(scene, i, m, &b, out[i].out()) == MF_OK);
    return out;
}

std::vector<const mf_volume*> raw(const std::vector<Volume>& v) {
    std::vector<const mf_volume*> out;
    for (const auto& h : v) out.push_back(h);
    return out;
}

} // namespace

TEST_CASE("version and status names") {
    CHECK(std::strlen(mf_version()) > 0);
    CHECK(std::string(mf_status_name(MF_OK)) == "ok");
    CHECK(std::string(mf_status_name(MF_ERR_FORMAT)) == "format error");
}

TEST_CASE("errors come back as codes with a message") {
    mf_image* img = nullptr;
    CHECK(mf_image_read("/nonexistent/none.pgm", &img) == MF_ERR_IO);
    CHECK(img == nullptr);
    CHECK(std::strlen(mf_last_error()) > 0);
    CHECK(mf_image_read(nullptr, &img) == MF_ERR_INPUT);

    Dir dir("err");
    {
        FILE* f = std::fopen((dir / "bad.pgm").c_str(), "wb");
        std::fputs("P5\n2 2\n255\n\x01", f);
        std::fclose(f);
    }
    CHECK(mf_image_read((dir / "bad.pgm").c_str(), &img) == MF_ERR_FORMAT);

    const mf_synth_options o = small_options();
    CHECK(mf_synth_dataset(&o, 0, 1, (dir / "bad").c_str()) == MF_ERR_INPUT);

    mf_image_free(nullptr);
    CHECK(mf_evaluate(nullptr, nullptr, nullptr, 0, 0, nullptr) == MF_ERR_INPUT);
    CHECK(mf_last_error()[0] != '\0');
}

TEST_CASE("synthetic pipeline through the C API") {
    Dir dir("pipe");
    const auto opts = small_options();
    REQUIRE(mf_synth_dataset(&opts, 1, 42, (dir / "ds").c_str()) == MF_OK);
    CHECK(mf_last_error()[0] == '\0');

    Scene scene;
    REQUIRE(mf_scene_load_dir((dir / "ds/scene_0000").c_str(), scene.out()) == MF_OK);
    CHECK(mf_scene_view_count(scene) == 4);
    CHECK(mf_scene_view_direction(scene, 0) == MF_LEFT);
    int w = 0, h = 0;
    mf_scene_size(scene, &w, &h);
    CHECK(w == 32);
    CHECK(h == 32);

    const auto vols = volumes_of(scene, MF_MATCHER_SAD, block(6));
    int d0, d1, vw, vh;
    mf_volume_shape(vols[0], &d0, &d1, &vw, &vh);
    CHECK(d0 == 1);
    CHECK(d1 == 6);
    CHECK(vw == 32);

    const auto r = raw(vols);
    Volume fused;
    REQUIRE(mf_volume_fuse(r.data(), r.size(), MF_FUSION_HEURISTIC, 3.0, fused.out()) == MF_OK);
    Disparity disp;
    REQUIRE(mf_volume_wta(fused, 1, disp.out()) == MF_OK);

    Disparity gt;
    REQUIRE(mf_disparity_read((dir / "ds/scene_0000/gt.pfm").c_str(), gt.out()) == MF_OK);
    mf_metrics m;
    REQUIRE(mf_evaluate(disp, gt, nullptr, 0, 0, &m) == MF_OK);
    CHECK(m.threshold_count == 3);
    CHECK(m.pixels == 32 * 32);
    CHECK(std::isfinite(m.avg_err));
    CHECK(m.avg_err < 1.0);

    REQUIRE(mf_evaluate(gt, gt, nullptr, 0, 0, &m) == MF_OK);
    CHECK(m.rms == 0.0);
    CHECK(m.bad[0] == 0.0);

    const double ts[] = {1.0, 4.0};
    REQUIRE(mf_evaluate(disp, gt, ts, 2, 1, &m) == MF_OK);
    CHECK(m.threshold_count == 2);
    CHECK(m.bad[1] <= m.bad[0]);

    REQUIRE(mf_disparity_write_pfm(disp, (dir / "d.pfm").c_str()) == MF_OK);
    Disparity back;
    REQUIRE(mf_disparity_read((dir / "d.pfm").c_str(), back.out()) == MF_OK);
    CHECK(std::memcmp(mf_disparity_data(back), mf_disparity_data(disp), sizeof(float) * 32 * 32) == 0);
    CHECK(mf_disparity_write_jet(disp, 6.0, (dir / "d.ppm").c_str()) == MF_OK);

    REQUIRE(mf_volume_write(fused, (dir / "f.mcv").c_str()) == MF_OK);
    Volume fused_back;
    REQUIRE(mf_volume_read((dir / "f.mcv").c_str(), fused_back.out()) == MF_OK);
    Disparity again;
    REQUIRE(mf_volume_wta(fused_back, 1, again.out()) == MF_OK);
    CHECK(std::memcmp(mf_disparity_data(again), mf_disparity_data(disp), sizeof(float) * 32 * 32) == 0);

    const char* names[] = {"scene_0000"};
    const mf_disparity* preds[] = {disp};
    const mf_disparity* gts[] = {gt};
    char* table = nullptr;
    mf_metrics mean;
    REQUIRE(mf_evaluate_dataset(names, preds, gts, 1, 0, &mean, &table) == MF_OK);
    REQUIRE(table != nullptr);
    CHECK(std::string(table).rfind("scene\tRMS\tAvgErr\tBad0.5\tBad1\tBad2\nscene_0000\t", 0) == 0);
    mf_string_free(table);

    const mf_direction two[] = {MF_RIGHT, MF_TOP};
    Scene sub;
    REQUIRE(mf_scene_select(scene, two, 2, sub.out()) == MF_OK);
    CHECK(mf_scene_view_count(sub) == 2);
    CHECK(mf_scene_view_direction(sub, 1) == MF_TOP);
    Volume none;
    CHECK(mf_volume_compute(sub, 2, MF_MATCHER_SAD, nullptr, none.out()) == MF_ERR_INPUT);
}

TEST_CASE("graph cuts through the C API") {
    Dir dir("gc");
    auto opts = small_options();
    opts.width = opts.height = 24;
    opts.d_max = 4;
    REQUIRE(mf_synth_dataset(&opts, 1, 3, (dir / "ds").c_str()) == MF_OK);
    Scene scene;
    REQUIRE(mf_scene_load_dir((dir / "ds/scene_0000").c_str(), scene.out()) == MF_OK);
    mf_gc_params p;
    mf_gc_params_default(&p);
    CHECK(p.k_occlusion == 10.0);
    CHECK(p.upscale == 2);
    const auto b = block(4);
    Disparity a, c;
    double ea = 0, ec = 0;
    REQUIRE(mf_graph_cuts(scene, &p, MF_MATCHER_BT, &b, a.out(), &ea) == MF_OK);
    REQUIRE(mf_graph_cuts(scene, &p, MF_MATCHER_BT, &b, c.out(), &ec) == MF_OK);
    CHECK(ea == ec);
    CHECK(std::memcmp(mf_disparity_data(a), mf_disparity_data(c), sizeof(float) * 24 * 24) == 0);
    p.upscale = 3;
    Disparity bad;
    CHECK(mf_graph_cuts(scene, &p, MF_MATCHER_BT, &b, bad.out(), nullptr) == MF_ERR_INPUT);
}

TEST_CASE("network create, train, save, load and infer") {
    Dir dir("net");
    auto opts = small_options();
    opts.width = opts.height = 24;
    opts.d_max = 4;
    REQUIRE(mf_synth_dataset(&opts, 2, 8, (dir / "ds").c_str()) == MF_OK);

    Trainset set;
    REQUIRE(mf_trainset_create(set.out()) == MF_OK);
    const auto b = block(4);
    for (const char* s : {"scene_0000", "scene_0001"}) {
        Scene scene;
        REQUIRE(mf_scene_load_dir((dir / ("ds/" + std::string(s))).c_str(), scene.out()) == MF_OK);
        const auto vols = volumes_of(scene, MF_MATCHER_SAD, b);
        Disparity gt;
        REQUIRE(mf_disparity_read((dir / ("ds/" + std::string(s) + "/gt.pfm")).c_str(), gt.out()) == MF_OK);
        const auto r = raw(vols);
        REQUIRE(mf_trainset_add(set, r.data(), r.size(), gt) == MF_OK);
    }
    CHECK(mf_trainset_size(set) == 2);

    mf_train_params tp;
    mf_train_params_default(&tp);
    tp.epochs = 3;
    std::vector<double> log;
    const auto cb = [](int, double loss, void* user) { static_cast<std::vector<double>*>(user)->push_back(loss); };
    Net net;
    REQUIRE(mf_train(set, &tp, cb, &log, net.out()) == MF_OK);
    CHECK(log.size() == 3);
    CHECK(mf_network_param_count(net) == 11173);

    REQUIRE(mf_network_save(net, (dir / "w.mfn").c_str()) == MF_OK);
    Net loaded;
    REQUIRE(mf_network_load((dir / "w.mfn").c_str(), loaded.out()) == MF_OK);

    Scene scene;
    REQUIRE(mf_scene_load_dir((dir / "ds/scene_0000").c_str(), scene.out()) == MF_OK);
    const auto vols = volumes_of(scene, MF_MATCHER_SAD, b);
    const auto r = raw(vols);
    Disparity x, y;
    REQUIRE(mf_network_infer(net, r.data(), r.size(), x.out()) == MF_OK);
    REQUIRE(mf_network_infer(loaded, r.data(), 2, y.out()) == MF_OK);
    Disparity z;
    REQUIRE(mf_network_infer(loaded, r.data(), r.size(), z.out()) == MF_OK);
    CHECK(std::memcmp(mf_disparity_data(x), mf_disparity_data(z), sizeof(float) * 24 * 24) == 0);
    for (int i = 0; i < 24 * 24; ++i) {
        REQUIRE(mf_disparity_data(x)[i] >= 0.0f);
        REQUIRE(mf_disparity_data(x)[i] <= 4.0f);
    }

    Disparity small;
    REQUIRE(mf_disparity_read((dir / "ds/scene_0000/gt.pfm").c_str(), small.out()) == MF_OK);
    Volume other;
    auto b2 = block(3);
    REQUIRE(mf_volume_compute(scene, 0, MF_MATCHER_SAD, &b2, other.out()) == MF_OK);
    const mf_volume* mixed[] = {vols[0], other};
    CHECK(mf_trainset_add(set, mixed, 2, small) == MF_ERR_INPUT);
    CHECK(mf_trainset_size(set) == 2);

    Trainset empty;
    REQUIRE(mf_trainset_create(empty.out()) == MF_OK);
    Net none;
    CHECK(mf_train(empty, &tp, nullptr, nullptr, none.out()) == MF_ERR_INPUT);

    {
        FILE* f = std::fopen((dir / "junk.mfn").c_str(), "wb");
        std::fputs("MFN1junk", f);
        std::fclose(f);
    }
    Net junk;
    CHECK(mf_network_load((dir / "junk.mfn").c_str(), junk.out()) == MF_ERR_FORMAT);
}
