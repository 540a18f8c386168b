// mfuse command-line front end. Talks to the library only through mfuse.h.

#include "mfuse/mfuse.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;

namespace {

template <typename T, void (*Free)(T*)>
struct Release {
    void operator()(T* p) const { Free(p); }
};
using ScenePtr = std::unique_ptr<mf_scene, Release<mf_scene, mf_scene_free>>;
using VolumePtr = std::unique_ptr<mf_volume, Release<mf_volume, mf_volume_free>>;
using DispPtr = std::unique_ptr<mf_disparity, Release<mf_disparity, mf_disparity_free>>;
using NetPtr = std::unique_ptr<mf_network, Release<mf_network, mf_network_free>>;
using TrainSetPtr = std::unique_ptr<mf_trainset, Release<mf_trainset, mf_trainset_free>>;

struct Failure {
    int code;
    std::string message;
};

[[noreturn]] void fail_input(std::string message) { throw Failure{1, std::move(message)}; }

void check(mf_status s) {
    if (s == MF_OK) return;
    const int code = (s == MF_ERR_INTERNAL || s == MF_ERR_NUMERIC) ? 2 : 1;
    throw Failure{code, std::string(mf_status_name(s)) + ": " + mf_last_error()};
}

// Ordered key=value record written as run.txt next to the outputs.
class Manifest {
public:
    template <typename V>
    void add(const std::string& key, const V& value) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        entries_.emplace_back(key, os.str());
    }

    void write(const fs::path& dir) const {
        std::ofstream f(dir / "run.txt", std::ios::binary);
        for (const auto& [k, v] : entries_) f << k << '=' << v << '\n';
        if (!f) fail_input("cannot write " + (dir / "run.txt").string());
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_input("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Option groups -------------------------------------------------------------

struct SceneArgs {
    std::string dir;
    std::vector<std::string> triplet;
    std::vector<std::string> views;
};

void add_scene_options(CLI::App* app, SceneArgs& a) {
    app->add_option("--in", a.dir, "Scene directory (center.pgm + left/right/top/bottom.pgm)");
    app->add_option("--triplet", a.triplet, "Rectified LEFT CENTER RIGHT images")->expected(3);
    app->add_option("--views", a.views, "Subset of surrounding views to use, e.g. left,right")
        ->delimiter(',')
        ->check(CLI::IsMember({"left", "right", "top", "bottom"}));
}

mf_direction direction_of(const std::string& s) {
    if (s == "left") return MF_LEFT;
    if (s == "right") return MF_RIGHT;
    if (s == "top") return MF_TOP;
    return MF_BOTTOM;
}

const char* direction_name(mf_direction d) {
    switch (d) {
    case MF_LEFT: return "left";
    case MF_RIGHT: return "right";
    case MF_TOP: return "top";
    case MF_BOTTOM: return "bottom";
    }
    return "?";
}

ScenePtr load_scene(const SceneArgs& a, Manifest& m) {
    if (a.dir.empty() == a.triplet.empty()) fail_input("give exactly one of --in or --triplet");
    mf_scene* raw = nullptr;
    if (!a.dir.empty()) {
        check(mf_scene_load_dir(a.dir.c_str(), &raw));
        m.add("input", a.dir);
    } else {
        check(mf_scene_from_triplet(a.triplet[0].c_str(), a.triplet[1].c_str(), a.triplet[2].c_str(), &raw));
        m.add("input", a.triplet[0] + " " + a.triplet[1] + " " + a.triplet[2]);
    }
    ScenePtr scene(raw);
    if (!a.views.empty()) {
        std::vector<mf_direction> dirs;
        for (const auto& v : a.views) dirs.push_back(direction_of(v));
        check(mf_scene_select(scene.get(), dirs.data(), dirs.size(), &raw));
        scene.reset(raw);
    }
    std::string names;
    for (size_t i = 0; i < mf_scene_view_count(scene.get()); ++i) {
        if (i) names += ',';
        names += direction_name(mf_scene_view_direction(scene.get(), i));
    }
    m.add("views", names);
    return scene;
}

struct BlockArgs {
    std::string matcher = "sad";
    mf_block_params params{};
};

void add_block_options(CLI::App* app, BlockArgs& a) {
    mf_block_params_default(&a.params);
    app->add_option("--matcher", a.matcher, "Matching cost")->check(CLI::IsMember({"sad", "bt"}))->capture_default_str();
    app->add_option("--rho", a.params.rho, "Block half-size")->capture_default_str();
    app->add_option("--d-min", a.params.d_min, "Smallest disparity")->capture_default_str();
    app->add_option("--d-max", a.params.d_max, "Largest disparity")->capture_default_str();
}

mf_matcher matcher_of(const BlockArgs& a) { return a.matcher == "bt" ? MF_MATCHER_BT : MF_MATCHER_SAD; }

void record_block(const BlockArgs& a, Manifest& m) {
    m.add("matcher", a.matcher);
    m.add("rho", a.params.rho);
    m.add("d_min", a.params.d_min);
    m.add("d_max", a.params.d_max);
}

struct GcArgs {
    mf_gc_params params{};
};

void add_gc_options(CLI::App* app, GcArgs& a) {
    mf_gc_params_default(&a.params);
    app->add_option("--k", a.params.k_occlusion, "Occlusion penalty K")->capture_default_str();
    app->add_option("--lambda1", a.params.lambda1, "Smoothness weight for similar intensities")->capture_default_str();
    app->add_option("--lambda2", a.params.lambda2, "Smoothness weight across intensity edges")->capture_default_str();
    app->add_option("--theta", a.params.theta, "Intensity-difference threshold")->capture_default_str();
    app->add_option("--d-cutoff", a.params.d_cutoff, "Truncation of the disparity difference")->capture_default_str();
    app->add_option("--upscale", a.params.upscale, "Image upscaling factor")->capture_default_str();
    app->add_option("--sweeps", a.params.max_sweeps, "Maximum expansion sweeps")->capture_default_str();
    app->add_flag("--multiview-smoothness", a.params.multiview_smoothness,
                  "Take smoothness weights from every view instead of the center only");
}

void record_gc(const GcArgs& a, Manifest& m) {
    m.add("k", a.params.k_occlusion);
    m.add("lambda1", a.params.lambda1);
    m.add("lambda2", a.params.lambda2);
    m.add("theta", a.params.theta);
    m.add("d_cutoff", a.params.d_cutoff);
    m.add("upscale", a.params.upscale);
    m.add("sweeps", a.params.max_sweeps);
    m.add("multiview_smoothness", a.params.multiview_smoothness);
}

std::vector<VolumePtr> scene_volumes(const mf_scene* scene, const BlockArgs& b) {
    std::vector<VolumePtr> vols;
    for (size_t i = 0; i < mf_scene_view_count(scene); ++i) {
        mf_volume* v = nullptr;
        check(mf_volume_compute(scene, i, matcher_of(b), &b.params, &v));
        vols.emplace_back(v);
    }
    return vols;
}

std::vector<const mf_volume*> raw(const std::vector<VolumePtr>& vols) {
    std::vector<const mf_volume*> r;
    for (const auto& v : vols) r.push_back(v.get());
    return r;
}

// Writes disp.pfm, disp_jet.ppm and, when ground truth is available,
// metrics.tsv into out.
void write_disparity_outputs(const mf_disparity* disp, double d_max, const fs::path& out, const std::string& gt_path,
                             const std::string& name) {
    check(mf_disparity_write_pfm(disp, (out / "disp.pfm").string().c_str()));
    check(mf_disparity_write_jet(disp, d_max, (out / "disp_jet.ppm").string().c_str()));
    if (gt_path.empty() || !fs::exists(gt_path)) return;
    mf_disparity* gt = nullptr;
    check(mf_disparity_read(gt_path.c_str(), &gt));
    DispPtr gt_ptr(gt);
    const char* names[] = {name.c_str()};
    const mf_disparity* preds[] = {disp};
    const mf_disparity* gts[] = {gt};
    char* table = nullptr;
    check(mf_evaluate_dataset(names, preds, gts, 1, 0, nullptr, &table));
    std::ofstream f(out / "metrics.tsv", std::ios::binary);
    f << table;
    std::cout << table;
    mf_string_free(table);
}

std::string scene_gt(const SceneArgs& a) { return a.dir.empty() ? std::string() : (fs::path(a.dir) / "gt.pfm").string(); }

std::string scene_name(const SceneArgs& a) {
    if (a.dir.empty()) return "triplet";
    fs::path p(a.dir);
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

// Subcommands -----------------------------------------------------------------

struct SynthCmd {
    int scenes = 4;
    std::uint64_t seed = 0;
    std::string out;
    mf_synth_options opts{};
};

void run_synth(const SynthCmd& c) {
    Manifest m;
    m.add("command", "synth");
    m.add("scenes", c.scenes);
    m.add("seed", c.seed);
    m.add("width", c.opts.width);
    m.add("height", c.opts.height);
    m.add("d_max", c.opts.d_max);
    m.add("background_d_min", c.opts.background_d_min);
    m.add("background_d_max", c.opts.background_d_max);
    m.add("min_foreground", c.opts.min_foreground);
    m.add("max_foreground", c.opts.max_foreground);
    m.add("flat_probability", c.opts.flat_patch_probability);
    m.add("noise", c.opts.noise_sigma);
    m.add("baseline", c.opts.baseline_mm);
    check(mf_synth_dataset(&c.opts, c.scenes, c.seed, c.out.c_str()));
    m.write(c.out);
}

struct CostCmd {
    SceneArgs scene;
    BlockArgs block;
    std::string out;
};

void run_cost(const CostCmd& c) {
    Manifest m;
    m.add("command", "cost");
    auto scene = load_scene(c.scene, m);
    record_block(c.block, m);
    ensure_dir(c.out);
    const auto vols = scene_volumes(scene.get(), c.block);
    for (size_t i = 0; i < vols.size(); ++i) {
        const fs::path p = fs::path(c.out) / (std::string(direction_name(mf_scene_view_direction(scene.get(), i))) + ".mcv");
        check(mf_volume_write(vols[i].get(), p.string().c_str()));
    }
    m.write(c.out);
}

struct FusionArgs {
    std::string fusion = "heuristic";
    double factor = 3.0;
    std::string weights;
};

void add_fusion_options(CLI::App* app, FusionArgs& a, bool allow_net) {
    std::vector<std::string> allowed = {"mean", "min", "heuristic"};
    if (allow_net) allowed.push_back("net");
    app->add_option("--fusion", a.fusion, "Cost-volume fusion")->check(CLI::IsMember(allowed))->capture_default_str();
    app->add_option("--factor", a.factor, "Outlier factor of the heuristic rule")->capture_default_str();
    if (allow_net) app->add_option("--weights", a.weights, "Trained network (required for --fusion net)");
}

mf_fusion fusion_of(const std::string& s) {
    if (s == "mean") return MF_FUSION_MEAN;
    if (s == "min") return MF_FUSION_MIN;
    return MF_FUSION_HEURISTIC;
}

VolumePtr fuse_volumes(const std::vector<VolumePtr>& vols, const FusionArgs& f) {
    mf_volume* out = nullptr;
    const auto r = raw(vols);
    check(mf_volume_fuse(r.data(), r.size(), fusion_of(f.fusion), f.factor, &out));
    return VolumePtr(out);
}

std::vector<VolumePtr> read_volumes(const std::vector<std::string>& paths) {
    std::vector<VolumePtr> vols;
    for (const auto& p : paths) {
        mf_volume* v = nullptr;
        check(mf_volume_read(p.c_str(), &v));
        vols.emplace_back(v);
    }
    return vols;
}

struct FuseCmd {
    std::vector<std::string> volumes;
    FusionArgs fusion;
    std::string out;
};

void run_fuse(const FuseCmd& c) {
    const auto vols = read_volumes(c.volumes);
    const auto fused = fuse_volumes(vols, c.fusion);
    check(mf_volume_write(fused.get(), c.out.c_str()));
}

struct DisparityCmd {
    SceneArgs scene;
    std::vector<std::string> volumes;
    BlockArgs block;
    FusionArgs fusion;
    bool subpixel = false;
    std::string out = ".";
};

DispPtr infer_disparity(const std::vector<VolumePtr>& vols, const std::string& weights) {
    mf_network* net = nullptr;
    check(mf_network_load(weights.c_str(), &net));
    NetPtr net_ptr(net);
    const auto r = raw(vols);
    mf_disparity* d = nullptr;
    check(mf_network_infer(net, r.data(), r.size(), &d));
    return DispPtr(d);
}

void run_disparity(const DisparityCmd& c) {
    if (c.fusion.fusion == "net" && c.fusion.weights.empty()) fail_input("--fusion net requires --weights");
    Manifest m;
    m.add("command", "disparity");
    std::vector<VolumePtr> vols;
    double d_max = c.block.params.d_max;
    if (!c.volumes.empty()) {
        if (!c.scene.dir.empty() || !c.scene.triplet.empty()) fail_input("give either a scene or --volumes, not both");
        vols = read_volumes(c.volumes);
        int dmin = 0, dmax = 0;
        mf_volume_shape(vols[0].get(), &dmin, &dmax, nullptr, nullptr);
        d_max = dmax;
        std::string list;
        for (const auto& v : c.volumes) list += (list.empty() ? "" : " ") + v;
        m.add("volumes", list);
    } else {
        auto scene = load_scene(c.scene, m);
        record_block(c.block, m);
        vols = scene_volumes(scene.get(), c.block);
    }
    m.add("solver", "wta");
    m.add("fusion", c.fusion.fusion);
    m.add("factor", c.fusion.factor);
    m.add("subpixel", c.subpixel);
    if (!c.fusion.weights.empty()) m.add("weights", c.fusion.weights);

    DispPtr disp;
    if (c.fusion.fusion == "net") {
        disp = infer_disparity(vols, c.fusion.weights);
    } else {
        const auto fused = fuse_volumes(vols, c.fusion);
        mf_disparity* d = nullptr;
        check(mf_volume_wta(fused.get(), c.subpixel ? 1 : 0, &d));
        disp.reset(d);
    }
    ensure_dir(c.out);
    write_disparity_outputs(disp.get(), d_max, c.out, scene_gt(c.scene), scene_name(c.scene));
    m.write(c.out);
}

struct GcCmd {
    SceneArgs scene;
    BlockArgs block{"bt", {}};
    GcArgs gc;
    std::uint64_t seed = 0;
    std::string out = ".";
};

void run_gc(GcCmd c) {
    Manifest m;
    m.add("command", "gc");
    auto scene = load_scene(c.scene, m);
    record_block(c.block, m);
    m.add("solver", "gc");
    m.add("fusion", "heuristic");
    record_gc(c.gc, m);
    m.add("seed", c.seed);
    c.gc.params.seed = c.seed;
    mf_disparity* d = nullptr;
    double energy = 0.0;
    check(mf_graph_cuts(scene.get(), &c.gc.params, matcher_of(c.block), &c.block.params, &d, &energy));
    DispPtr disp(d);
    m.add("final_energy", energy);
    ensure_dir(c.out);
    write_disparity_outputs(disp.get(), c.block.params.d_max, c.out, scene_gt(c.scene), scene_name(c.scene));
    m.write(c.out);
}

std::vector<std::string> dataset_scenes(const fs::path& root) {
    std::vector<std::string> names;
    std::ifstream manifest(root / "manifest.txt");
    if (manifest) {
        for (std::string line; std::getline(manifest, line);)
            if (!line.empty()) names.push_back(line);
    } else {
        std::error_code ec;
        for (const auto& e : fs::directory_iterator(root, ec))
            if (e.is_directory() && fs::exists(e.path() / "gt.pfm")) names.push_back(e.path().filename().string());
        if (ec) fail_input("cannot list '" + root.string() + "': " + ec.message());
        std::sort(names.begin(), names.end());
    }
    if (names.empty()) fail_input("no scenes found in '" + root.string() + "'");
    return names;
}

struct TrainCmd {
    std::string data;
    std::vector<std::string> views;
    BlockArgs block;
    mf_train_params train{};
    std::string out;
    std::string log;
};

void run_train(const TrainCmd& c) {
    Manifest m;
    m.add("command", "train");
    m.add("data", c.data);
    record_block(c.block, m);
    m.add("lr", c.train.learning_rate);
    m.add("epochs", c.train.epochs);
    m.add("seed", c.train.seed);
    m.add("crop", c.train.crop);
    m.add("final_lr_fraction", c.train.final_lr_fraction);
    m.add("standardize", c.train.standardize);

    mf_trainset* set_raw = nullptr;
    check(mf_trainset_create(&set_raw));
    TrainSetPtr set(set_raw);
    for (const auto& name : dataset_scenes(c.data)) {
        SceneArgs a;
        a.dir = (fs::path(c.data) / name).string();
        a.views = c.views;
        Manifest ignored;
        auto scene = load_scene(a, ignored);
        const auto vols = scene_volumes(scene.get(), c.block);
        mf_disparity* gt = nullptr;
        check(mf_disparity_read(scene_gt(a).c_str(), &gt));
        DispPtr gt_ptr(gt);
        const auto r = raw(vols);
        check(mf_trainset_add(set.get(), r.data(), r.size(), gt));
    }
    m.add("samples", mf_trainset_size(set.get()));

    std::ostringstream log;
    log << "epoch,mean_loss\n";
    auto cb = [](int epoch, double loss, void* user) {
        char line[64];
        std::snprintf(line, sizeof line, "%d,%.9g\n", epoch, loss);
        *static_cast<std::ostringstream*>(user) << line;
        std::cerr << line;
    };
    mf_network* net = nullptr;
    check(mf_train(set.get(), &c.train, cb, &log, &net));
    NetPtr net_ptr(net);
    const fs::path out(c.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    check(mf_network_save(net, c.out.c_str()));
    const fs::path log_path = c.log.empty() ? fs::path(c.out + ".loss.csv") : fs::path(c.log);
    std::ofstream(log_path, std::ios::binary) << log.str();
    m.add("params", mf_network_param_count(net));
    m.add("weights", c.out);
    const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
    m.write(dir);
}

struct InferCmd {
    SceneArgs scene;
    BlockArgs block;
    std::string weights;
    std::string out = ".";
};

void run_infer(const InferCmd& c) {
    Manifest m;
    m.add("command", "infer");
    auto scene = load_scene(c.scene, m);
    record_block(c.block, m);
    m.add("fusion", "net");
    m.add("weights", c.weights);
    const auto vols = scene_volumes(scene.get(), c.block);
    const auto disp = infer_disparity(vols, c.weights);
    ensure_dir(c.out);
    write_disparity_outputs(disp.get(), c.block.params.d_max, c.out, scene_gt(c.scene), scene_name(c.scene));
    m.write(c.out);
}

struct EvalCmd {
    std::string pred;
    std::string gt;
    std::string out;
    bool mask_invalid = false;
};

DispPtr read_disp(const fs::path& p) {
    mf_disparity* d = nullptr;
    check(mf_disparity_read(p.string().c_str(), &d));
    return DispPtr(d);
}

void run_eval(const EvalCmd& c) {
    std::vector<std::string> names;
    std::vector<DispPtr> preds, gts;
    if (fs::is_directory(c.gt)) {
        if (!fs::is_directory(c.pred)) fail_input("--gt is a directory, so --pred must be one too");
        for (const auto& name : dataset_scenes(c.gt)) {
            fs::path p = fs::path(c.pred) / name / "disp.pfm";
            if (!fs::exists(p)) p = fs::path(c.pred) / (name + ".pfm");
            if (!fs::exists(p)) fail_input("no prediction for scene " + name + " under " + c.pred);
            names.push_back(name);
            preds.push_back(read_disp(p));
            gts.push_back(read_disp(fs::path(c.gt) / name / "gt.pfm"));
        }
    } else {
        names.push_back(fs::path(c.pred).stem().string());
        preds.push_back(read_disp(c.pred));
        gts.push_back(read_disp(c.gt));
    }
    std::vector<const char*> n;
    std::vector<const mf_disparity*> p, g;
    for (size_t i = 0; i < names.size(); ++i) {
        n.push_back(names[i].c_str());
        p.push_back(preds[i].get());
        g.push_back(gts[i].get());
    }
    char* table = nullptr;
    check(mf_evaluate_dataset(n.data(), p.data(), g.data(), n.size(), c.mask_invalid ? 1 : 0, nullptr, &table));
    const std::string text = table;
    mf_string_free(table);
    std::cout << text;
    if (!c.out.empty()) {
        std::ofstream f(c.out, std::ios::binary);
        f << text;
        if (!f) fail_input("cannot write " + c.out);
    }
}

struct ColorizeCmd {
    std::string in;
    double d_max = 0.0;
    std::string out;
};

void run_colorize(const ColorizeCmd& c) {
    const auto disp = read_disp(c.in);
    double d_max = c.d_max;
    if (d_max <= 0.0) {
        int w = 0, h = 0;
        mf_disparity_size(disp.get(), &w, &h);
        const float* v = mf_disparity_data(disp.get());
        for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i)
            if (std::isfinite(v[i])) d_max = std::max(d_max, static_cast<double>(v[i]));
        if (d_max <= 0.0) d_max = 1.0;
    }
    check(mf_disparity_write_jet(disp.get(), d_max, c.out.c_str()));
}

std::string config_path;

void add_config(CLI::App* app) {
    app->add_option("--config", config_path, "key=value file mirroring the long flag names; flags override it");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Expands `--config FILE` into the flags it names. Keys already given on the
// command line are skipped so that flags win over the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    auto it = std::find_if(args.begin(), args.end(),
                           [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
    if (it == args.end()) return args;
    std::string path;
    if (*it == "--config") {
        if (it + 1 == args.end()) return args;
        path = *(it + 1);
        it = args.erase(it, it + 2);
    } else {
        path = it->substr(9);
        it = args.erase(it);
    }
    std::ifstream f(path);
    if (!f) fail_input("cannot read config file '" + path + "'");
    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> injected;
    int lineno = 0;
    for (std::string line; std::getline(f, line);) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail_input(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string flag = "--" + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (given(flag)) continue;
        if (value == "true" || value == "false") {
            if (value == "true") injected.push_back(flag);
            continue;
        }
        injected.push_back(flag);
        std::istringstream words(value);
        for (std::string w; words >> w;) injected.push_back(w);
    }
    args.insert(it, injected.begin(), injected.end());
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiscopic disparity estimation: cost volumes, fusion, WTA, graph cuts, learned fusion", "mfuse"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mf_version()));

    SynthCmd synth;
    mf_synth_options_default(&synth.opts);
    auto* s = app.add_subcommand("synth", "Generate a synthetic multiscopic dataset");
    add_config(s);
    s->add_option("--scenes", synth.scenes, "Number of scenes")->capture_default_str();
    s->add_option("--seed", synth.seed, "Dataset seed")->capture_default_str();
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--width", synth.opts.width)->capture_default_str();
    s->add_option("--height", synth.opts.height)->capture_default_str();
    s->add_option("--d-max", synth.opts.d_max, "Upper bound on layer disparity")->capture_default_str();
    s->add_option("--bg-d-min", synth.opts.background_d_min)->capture_default_str();
    s->add_option("--bg-d-max", synth.opts.background_d_max)->capture_default_str();
    s->add_option("--min-fg", synth.opts.min_foreground, "Minimum foreground layers")->capture_default_str();
    s->add_option("--max-fg", synth.opts.max_foreground, "Maximum foreground layers")->capture_default_str();
    s->add_option("--flat-prob", synth.opts.flat_patch_probability, "Chance of a textureless patch per layer")
        ->capture_default_str();
    s->add_option("--noise", synth.opts.noise_sigma, "Gaussian noise sigma")->capture_default_str();
    s->add_option("--baseline", synth.opts.baseline_mm, "Baseline recorded in meta.txt")->capture_default_str();

    CostCmd cost;
    auto* c = app.add_subcommand("cost", "Compute one cost volume per surrounding view (MCV1 files)");
    add_config(c);
    add_scene_options(c, cost.scene);
    add_block_options(c, cost.block);
    c->add_option("--out", cost.out, "Output directory")->required();

    FuseCmd fuse;
    auto* f = app.add_subcommand("fuse", "Fuse cost volumes into one");
    add_config(f);
    f->add_option("--volumes", fuse.volumes, "Input MCV1 volumes")->required();
    add_fusion_options(f, fuse.fusion, false);
    f->add_option("--out", fuse.out, "Output volume")->required();

    DisparityCmd disparity;
    auto* d = app.add_subcommand("disparity", "Cost volumes, fusion and winner-take-all");
    add_config(d);
    add_scene_options(d, disparity.scene);
    d->add_option("--volumes", disparity.volumes, "Precomputed MCV1 volumes instead of a scene");
    add_block_options(d, disparity.block);
    add_fusion_options(d, disparity.fusion, true);
    d->add_flag("--subpixel", disparity.subpixel, "Parabola subpixel refinement");
    d->add_option("--out", disparity.out, "Output directory")->capture_default_str();

    GcCmd gc;
    auto* g = app.add_subcommand("gc", "Graph-cuts disparity with a heuristic-fused data term");
    add_config(g);
    add_scene_options(g, gc.scene);
    add_block_options(g, gc.block);
    add_gc_options(g, gc.gc);
    g->add_option("--seed", gc.seed, "Expansion-order seed")->capture_default_str();
    g->add_option("--out", gc.out, "Output directory")->capture_default_str();

    TrainCmd train;
    mf_train_params_default(&train.train);
    auto* t = app.add_subcommand("train", "Train the learned fusion network on a synthetic dataset");
    add_config(t);
    t->add_option("--data", train.data, "Dataset directory")->required();
    t->add_option("--views", train.views, "Subset of surrounding views")
        ->delimiter(',')
        ->check(CLI::IsMember({"left", "right", "top", "bottom"}));
    add_block_options(t, train.block);
    t->add_option("--lr", train.train.learning_rate, "Adam learning rate")->capture_default_str();
    t->add_option("--epochs", train.train.epochs)->capture_default_str();
    t->add_option("--seed", train.train.seed, "Initialization and shuffling seed")->capture_default_str();
    t->add_option("--crop", train.train.crop, "Random crop side per step, 0 for full scenes")->capture_default_str();
    t->add_option("--final-lr-fraction", train.train.final_lr_fraction, "Learning rate at the last step relative to --lr")
        ->capture_default_str();
    t->add_option("--standardize", train.train.standardize, "Standardize input volumes (0/1)")->capture_default_str();
    t->add_option("--out", train.out, "Output weights file")->required();
    t->add_option("--log", train.log, "Loss log CSV (default: <out>.loss.csv)");

    InferCmd infer;
    auto* i = app.add_subcommand("infer", "Cost volumes and learned fusion");
    add_config(i);
    add_scene_options(i, infer.scene);
    add_block_options(i, infer.block);
    i->add_option("--weights", infer.weights, "Trained network")->required();
    i->add_option("--out", infer.out, "Output directory")->capture_default_str();

    EvalCmd eval;
    auto* e = app.add_subcommand("eval", "Metrics table for predictions against ground truth");
    add_config(e);
    e->add_option("--pred", eval.pred, "Prediction PFM or directory")->required();
    e->add_option("--gt", eval.gt, "Ground-truth PFM or dataset directory")->required();
    e->add_option("--out", eval.out, "Also write the table here (metrics.tsv)");
    e->add_flag("--mask-invalid", eval.mask_invalid, "Skip invalid predictions instead of counting them as failures");

    ColorizeCmd colorize;
    auto* z = app.add_subcommand("colorize", "Jet visualization of a disparity map");
    add_config(z);
    z->add_option("--in", colorize.in, "Disparity PFM")->required();
    z->add_option("--d-max", colorize.d_max, "Normalization; default is the largest valid value");
    z->add_option("--out", colorize.out, "Output PPM")->required();

    std::vector<std::string> args;
    try {
        args = expand_config({argv + 1, argv + argc});
    } catch (const Failure& ex) {
        std::cerr << "error: " << ex.message << "\n";
        return ex.code;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        const auto used = app.get_subcommands();
        std::cerr << "error: " << ex.what() << "\n\n" << (used.empty() ? app.help() : used.front()->help());
        return 1;
    }

    try {
        if (s->parsed()) run_synth(synth);
        else if (c->parsed()) run_cost(cost);
        else if (f->parsed()) run_fuse(fuse);
        else if (d->parsed()) run_disparity(disparity);
        else if (g->parsed()) run_gc(gc);
        else if (t->parsed()) run_train(train);
        else if (i->parsed()) run_infer(infer);
        else if (e->parsed()) run_eval(eval);
        else if (z->parsed()) run_colorize(colorize);
    } catch (const Failure& ex) {
        std::cerr << "error: " << ex.message << "\n";
        return ex.code;
    } catch (const std::exception& ex) {
        std::cerr << "internal error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
