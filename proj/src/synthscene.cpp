#include "mfuse/synthscene.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mfuse {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) noexcept {
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ull +
                                                   static_cast<std::uint64_t>(iy)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) noexcept { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double x, double y) noexcept {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const double tx = smooth(x - fx);
    const double ty = smooth(y - fy);
    const double a = lattice(seed, ix, iy);
    const double b = lattice(seed, ix + 1, iy);
    const double c = lattice(seed, ix, iy + 1);
    const double d = lattice(seed, ix + 1, iy + 1);
    return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

// Texture in [0, 255] at center-view coordinate (x, y) of one layer.
double layer_texture(const SceneLayer& layer, const TextureParams& tp, std::uint64_t seed, int x, int y) noexcept {
    for (const Rect& r : layer.flat_patches)
        if (r.contains(x, y)) return std::clamp(layer.mean_intensity, 0.0, 255.0);
    double sum = 0.0;
    double norm = 0.0;
    double amp = 1.0;
    double period = tp.base_period;
    for (int k = 0; k < tp.octaves; ++k) {
        sum += amp * value_noise(seed + static_cast<std::uint64_t>(k) * 0x1000193ull, x / period, y / period);
        norm += amp;
        amp *= tp.persistence;
        period = std::max(1.0, period / 2.0);
    }
    const double n = norm > 0 ? sum / norm : 0.5;
    return std::clamp(layer.mean_intensity + tp.contrast * (2.0 * n - 1.0), 0.0, 255.0);
}

bool layer_covers(const SceneLayer& layer, int x, int y) noexcept { return layer.full || layer.region.contains(x, y); }

} // namespace

void SceneSpec::validate() const {
    if (width <= 0 || height <= 0) throw SpecError("scene dimensions must be positive");
    if (layers.empty()) throw SpecError("scene needs at least one layer");
    if (!(noise_sigma >= 0.0)) throw SpecError("noise sigma must be >= 0");
    if (d_max < 0) throw SpecError("d_max must be >= 0");
    if (texture.octaves < 0 || !(texture.base_period > 0.0)) throw SpecError("invalid texture parameters");
    const int limit = std::min(width, height) / 4;
    for (const auto& l : layers) {
        if (l.disparity < 0 || l.disparity > d_max)
            throw SpecError("layer disparity " + std::to_string(l.disparity) + " outside [0, d_max]");
        if (l.disparity > limit)
            throw SpecError("layer disparity " + std::to_string(l.disparity) + " exceeds a quarter of the image size");
        if (!l.full && (l.region.width <= 0 || l.region.height <= 0)) throw SpecError("empty layer region");
    }
}

SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int w = spec.width;
    const int h = spec.height;
    const int nl = static_cast<int>(spec.layers.size());

    std::vector<std::uint64_t> layer_seeds(nl);
    for (int k = 0; k < nl; ++k) layer_seeds[k] = splitmix64(seed ^ splitmix64(0xa5a5ull + static_cast<std::uint64_t>(k)));

    // dx, dy: where a center point at disparity d appears, per unit d.
    auto render = [&](int dx, int dy) {
        Image img(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double value = 0.0;
                for (int k = nl - 1; k >= 0; --k) {
                    const SceneLayer& layer = spec.layers[k];
                    const int cx = x - dx * layer.disparity;
                    const int cy = y - dy * layer.disparity;
                    if (layer_covers(layer, cx, cy)) {
                        value = layer_texture(layer, spec.texture, layer_seeds[k], cx, cy);
                        break;
                    }
                }
                img.at(x, y) = static_cast<float>(value);
            }
        }
        return img;
    };

    std::mt19937_64 rng(splitmix64(seed ^ 0x6e6f697365ull));
    auto finish = [&](Image img) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
        for (float& v : img.data()) {
            double x = v;
            if (spec.noise_sigma > 0) x += noise(rng);
            v = static_cast<float>(std::clamp(std::round(x), 0.0, 255.0));
        }
        return img;
    };

    Image center = finish(render(0, 0));
    std::vector<SurroundView> views;
    for (Direction d : {Direction::Left, Direction::Right, Direction::Top, Direction::Bottom})
        views.push_back({d, finish(render(direction_dx(d), direction_dy(d)))});

    DisparityMap gt(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = nl - 1; k >= 0; --k) {
                if (layer_covers(spec.layers[k], x, y)) {
                    gt.at(x, y) = static_cast<float>(spec.layers[k].disparity);
                    break;
                }
            }
        }
    }
    return {MultiscopicSet(std::move(center), std::move(views), spec.baseline_mm), std::move(gt)};
}

std::uint64_t scene_seed(std::uint64_t seed, int index) noexcept {
    return splitmix64(seed + 0x51ed2701ull * static_cast<std::uint64_t>(index + 1));
}

SceneSpec random_scene_spec(const SceneRanges& r, std::uint64_t seed) {
    if (r.width <= 0 || r.height <= 0) throw SpecError("scene dimensions must be positive");
    if (r.background_d_min < 0 || r.background_d_max < r.background_d_min || r.background_d_max > r.d_max)
        throw SpecError("invalid background disparity range");
    if (r.min_foreground < 0 || r.max_foreground < r.min_foreground) throw SpecError("invalid foreground count range");

    std::mt19937_64 rng(seed);
    auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

    SceneSpec s;
    s.width = r.width;
    s.height = r.height;
    s.d_max = std::min(r.d_max, std::min(r.width, r.height) / 4);
    s.noise_sigma = r.noise_sigma;
    s.baseline_mm = r.baseline_mm;
    s.texture = r.texture;

    auto random_rect = [&](int min_side, int max_side) {
        Rect rc;
        rc.width = uniform(min_side, max_side);
        rc.height = uniform(min_side, max_side);
        rc.x = uniform(0, std::max(0, r.width - rc.width));
        rc.y = uniform(0, std::max(0, r.height - rc.height));
        return rc;
    };
    const int small = std::max(1, std::min(r.width, r.height) / 8);
    const int large = std::max(small, std::min(r.width, r.height) / 2);

    SceneLayer bg;
    bg.disparity = std::min(uniform(r.background_d_min, r.background_d_max), s.d_max);
    bg.mean_intensity = uniform(90, 160);
    if (chance(r.flat_patch_probability)) bg.flat_patches.push_back(random_rect(small, large / 2 + small));
    s.layers.push_back(bg);

    const int nfg = uniform(r.min_foreground, r.max_foreground);
    int d = bg.disparity;
    for (int k = 0; k < nfg; ++k) {
        SceneLayer fg;
        fg.full = false;
        // Nearer layers get larger disparities when room is left.
        d = std::min(s.d_max, d + uniform(1, std::max(1, (s.d_max - bg.disparity) / std::max(1, nfg))));
        fg.disparity = d;
        fg.region = random_rect(small + 2, large);
        fg.mean_intensity = uniform(60, 200);
        if (chance(r.flat_patch_probability)) {
            Rect p = fg.region;
            p.width = std::max(1, p.width / 3);
            p.height = std::max(1, p.height / 3);
            p.x += uniform(0, fg.region.width - p.width);
            p.y += uniform(0, fg.region.height - p.height);
            fg.flat_patches.push_back(p);
        }
        s.layers.push_back(fg);
    }
    return s;
}

std::vector<std::string> generate_dataset(const SceneRanges& ranges, int count, std::uint64_t seed,
                                          const std::filesystem::path& outdir) {
    if (count < 1) throw InputError("dataset needs at least one scene");
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw IoError("cannot create '" + outdir.string() + "': " + ec.message());

    std::vector<std::string> manifest;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d", i);
        const std::uint64_t s = scene_seed(seed, i);
        const SceneSpec spec = random_scene_spec(ranges, s);
        const SyntheticScene scene = generate_scene(spec, s);

        const auto dir = outdir / name;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
        write_pgm(dir / "center.pgm", scene.views.center());
        for (const auto& v : scene.views.surround())
            write_pgm(dir / (std::string(direction_name(v.direction)) + ".pgm"), v.image);
        write_pfm(dir / "gt.pfm", scene.ground_truth);

        std::ostringstream meta;
        meta << "baseline=" << spec.baseline_mm << "\n"
             << "d_max=" << spec.d_max << "\n"
             << "seed=" << s << "\n"
             << "width=" << spec.width << "\n"
             << "height=" << spec.height << "\n"
             << "layers=" << spec.layers.size() << "\n"
             << "noise_sigma=" << spec.noise_sigma << "\n";
        const std::string text = meta.str();
        write_file(dir / "meta.txt", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        manifest.emplace_back(name);
    }
    std::string listing;
    for (const auto& m : manifest) listing += m + "\n";
    write_file(outdir / "manifest.txt",
               std::span(reinterpret_cast<const std::uint8_t*>(listing.data()), listing.size()));
    return manifest;
}

MultiscopicSet load_scene_dir(const std::filesystem::path& dir) {
    Image center = read_gray(dir / "center.pgm");
    std::vector<SurroundView> views;
    for (Direction d : {Direction::Left, Direction::Right, Direction::Top, Direction::Bottom}) {
        const auto path = dir / (std::string(direction_name(d)) + ".pgm");
        if (std::filesystem::exists(path)) views.push_back({d, read_gray(path)});
    }
    double baseline = 0.0;
    std::ifstream meta(dir / "meta.txt");
    for (std::string line; std::getline(meta, line);) {
        if (line.rfind("baseline=", 0) == 0) baseline = std::atof(line.c_str() + 9);
    }
    return MultiscopicSet(std::move(center), std::move(views), baseline);
}

} // namespace mfuse
