#include "mfuse/mfuse.h"

#include "mfuse/costvol.hpp"
#include "mfuse/errors.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/graphcut.hpp"
#include "mfuse/imagery.hpp"
#include "mfuse/metrics.hpp"
#include "mfuse/mfusenet.hpp"
#include "mfuse/synthscene.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

struct mf_image {
    mfuse::Image image;
};
struct mf_disparity {
    mfuse::DisparityMap map;
};
struct mf_scene {
    mfuse::MultiscopicSet set;
};
struct mf_volume {
    mfuse::CostVolume volume;
};
struct mf_network {
    mfuse::Network net;
};
struct mf_trainset {
    std::vector<mfuse::TrainSample> samples;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
mf_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return MF_OK;
    } catch (const mfuse::InputError& e) {
        g_last_error = e.what();
        return MF_ERR_INPUT;
    } catch (const mfuse::FormatError& e) {
        g_last_error = e.what();
        return MF_ERR_FORMAT;
    } catch (const mfuse::UnsupportedError& e) {
        g_last_error = e.what();
        return MF_ERR_UNSUPPORTED;
    } catch (const mfuse::SpecError& e) {
        g_last_error = e.what();
        return MF_ERR_SPEC;
    } catch (const mfuse::IoError& e) {
        g_last_error = e.what();
        return MF_ERR_IO;
    } catch (const mfuse::NumericError& e) {
        g_last_error = e.what();
        return MF_ERR_NUMERIC;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return MF_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MF_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return MF_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw mfuse::InputError(what);
}

mfuse::Direction to_direction(mf_direction d) {
    switch (d) {
    case MF_LEFT: return mfuse::Direction::Left;
    case MF_RIGHT: return mfuse::Direction::Right;
    case MF_TOP: return mfuse::Direction::Top;
    case MF_BOTTOM: return mfuse::Direction::Bottom;
    }
    throw mfuse::InputError("invalid direction");
}

mf_direction from_direction(mfuse::Direction d) {
    switch (d) {
    case mfuse::Direction::Left: return MF_LEFT;
    case mfuse::Direction::Right: return MF_RIGHT;
    case mfuse::Direction::Top: return MF_TOP;
    case mfuse::Direction::Bottom: return MF_BOTTOM;
    }
    return MF_LEFT;
}

mfuse::Matcher to_matcher(mf_matcher m) {
    if (m == MF_MATCHER_SAD) return mfuse::Matcher::Sad;
    if (m == MF_MATCHER_BT) return mfuse::Matcher::Bt;
    throw mfuse::InputError("invalid matcher");
}

mfuse::BlockMatchParams to_block(const mf_block_params* p) {
    mfuse::BlockMatchParams b;
    if (p) {
        b.rho = p->rho;
        b.d_min = p->d_min;
        b.d_max = p->d_max;
    }
    b.validate();
    return b;
}

std::vector<mfuse::CostVolume> collect(const mf_volume* const* volumes, size_t count) {
    require(volumes != nullptr && count > 0, "no cost volumes given");
    std::vector<mfuse::CostVolume> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        require(volumes[i] != nullptr, "null cost volume handle");
        out.push_back(volumes[i]->volume);
    }
    return out;
}

void fill_metrics(const mfuse::MetricsReport& r, mf_metrics* out) {
    std::memset(out, 0, sizeof *out);
    out->rms = r.rms;
    out->avg_err = r.avg_err;
    out->pixels = r.pixels;
    out->invalid = r.invalid;
    for (const auto& [t, v] : r.bad) {
        if (out->threshold_count == MF_MAX_THRESHOLDS) break;
        out->thresholds[out->threshold_count] = t;
        out->bad[out->threshold_count] = v;
        ++out->threshold_count;
    }
}

std::vector<double> thresholds_of(const double* thresholds, size_t count) {
    if (!thresholds || count == 0) return mfuse::kDefaultThresholds;
    require(count <= MF_MAX_THRESHOLDS, "too many thresholds");
    return {thresholds, thresholds + count};
}

} // namespace

extern "C" {

const char* mf_version(void) { return "1.0.0"; }

const char* mf_last_error(void) { return g_last_error.c_str(); }

const char* mf_status_name(mf_status status) {
    switch (status) {
    case MF_OK: return "ok";
    case MF_ERR_INPUT: return "input error";
    case MF_ERR_FORMAT: return "format error";
    case MF_ERR_UNSUPPORTED: return "unsupported";
    case MF_ERR_SPEC: return "scene spec error";
    case MF_ERR_IO: return "io error";
    case MF_ERR_NUMERIC: return "numeric error";
    case MF_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

// Images

mf_status mf_image_read(const char* path, mf_image** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new mf_image{mfuse::read_gray(path)};
    });
}

mf_status mf_image_write_pgm(const mf_image* image, const char* path) {
    return guarded([&] {
        require(image && path, "null argument");
        mfuse::write_pgm(path, image->image);
    });
}

void mf_image_size(const mf_image* image, int* width, int* height) {
    if (width) *width = image ? image->image.width() : 0;
    if (height) *height = image ? image->image.height() : 0;
}

void mf_image_free(mf_image* image) { delete image; }

// Disparity maps

mf_status mf_disparity_read(const char* path, mf_disparity** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new mf_disparity{mfuse::read_pfm(path)};
    });
}

mf_status mf_disparity_write_pfm(const mf_disparity* map, const char* path) {
    return guarded([&] {
        require(map && path, "null argument");
        mfuse::write_pfm(path, map->map);
    });
}

mf_status mf_disparity_write_jet(const mf_disparity* map, double d_max, const char* path) {
    return guarded([&] {
        require(map && path, "null argument");
        mfuse::write_ppm(path, mfuse::colorize_jet(map->map, d_max));
    });
}

void mf_disparity_size(const mf_disparity* map, int* width, int* height) {
    if (width) *width = map ? map->map.width() : 0;
    if (height) *height = map ? map->map.height() : 0;
}

const float* mf_disparity_data(const mf_disparity* map) { return map ? map->map.data().data() : nullptr; }

void mf_disparity_free(mf_disparity* map) { delete map; }

// Scenes

mf_status mf_scene_load_dir(const char* dir, mf_scene** out) {
    return guarded([&] {
        require(dir && out, "null argument");
        *out = new mf_scene{mfuse::load_scene_dir(dir)};
    });
}

mf_status mf_scene_from_triplet(const char* left, const char* center, const char* right, mf_scene** out) {
    return guarded([&] {
        require(left && center && right && out, "null argument");
        std::vector<mfuse::SurroundView> views;
        views.push_back({mfuse::Direction::Left, mfuse::read_gray(left)});
        views.push_back({mfuse::Direction::Right, mfuse::read_gray(right)});
        *out = new mf_scene{mfuse::MultiscopicSet(mfuse::read_gray(center), std::move(views))};
    });
}

mf_status mf_scene_select(const mf_scene* scene, const mf_direction* dirs, size_t count, mf_scene** out) {
    return guarded([&] {
        require(scene && dirs && out && count > 0, "null argument");
        std::vector<mfuse::Direction> d;
        for (size_t i = 0; i < count; ++i) d.push_back(to_direction(dirs[i]));
        *out = new mf_scene{scene->set.select(d)};
    });
}

size_t mf_scene_view_count(const mf_scene* scene) { return scene ? scene->set.surround().size() : 0; }

mf_direction mf_scene_view_direction(const mf_scene* scene, size_t index) {
    if (!scene || index >= scene->set.surround().size()) return MF_LEFT;
    return from_direction(scene->set.surround()[index].direction);
}

void mf_scene_size(const mf_scene* scene, int* width, int* height) {
    if (width) *width = scene ? scene->set.width() : 0;
    if (height) *height = scene ? scene->set.height() : 0;
}

void mf_scene_free(mf_scene* scene) { delete scene; }

void mf_synth_options_default(mf_synth_options* opts) {
    if (!opts) return;
    const mfuse::SceneRanges r;
    opts->width = r.width;
    opts->height = r.height;
    opts->d_max = r.d_max;
    opts->background_d_min = r.background_d_min;
    opts->background_d_max = r.background_d_max;
    opts->min_foreground = r.min_foreground;
    opts->max_foreground = r.max_foreground;
    opts->flat_patch_probability = r.flat_patch_probability;
    opts->noise_sigma = r.noise_sigma;
    opts->baseline_mm = r.baseline_mm;
}

mf_status mf_synth_dataset(const mf_synth_options* opts, int count, uint64_t seed, const char* outdir) {
    return guarded([&] {
        require(outdir != nullptr, "null output directory");
        mfuse::SceneRanges r;
        if (opts) {
            r.width = opts->width;
            r.height = opts->height;
            r.d_max = opts->d_max;
            r.background_d_min = opts->background_d_min;
            r.background_d_max = opts->background_d_max;
            r.min_foreground = opts->min_foreground;
            r.max_foreground = opts->max_foreground;
            r.flat_patch_probability = opts->flat_patch_probability;
            r.noise_sigma = opts->noise_sigma;
            r.baseline_mm = opts->baseline_mm;
        }
        mfuse::generate_dataset(r, count, seed, outdir);
    });
}

// Cost volumes

void mf_block_params_default(mf_block_params* params) {
    if (!params) return;
    const mfuse::BlockMatchParams b;
    params->rho = b.rho;
    params->d_min = b.d_min;
    params->d_max = b.d_max;
}

mf_status mf_volume_compute(const mf_scene* scene, size_t index, mf_matcher matcher, const mf_block_params* params,
                            mf_volume** out) {
    return guarded([&] {
        require(scene && out, "null argument");
        require(index < scene->set.surround().size(), "view index out of range");
        const auto& view = scene->set.surround()[index];
        const auto bm = to_block(params);
        *out = new mf_volume{to_matcher(matcher) == mfuse::Matcher::Sad
                                 ? mfuse::sad_cost_volume(scene->set.center(), view.image, view.direction, bm)
                                 : mfuse::bt_cost_volume(scene->set.center(), view.image, view.direction, bm)};
    });
}

mf_status mf_volume_read(const char* path, mf_volume** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new mf_volume{mfuse::read_volume(path)};
    });
}

mf_status mf_volume_write(const mf_volume* volume, const char* path) {
    return guarded([&] {
        require(volume && path, "null argument");
        mfuse::write_volume(path, volume->volume);
    });
}

void mf_volume_shape(const mf_volume* volume, int* d_min, int* d_max, int* width, int* height) {
    if (d_min) *d_min = volume ? volume->volume.d_min() : 0;
    if (d_max) *d_max = volume ? volume->volume.d_max() : 0;
    if (width) *width = volume ? volume->volume.width() : 0;
    if (height) *height = volume ? volume->volume.height() : 0;
}

mf_status mf_volume_fuse(const mf_volume* const* volumes, size_t count, mf_fusion strategy, double outlier_factor,
                         mf_volume** out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        mfuse::FusionParams fp;
        switch (strategy) {
        case MF_FUSION_MEAN: fp.strategy = mfuse::FusionStrategy::Mean; break;
        case MF_FUSION_MIN: fp.strategy = mfuse::FusionStrategy::Min; break;
        case MF_FUSION_HEURISTIC: fp.strategy = mfuse::FusionStrategy::Heuristic; break;
        default: throw mfuse::InputError("invalid fusion strategy");
        }
        fp.outlier_factor = static_cast<float>(outlier_factor);
        const auto vols = collect(volumes, count);
        *out = new mf_volume{mfuse::fuse(vols, fp)};
    });
}

mf_status mf_volume_wta(const mf_volume* volume, int subpixel, mf_disparity** out) {
    return guarded([&] {
        require(volume && out, "null argument");
        *out = new mf_disparity{mfuse::wta_disparity(volume->volume, subpixel != 0)};
    });
}

void mf_volume_free(mf_volume* volume) { delete volume; }

// Graph cuts

void mf_gc_params_default(mf_gc_params* params) {
    if (!params) return;
    const mfuse::GcParams p;
    params->k_occlusion = p.k_occlusion;
    params->lambda1 = p.lambda1;
    params->lambda2 = p.lambda2;
    params->theta = p.theta;
    params->d_cutoff = p.d_cutoff;
    params->upscale = p.upscale;
    params->max_sweeps = p.max_sweeps;
    params->seed = p.rng_seed;
    params->multiview_smoothness = p.multiview_smoothness ? 1 : 0;
}

mf_status mf_graph_cuts(const mf_scene* scene, const mf_gc_params* params, mf_matcher matcher,
                        const mf_block_params* block, mf_disparity** out, double* final_energy) {
    return guarded([&] {
        require(scene && out, "null argument");
        mfuse::GcParams p;
        if (params) {
            p.k_occlusion = params->k_occlusion;
            p.lambda1 = params->lambda1;
            p.lambda2 = params->lambda2;
            p.theta = params->theta;
            p.d_cutoff = params->d_cutoff;
            p.upscale = params->upscale;
            p.max_sweeps = params->max_sweeps;
            p.rng_seed = params->seed;
            p.multiview_smoothness = params->multiview_smoothness != 0;
        }
        auto run = mfuse::multiscopic_gc_run(scene->set, p, to_matcher(matcher), to_block(block));
        if (final_energy) *final_energy = run.solution.energy;
        *out = new mf_disparity{std::move(run.disparity)};
    });
}

// Learned fusion

mf_status mf_network_create(uint64_t seed, mf_network** out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        auto* n = new mf_network{};
        n->net.initialize(seed);
        *out = n;
    });
}

mf_status mf_network_load(const char* path, mf_network** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new mf_network{mfuse::load_net(path)};
    });
}

mf_status mf_network_save(const mf_network* net, const char* path) {
    return guarded([&] {
        require(net && path, "null argument");
        mfuse::save_net(net->net, path);
    });
}

size_t mf_network_param_count(const mf_network* net) { return net ? net->net.param_count() : 0; }

mf_status mf_network_infer(const mf_network* net, const mf_volume* const* volumes, size_t count, mf_disparity** out) {
    return guarded([&] {
        require(net && out, "null argument");
        const auto vols = collect(volumes, count);
        *out = new mf_disparity{mfuse::forward<float>(net->net, vols).disparity};
    });
}

void mf_network_free(mf_network* net) { delete net; }

void mf_train_params_default(mf_train_params* params) {
    if (!params) return;
    const mfuse::TrainConfig c;
    params->learning_rate = c.learning_rate;
    params->epochs = c.epochs;
    params->seed = c.rng_seed;
    params->crop = c.crop;
    params->final_lr_fraction = c.final_lr_fraction;
    params->standardize = c.normalization == mfuse::VolumeNormalization::Standardize ? 1 : 0;
}

mf_status mf_trainset_create(mf_trainset** out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        *out = new mf_trainset{};
    });
}

mf_status mf_trainset_add(mf_trainset* set, const mf_volume* const* volumes, size_t count, const mf_disparity* gt) {
    return guarded([&] {
        require(set && gt, "null argument");
        mfuse::TrainSample s;
        s.volumes = collect(volumes, count);
        s.gt = gt->map;
        for (const auto& v : s.volumes)
            require(v.same_shape(s.volumes[0]), "training volumes differ in shape");
        require(s.gt.width() == s.volumes[0].width() && s.gt.height() == s.volumes[0].height(),
                "ground truth does not match the volumes");
        if (!set->samples.empty()) {
            const auto& ref = set->samples[0].volumes[0];
            require(ref.d_min() == s.volumes[0].d_min() && ref.d_max() == s.volumes[0].d_max(),
                    "training samples must share one disparity range");
        }
        set->samples.push_back(std::move(s));
    });
}

size_t mf_trainset_size(const mf_trainset* set) { return set ? set->samples.size() : 0; }

void mf_trainset_free(mf_trainset* set) { delete set; }

mf_status mf_train(const mf_trainset* set, const mf_train_params* params, mf_epoch_callback callback, void* user,
                   mf_network** out) {
    return guarded([&] {
        require(set && out, "null argument");
        mfuse::TrainConfig cfg;
        if (params) {
            cfg.learning_rate = params->learning_rate;
            cfg.epochs = params->epochs;
            cfg.rng_seed = params->seed;
            cfg.crop = params->crop;
            cfg.final_lr_fraction = params->final_lr_fraction;
            cfg.normalization = params->standardize ? mfuse::VolumeNormalization::Standardize
                                                    : mfuse::VolumeNormalization::None;
        }
        mfuse::EpochCallback cb;
        if (callback) cb = [callback, user](int e, double l) { callback(e, l, user); };
        auto result = mfuse::train(set->samples, cfg, cb);
        *out = new mf_network{std::move(result.net)};
    });
}

// Evaluation

mf_status mf_evaluate(const mf_disparity* pred, const mf_disparity* gt, const double* thresholds,
                      size_t threshold_count, int mask_invalid, mf_metrics* out) {
    return guarded([&] {
        require(pred && gt && out, "null argument");
        const auto r = mfuse::evaluate(pred->map, gt->map, thresholds_of(thresholds, threshold_count),
                                       mask_invalid ? mfuse::InvalidPolicy::MaskOut : mfuse::InvalidPolicy::Penalize);
        fill_metrics(r, out);
    });
}

mf_status mf_evaluate_dataset(const char* const* names, const mf_disparity* const* preds,
                              const mf_disparity* const* gts, size_t count, int mask_invalid, mf_metrics* mean,
                              char** table) {
    return guarded([&] {
        require(names && preds && gts, "null argument");
        std::vector<mfuse::ScenePair> pairs;
        for (size_t i = 0; i < count; ++i) {
            require(names[i] != nullptr, "null scene name");
            pairs.push_back({names[i], preds[i] ? &preds[i]->map : nullptr, gts[i] ? &gts[i]->map : nullptr});
        }
        const auto report = mfuse::evaluate_dataset(
            pairs, mfuse::kDefaultThresholds,
            mask_invalid ? mfuse::InvalidPolicy::MaskOut : mfuse::InvalidPolicy::Penalize);
        if (mean) fill_metrics(report.mean, mean);
        if (table) {
            const std::string text = mfuse::format_table(report);
            char* buf = static_cast<char*>(std::malloc(text.size() + 1));
            if (!buf) throw std::bad_alloc();
            std::memcpy(buf, text.c_str(), text.size() + 1);
            *table = buf;
        }
    });
}

void mf_string_free(char* s) { std::free(s); }

} // extern "C"
