#pragma once

#include "mfuse/imagery.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mfuse {

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool contains(int px, int py) const noexcept {
        return px >= x && py >= y && px < x + width && py < y + height;
    }
};

/// Multi-octave value noise. Octave k has lattice period base_period / 2^k
/// and amplitude persistence^k.
struct TextureParams {
    double base_period = 6.0;
    int octaves = 3;
    double persistence = 0.5;
    double contrast = 100.0;  // half-range around the layer's mean intensity
};

/// Fronto-parallel plane at one integer disparity. A layer without a region
/// covers the whole plane (a background).
struct SceneLayer {
    int disparity = 0;
    bool full = true;
    Rect region;                  // center-view coordinates, used when !full
    double mean_intensity = 128.0;
    std::vector<Rect> flat_patches;  // textureless areas, center-view coordinates
};

struct SceneSpec {
    int width = 64;
    int height = 64;
    int d_max = 16;
    double noise_sigma = 0.0;
    double baseline_mm = 20.0;
    TextureParams texture;
    /// Back to front: later layers occlude earlier ones.
    std::vector<SceneLayer> layers;

    /// Throws SpecError.
    void validate() const;
};

struct SyntheticScene {
    MultiscopicSet views;  // center + left, right, top, bottom
    DisparityMap ground_truth;
};

/// Renders every view by shifting each layer by its disparity along the view
/// direction (the inverse of the matching sample rule) and compositing back
/// to front. Noise is added per view, then values are rounded to integers and
/// clamped to [0, 255]. Ground truth is the front-most layer's disparity.
SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Ranges from which random layered scenes are drawn.
struct SceneRanges {
    int width = 64;
    int height = 64;
    int d_max = 15;
    int background_d_min = 1;
    int background_d_max = 4;
    int min_foreground = 2;
    int max_foreground = 4;
    double flat_patch_probability = 0.3;
    double noise_sigma = 2.0;
    double baseline_mm = 20.0;
    TextureParams texture;
};

SceneSpec random_scene_spec(const SceneRanges& ranges, std::uint64_t seed);

/// Seed of scene `index` in a dataset drawn from `seed`.
std::uint64_t scene_seed(std::uint64_t seed, int index) noexcept;

/// Writes scene_0000 ... with {center,left,right,top,bottom}.pgm, gt.pfm and
/// meta.txt, plus manifest.txt listing the scene directories. Returns the
/// manifest entries.
std::vector<std::string> generate_dataset(const SceneRanges& ranges, int count, std::uint64_t seed,
                                          const std::filesystem::path& outdir);

/// Loads a scene directory: center.pgm plus whichever surrounding views
/// exist, in left, right, top, bottom order. meta.txt baseline is honored
/// when present.
MultiscopicSet load_scene_dir(const std::filesystem::path& dir);

} // namespace mfuse
