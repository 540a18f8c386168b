#pragma once

#include "mfuse/costvol.hpp"
#include "mfuse/imagery.hpp"

#include <span>
#include <string_view>

namespace mfuse {

enum class FusionStrategy { Mean, Min, Heuristic };

FusionStrategy parse_fusion(std::string_view name);
std::string_view fusion_name(FusionStrategy s) noexcept;

struct FusionParams {
    FusionStrategy strategy = FusionStrategy::Heuristic;
    /// The heuristic drops the third-smallest cost when it exceeds
    /// outlier_factor times the second-smallest.
    float outlier_factor = 3.0f;
};

/// Heuristic fusion of one cell's costs. n >= 3 uses the three smallest
/// c1 <= c2 <= c3: (c1 + c2) / 2 if c3 > factor * c2, else (c1 + c2 + c3) / 3.
/// n == 2 returns the smaller cost, n == 1 the cost itself.
float heuristic_fuse(std::span<const float> costs, float outlier_factor = 3.0f);

/// Cell-wise fusion; throws InputError on empty input or shape mismatch.
CostVolume fuse(std::span<const CostVolume> volumes, const FusionParams& params);
inline CostVolume fuse(std::span<const CostVolume> volumes, FusionStrategy s) { return fuse(volumes, FusionParams{s}); }

/// Parabola refinement around integer winner d with neighbors cm (d-1) and
/// cp (d+1). Returns d unchanged when the denominator is not positive.
double subpixel_refine(int d, float cm, float c0, float cp) noexcept;

/// Per-pixel argmin (ties to the smaller d). Pixels where every cost is a
/// sentinel are invalid. Subpixel refinement applies only to interior winners
/// whose neighbors are not sentinels.
DisparityMap wta_disparity(const CostVolume& volume, bool subpixel);

} // namespace mfuse
