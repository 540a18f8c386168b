#include "mfuse/fusion.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace mfuse {

FusionStrategy parse_fusion(std::string_view name) {
    if (name == "mean") return FusionStrategy::Mean;
    if (name == "min") return FusionStrategy::Min;
    if (name == "heuristic") return FusionStrategy::Heuristic;
    throw InputError("unknown fusion strategy '" + std::string(name) + "'");
}

std::string_view fusion_name(FusionStrategy s) noexcept {
    switch (s) {
    case FusionStrategy::Mean: return "mean";
    case FusionStrategy::Min: return "min";
    case FusionStrategy::Heuristic: return "heuristic";
    }
    return "?";
}

float heuristic_fuse(std::span<const float> costs, float outlier_factor) {
    const std::size_t n = costs.size();
    if (n == 0) throw InputError("heuristic fusion of zero costs");
    if (n == 1) return costs[0];
    if (n == 2) return std::min(costs[0], costs[1]);
    float c[3] = {costs[0], costs[1], costs[2]};
    std::sort(c, c + 3);
    for (std::size_t i = 3; i < n; ++i) {
        const float x = costs[i];
        if (x < c[2]) {
            c[2] = x;
            if (c[2] < c[1]) std::swap(c[1], c[2]);
            if (c[1] < c[0]) std::swap(c[0], c[1]);
        }
    }
    // Double accumulation in ascending order, as in mean fusion, keeps
    // min <= heuristic <= mean exact after rounding.
    if (c[2] > outlier_factor * c[1]) return static_cast<float>((static_cast<double>(c[0]) + c[1]) / 2.0);
    return static_cast<float>((static_cast<double>(c[0]) + c[1] + c[2]) / 3.0);
}

CostVolume fuse(std::span<const CostVolume> volumes, const FusionParams& params) {
    if (volumes.empty()) throw InputError("fuse: no cost volumes");
    for (const auto& v : volumes)
        if (!v.same_shape(volumes[0])) throw InputError("fuse: volumes differ in shape or disparity range");
    if (volumes.size() == 1) return volumes[0];

    const auto& first = volumes[0];
    CostVolume out(first.d_min(), first.d_max(), first.width(), first.height());
    auto dst = out.data();
    const std::size_t n = volumes.size();
    std::vector<float> cell(n);
    for (std::size_t i = 0; i < dst.size(); ++i) {
        for (std::size_t k = 0; k < n; ++k) cell[k] = volumes[k].data()[i];
        switch (params.strategy) {
        case FusionStrategy::Mean: {
            // Sorted so the sum, and hence the result, ignores input order.
            std::sort(cell.begin(), cell.end());
            double sum = 0.0;
            for (float c : cell) sum += c;
            dst[i] = static_cast<float>(sum / static_cast<double>(n));
            break;
        }
        case FusionStrategy::Min: dst[i] = *std::min_element(cell.begin(), cell.end()); break;
        case FusionStrategy::Heuristic: dst[i] = heuristic_fuse(cell, params.outlier_factor); break;
        }
    }
    return out;
}

double subpixel_refine(int d, float cm, float c0, float cp) noexcept {
    const double denom = 2.0 * cm + 2.0 * cp - 4.0 * c0;
    if (!(denom > 0.0)) return d;
    return d + (static_cast<double>(cm) - cp) / denom;
}

DisparityMap wta_disparity(const CostVolume& volume, bool subpixel) {
    const int w = volume.width();
    const int h = volume.height();
    DisparityMap out(w, h);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            int best = volume.d_min();
            float best_cost = volume.at(best, v, u);
            for (int d = volume.d_min() + 1; d <= volume.d_max(); ++d) {
                const float c = volume.at(d, v, u);
                if (c < best_cost) {
                    best_cost = c;
                    best = d;
                }
            }
            if (is_sentinel(best_cost)) continue;
            double disp = best;
            if (subpixel && best > volume.d_min() && best < volume.d_max()) {
                const float cm = volume.at(best - 1, v, u);
                const float cp = volume.at(best + 1, v, u);
                if (!is_sentinel(cm) && !is_sentinel(cp)) disp = subpixel_refine(best, cm, best_cost, cp);
            }
            out.at(u, v) = static_cast<float>(disp);
        }
    }
    return out;
}

} // namespace mfuse
