#pragma once

#include "mfuse/imagery.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mfuse {

/// Cost assigned to (u, v, d) cells whose disparity-shifted sample falls
/// outside the target image. Excluded from WTA; loses every fusion sort.
inline constexpr float kLargeCost = 1e9f;

inline bool is_sentinel(float c) noexcept { return c >= kLargeCost; }

/// D x H x W matching costs, slice-major: index (d, v, u).
class CostVolume {
public:
    CostVolume() = default;
    CostVolume(int d_min, int d_max, int width, int height, float fill = 0.0f);

    int d_min() const noexcept { return d_min_; }
    int d_max() const noexcept { return d_max_; }
    int depth() const noexcept { return d_max_ - d_min_ + 1; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t slice_size() const noexcept { return static_cast<std::size_t>(width_) * height_; }

    /// Cost at absolute disparity d.
    float& at(int d, int v, int u) noexcept { return costs_[index(d, v, u)]; }
    float at(int d, int v, int u) const noexcept { return costs_[index(d, v, u)]; }

    std::span<float> slice(int d) noexcept { return {costs_.data() + (d - d_min_) * slice_size(), slice_size()}; }
    std::span<const float> slice(int d) const noexcept {
        return {costs_.data() + (d - d_min_) * slice_size(), slice_size()};
    }

    std::span<float> data() noexcept { return costs_; }
    std::span<const float> data() const noexcept { return costs_; }

    bool same_shape(const CostVolume& o) const noexcept {
        return d_min_ == o.d_min_ && d_max_ == o.d_max_ && width_ == o.width_ && height_ == o.height_;
    }

    friend bool operator==(const CostVolume& a, const CostVolume& b);

private:
    std::size_t index(int d, int v, int u) const noexcept {
        return (static_cast<std::size_t>(d - d_min_) * height_ + v) * width_ + u;
    }

    int d_min_ = 0;
    int d_max_ = -1;
    int width_ = 0;
    int height_ = 0;
    std::vector<float> costs_;
};

struct BlockMatchParams {
    int rho = 2;
    int d_min = 1;
    int d_max = 60;

    void validate() const;
};

enum class Matcher { Sad, Bt };

Matcher parse_matcher(std::string_view name);
std::string_view matcher_name(Matcher m) noexcept;

/// Sum of absolute differences over the (2 rho + 1)^2 block around (u, v).
/// Block coordinates clamp to the image; the target coordinate of each block
/// pixel is the direction-shifted clamped coordinate, itself clamped. A cell
/// whose shifted block center leaves the target is kLargeCost. Accumulation is
/// in float, row-major over the block.
CostVolume sad_cost_volume(const Image& ref, const Image& target, Direction dir, const BlockMatchParams& p);

/// Birchfield-Tomasi dissimilarity against the half-pixel interpolated
/// neighborhood of the target sample. Per pixel; p.rho is not used.
CostVolume bt_cost_volume(const Image& ref, const Image& target, Direction dir, const BlockMatchParams& p);

/// Interpolated interval [min, max] around target pixel (x, y).
struct BtInterval {
    float lo;
    float hi;
};
BtInterval bt_interval(const Image& target, int x, int y) noexcept;
/// max{0, ref - hi, lo - ref}
float bt_dissimilarity(float ref, BtInterval iv) noexcept;

/// One volume per surrounding view, in the set's order.
std::vector<CostVolume> multiscopic_volumes(const MultiscopicSet& set, Matcher matcher, const BlockMatchParams& p);

// "MCV1" little-endian container: magic, int32 d_min, d_max, width, height,
// float32 costs in (d, v, u) order.
std::vector<std::uint8_t> encode_volume(const CostVolume& vol);
CostVolume decode_volume(std::span<const std::uint8_t> bytes);
void write_volume(const std::filesystem::path& path, const CostVolume& vol);
CostVolume read_volume(const std::filesystem::path& path);

} // namespace mfuse
