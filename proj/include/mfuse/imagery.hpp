#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace mfuse {

/// Single-channel intensity image, row-major, values in [0, 255].
///
/// Values are real so that grayscale conversion and resampling do not
/// quantize. Images decoded from PGM hold integer values.
class Image {
public:
    Image() = default;
    Image(int width, int height, float fill = 0.0f);
    Image(int width, int height, std::vector<float> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Sample with coordinates clamped to the image bounds.
    float clamped(int x, int y) const noexcept;

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

class ColorImage {
public:
    ColorImage() = default;
    ColorImage(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    Rgb& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const Rgb& at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<Rgb> data() noexcept { return data_; }
    std::span<const Rgb> data() const noexcept { return data_; }

    friend bool operator==(const ColorImage&, const ColorImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> data_;
};

/// Per-pixel real disparity. Invalid (occluded / unmatched) pixels hold
/// +infinity and are written to PFM as such; they are never encoded as 0.
class DisparityMap {
public:
    static constexpr float kInvalid = std::numeric_limits<float>::infinity();

    DisparityMap() = default;
    DisparityMap(int width, int height, float fill = kInvalid);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }

    float& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    bool valid(int x, int y) const noexcept { return is_valid(at(x, y)); }
    static bool is_valid(float v) noexcept { return v == v && v != kInvalid && v != -kInvalid; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    // Bitwise comparison so that sentinels compare equal.
    friend bool operator==(const DisparityMap& a, const DisparityMap& b);

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

/// Surrounding-view placement relative to the center camera. The enumerator
/// also fixes the correspondence rule used by matching: a center pixel (x, y)
/// at disparity d appears in the view at
///   RIGHT (x - d, y), LEFT (x + d, y), TOP (x, y + d), BOTTOM (x, y - d),
/// with y growing downward.
enum class Direction { Left, Right, Top, Bottom };

/// Offset (dx, dy) per unit disparity for the direction's sampling rule.
constexpr int direction_dx(Direction d) noexcept {
    return d == Direction::Left ? 1 : d == Direction::Right ? -1 : 0;
}
constexpr int direction_dy(Direction d) noexcept {
    return d == Direction::Top ? 1 : d == Direction::Bottom ? -1 : 0;
}

std::string_view direction_name(Direction d) noexcept;
/// Parses "left" / "right" / "top" / "bottom" (case-sensitive); throws InputError.
Direction parse_direction(std::string_view name);

struct SurroundView {
    Direction direction;
    Image image;
};

/// One center image plus axis-aligned surrounding views sharing one baseline.
class MultiscopicSet {
public:
    MultiscopicSet() = default;
    /// Throws InputError unless all images share dimensions, every direction
    /// occurs at most once and at least one surrounding view is present.
    MultiscopicSet(Image center, std::vector<SurroundView> surround, double baseline_mm = 0.0);

    const Image& center() const noexcept { return center_; }
    const std::vector<SurroundView>& surround() const noexcept { return surround_; }
    double baseline() const noexcept { return baseline_; }
    int width() const noexcept { return center_.width(); }
    int height() const noexcept { return center_.height(); }

    const Image* find(Direction d) const noexcept;

    /// Subset keeping only the listed directions, in the listed order.
    MultiscopicSet select(std::span<const Direction> dirs) const;

private:
    Image center_;
    std::vector<SurroundView> surround_;
    double baseline_ = 0.0;
};

// ---------------------------------------------------------------------------
// File IO. PGM (P2/P5) and PPM (P3/P6) with maxval 255, PFM single channel.

using AnyImage = std::variant<Image, ColorImage, DisparityMap>;

/// Decode by magic number. PFM scale sign selects endianness; |scale| is
/// stored in *pfm_scale when non-null.
AnyImage read_image(const std::filesystem::path& path, float* pfm_scale = nullptr);
AnyImage decode_image(std::span<const std::uint8_t> bytes, float* pfm_scale = nullptr);

/// Convenience readers: PGM directly, PPM through to_grayscale.
Image read_gray(const std::filesystem::path& path);
DisparityMap read_pfm(const std::filesystem::path& path, float* scale = nullptr);

enum class PnmEncoding { Ascii, Binary };

/// Values are rounded to the nearest integer and clamped to [0, 255].
std::vector<std::uint8_t> encode_pgm(const Image& img, PnmEncoding enc = PnmEncoding::Binary);
std::vector<std::uint8_t> encode_ppm(const ColorImage& img, PnmEncoding enc = PnmEncoding::Binary);
/// Little-endian ("-1.0" scale) with rows stored bottom-to-top.
std::vector<std::uint8_t> encode_pfm(const DisparityMap& map);

void write_pgm(const std::filesystem::path& path, const Image& img, PnmEncoding enc = PnmEncoding::Binary);
void write_ppm(const std::filesystem::path& path, const ColorImage& img, PnmEncoding enc = PnmEncoding::Binary);
void write_pfm(const std::filesystem::path& path, const DisparityMap& map);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// ITU-R 601 luma, not rounded.
Image to_grayscale(const ColorImage& color);

/// Jet ramp position t in [0, 1] to color (blue -> cyan -> yellow -> red).
Rgb jet(double t) noexcept;
/// Valid disparities scaled by 1/d_max (clamped to [0,1]); invalid pixels black.
ColorImage colorize_jet(const DisparityMap& map, double d_max);

/// Bilinear enlargement by an integer factor. Output pixel (x, y) samples the
/// source at (x / factor, y / factor), so every factor-th pixel reproduces a
/// source pixel exactly.
Image upscale_bilinear(const Image& img, int factor);

} // namespace mfuse
