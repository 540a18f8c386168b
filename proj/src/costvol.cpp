#include "mfuse/costvol.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace mfuse {

CostVolume::CostVolume(int d_min, int d_max, int width, int height, float fill)
    : d_min_(d_min), d_max_(d_max), width_(width), height_(height) {
    if (d_max < d_min) throw InputError("cost volume needs d_max >= d_min");
    if (width <= 0 || height <= 0) throw InputError("cost volume dimensions must be positive");
    costs_.assign(static_cast<std::size_t>(depth()) * slice_size(), fill);
}

bool operator==(const CostVolume& a, const CostVolume& b) {
    return a.same_shape(b) &&
           std::memcmp(a.costs_.data(), b.costs_.data(), a.costs_.size() * sizeof(float)) == 0;
}

void BlockMatchParams::validate() const {
    if (rho < 0) throw InputError("block radius rho must be >= 0");
    if (d_min < 0 || d_max < d_min) throw InputError("disparity range must satisfy 0 <= d_min <= d_max");
}

Matcher parse_matcher(std::string_view name) {
    if (name == "sad") return Matcher::Sad;
    if (name == "bt") return Matcher::Bt;
    throw InputError("unknown matcher '" + std::string(name) + "' (expected sad or bt)");
}

std::string_view matcher_name(Matcher m) noexcept { return m == Matcher::Sad ? "sad" : "bt"; }

namespace {

void check_pair(const Image& ref, const Image& target) {
    if (ref.width() != target.width() || ref.height() != target.height())
        throw InputError("reference and target images differ in size");
    if (ref.empty()) throw InputError("empty image");
}

} // namespace

CostVolume sad_cost_volume(const Image& ref, const Image& target, Direction dir, const BlockMatchParams& p) {
    check_pair(ref, target);
    p.validate();
    const int w = ref.width();
    const int h = ref.height();
    const int dx = direction_dx(dir);
    const int dy = direction_dy(dir);
    CostVolume vol(p.d_min, p.d_max, w, h);
    Image diff(w, h);
    for (int d = p.d_min; d <= p.d_max; ++d) {
        // Per-pixel absolute differences at this disparity; every block pixel
        // at clamped (x, y) reads diff(x, y), so block sums below add exactly
        // the terms a direct evaluation would, in the same order.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                diff.at(x, y) = std::fabs(ref.at(x, y) - target.clamped(x + dx * d, y + dy * d));
        auto out = vol.slice(d);
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                float& cell = out[static_cast<std::size_t>(v) * w + u];
                if (!target.contains(u + dx * d, v + dy * d)) {
                    cell = kLargeCost;
                    continue;
                }
                float acc = 0.0f;
                for (int y = v - p.rho; y <= v + p.rho; ++y) {
                    const int yc = std::clamp(y, 0, h - 1);
                    for (int x = u - p.rho; x <= u + p.rho; ++x)
                        acc += diff.at(std::clamp(x, 0, w - 1), yc);
                }
                cell = acc;
            }
        }
    }
    return vol;
}

BtInterval bt_interval(const Image& target, int x, int y) noexcept {
    static constexpr int kOffsets[5][2] = {{0, 0}, {-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    const float c = target.at(x, y);
    float lo = c;
    float hi = c;
    for (const auto& o : kOffsets) {
        const float m = 0.5f * (c + target.clamped(x + o[0], y + o[1]));
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    return {lo, hi};
}

float bt_dissimilarity(float ref, BtInterval iv) noexcept {
    return std::max({0.0f, ref - iv.hi, iv.lo - ref});
}

CostVolume bt_cost_volume(const Image& ref, const Image& target, Direction dir, const BlockMatchParams& p) {
    check_pair(ref, target);
    p.validate();
    const int w = ref.width();
    const int h = ref.height();
    const int dx = direction_dx(dir);
    const int dy = direction_dy(dir);

    std::vector<BtInterval> intervals(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) intervals[static_cast<std::size_t>(y) * w + x] = bt_interval(target, x, y);

    CostVolume vol(p.d_min, p.d_max, w, h);
    for (int d = p.d_min; d <= p.d_max; ++d) {
        auto out = vol.slice(d);
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const int x = u + dx * d;
                const int y = v + dy * d;
                out[static_cast<std::size_t>(v) * w + u] =
                    target.contains(x, y)
                        ? bt_dissimilarity(ref.at(u, v), intervals[static_cast<std::size_t>(y) * w + x])
                        : kLargeCost;
            }
        }
    }
    return vol;
}

std::vector<CostVolume> multiscopic_volumes(const MultiscopicSet& set, Matcher matcher, const BlockMatchParams& p) {
    std::vector<CostVolume> out;
    out.reserve(set.surround().size());
    for (const auto& view : set.surround()) {
        out.push_back(matcher == Matcher::Sad ? sad_cost_volume(set.center(), view.image, view.direction, p)
                                              : bt_cost_volume(set.center(), view.image, view.direction, p));
    }
    return out;
}

namespace {

constexpr char kVolumeMagic[4] = {'M', 'C', 'V', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

} // namespace

std::vector<std::uint8_t> encode_volume(const CostVolume& vol) {
    std::vector<std::uint8_t> out(kVolumeMagic, kVolumeMagic + 4);
    out.reserve(20 + vol.data().size() * 4);
    put_u32(out, static_cast<std::uint32_t>(vol.d_min()));
    put_u32(out, static_cast<std::uint32_t>(vol.d_max()));
    put_u32(out, static_cast<std::uint32_t>(vol.width()));
    put_u32(out, static_cast<std::uint32_t>(vol.height()));
    for (float c : vol.data()) put_u32(out, std::bit_cast<std::uint32_t>(c));
    return out;
}

CostVolume decode_volume(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kVolumeMagic, 4) != 0)
        throw FormatError("not an MCV1 cost volume");
    const auto d_min = static_cast<std::int32_t>(get_u32(bytes.data() + 4));
    const auto d_max = static_cast<std::int32_t>(get_u32(bytes.data() + 8));
    const auto w = static_cast<std::int32_t>(get_u32(bytes.data() + 12));
    const auto h = static_cast<std::int32_t>(get_u32(bytes.data() + 16));
    if (d_min < 0 || d_max < d_min || w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16) || d_max - d_min > 4096)
        throw FormatError("invalid MCV1 header");
    CostVolume vol(d_min, d_max, w, h);
    auto data = vol.data();
    if (bytes.size() != 20 + data.size() * 4) throw FormatError("MCV1 payload size mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(bytes.data() + 20 + 4 * i));
    return vol;
}

void write_volume(const std::filesystem::path& path, const CostVolume& vol) { write_file(path, encode_volume(vol)); }

CostVolume read_volume(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    try {
        return decode_volume(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace mfuse
