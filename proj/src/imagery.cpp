#include "mfuse/imagery.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

namespace mfuse {

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InputError("image dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0) throw InputError("image dimensions must be non-negative");
    if (data_.size() != static_cast<std::size_t>(width) * height)
        throw InputError("image data length does not match width x height");
}

float Image::clamped(int x, int y) const noexcept {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

ColorImage::ColorImage(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InputError("image dimensions must be non-negative");
    data_.resize(static_cast<std::size_t>(width) * height);
}

DisparityMap::DisparityMap(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InputError("map dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

bool operator==(const DisparityMap& a, const DisparityMap& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           (a.data_.empty() ||
            std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
}

std::string_view direction_name(Direction d) noexcept {
    switch (d) {
    case Direction::Left: return "left";
    case Direction::Right: return "right";
    case Direction::Top: return "top";
    case Direction::Bottom: return "bottom";
    }
    return "?";
}

Direction parse_direction(std::string_view name) {
    if (name == "left") return Direction::Left;
    if (name == "right") return Direction::Right;
    if (name == "top") return Direction::Top;
    if (name == "bottom") return Direction::Bottom;
    throw InputError("unknown view direction '" + std::string(name) + "'");
}

MultiscopicSet::MultiscopicSet(Image center, std::vector<SurroundView> surround, double baseline_mm)
    : center_(std::move(center)), surround_(std::move(surround)), baseline_(baseline_mm) {
    if (surround_.empty()) throw InputError("multiscopic set needs at least one surrounding view");
    if (center_.empty()) throw InputError("multiscopic set has an empty center image");
    std::set<Direction> seen;
    for (const auto& v : surround_) {
        if (!seen.insert(v.direction).second)
            throw InputError("duplicate surrounding view '" + std::string(direction_name(v.direction)) + "'");
        if (v.image.width() != center_.width() || v.image.height() != center_.height())
            throw InputError("surrounding view '" + std::string(direction_name(v.direction)) +
                             "' does not match the center image dimensions");
    }
}

const Image* MultiscopicSet::find(Direction d) const noexcept {
    for (const auto& v : surround_)
        if (v.direction == d) return &v.image;
    return nullptr;
}

MultiscopicSet MultiscopicSet::select(std::span<const Direction> dirs) const {
    std::vector<SurroundView> views;
    for (Direction d : dirs) {
        const Image* img = find(d);
        if (!img) throw InputError("view '" + std::string(direction_name(d)) + "' not present in set");
        views.push_back({d, *img});
    }
    return MultiscopicSet(center_, std::move(views), baseline_);
}

// ---------------------------------------------------------------------------
// Netpbm / PFM decoding

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space_and_comments();
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
        if (out.empty()) throw FormatError("truncated header");
        return out;
    }

    long integer() {
        auto tok = token();
        long v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) throw FormatError("malformed header field '" + tok + "'");
        return v;
    }

    double real() {
        auto tok = token();
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw FormatError("malformed header field '" + tok + "'");
            return v;
        } catch (const std::logic_error&) {
            throw FormatError("malformed header field '" + tok + "'");
        }
    }

    // Exactly one whitespace byte separates the header from a binary payload.
    void end_of_header() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("missing header terminator");
        ++pos_;
    }

    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const std::uint8_t* cursor() const noexcept { return bytes_.data() + pos_; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void read_dims(HeaderReader& h, int& w, int& ht) {
    long lw = h.integer();
    long lh = h.integer();
    if (lw <= 0 || lh <= 0 || lw > (1 << 16) || lh > (1 << 16)) throw FormatError("invalid image dimensions");
    w = static_cast<int>(lw);
    ht = static_cast<int>(lh);
}

void read_maxval(HeaderReader& h) {
    long maxval = h.integer();
    if (maxval <= 0 || maxval >= 65536) throw FormatError("invalid maxval");
    if (maxval != 255) throw UnsupportedError("only maxval 255 is supported (got " + std::to_string(maxval) + ")");
}

Image decode_pgm(HeaderReader& h, bool ascii) {
    int w = 0, ht = 0;
    read_dims(h, w, ht);
    read_maxval(h);
    Image img(w, ht);
    auto px = img.data();
    if (ascii) {
        for (auto& v : px) {
            long s = 0;
            try {
                s = h.integer();
            } catch (const FormatError&) {
                throw FormatError("truncated PGM payload");
            }
            if (s < 0 || s > 255) throw FormatError("PGM sample out of range");
            v = static_cast<float>(s);
        }
    } else {
        h.end_of_header();
        if (h.remaining() < px.size()) throw FormatError("truncated PGM payload");
        const std::uint8_t* p = h.cursor();
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(p[i]);
    }
    return img;
}

ColorImage decode_ppm(HeaderReader& h, bool ascii) {
    int w = 0, ht = 0;
    read_dims(h, w, ht);
    read_maxval(h);
    ColorImage img(w, ht);
    auto px = img.data();
    if (ascii) {
        auto sample = [&] {
            long s = 0;
            try {
                s = h.integer();
            } catch (const FormatError&) {
                throw FormatError("truncated PPM payload");
            }
            if (s < 0 || s > 255) throw FormatError("PPM sample out of range");
            return static_cast<std::uint8_t>(s);
        };
        for (auto& c : px) {
            c.r = sample();
            c.g = sample();
            c.b = sample();
        }
    } else {
        h.end_of_header();
        if (h.remaining() < px.size() * 3) throw FormatError("truncated PPM payload");
        const std::uint8_t* p = h.cursor();
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
    }
    return img;
}

DisparityMap decode_pfm(HeaderReader& h, float* scale_out) {
    int w = 0, ht = 0;
    read_dims(h, w, ht);
    double scale = h.real();
    if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("invalid PFM scale");
    h.end_of_header();
    const std::size_t n = static_cast<std::size_t>(w) * ht;
    if (h.remaining() < n * 4) throw FormatError("truncated PFM payload");
    const bool little = scale < 0;
    const bool swap = little != (std::endian::native == std::endian::little);
    DisparityMap map(w, ht);
    const std::uint8_t* p = h.cursor();
    for (int row = 0; row < ht; ++row) {
        // File rows run bottom-to-top.
        const int y = ht - 1 - row;
        for (int x = 0; x < w; ++x) {
            std::uint8_t b[4];
            std::memcpy(b, p + (static_cast<std::size_t>(row) * w + x) * 4, 4);
            if (swap) {
                std::swap(b[0], b[3]);
                std::swap(b[1], b[2]);
            }
            float v = 0;
            std::memcpy(&v, b, 4);
            map.at(x, y) = v;
        }
    }
    if (scale_out) *scale_out = static_cast<float>(std::fabs(scale));
    return map;
}

void append(std::vector<std::uint8_t>& out, const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

std::uint8_t to_byte(float v) {
    if (!(v == v)) return 0;
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

} // namespace

AnyImage decode_image(std::span<const std::uint8_t> bytes, float* pfm_scale) {
    HeaderReader h(bytes);
    std::string magic = h.token();
    if (magic == "P2") return decode_pgm(h, true);
    if (magic == "P5") return decode_pgm(h, false);
    if (magic == "P3") return decode_ppm(h, true);
    if (magic == "P6") return decode_ppm(h, false);
    if (magic == "Pf") return decode_pfm(h, pfm_scale);
    if (magic == "PF") throw UnsupportedError("three-channel PFM is not supported");
    throw FormatError("unknown magic '" + magic + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

AnyImage read_image(const std::filesystem::path& path, float* pfm_scale) {
    auto bytes = read_file(path);
    try {
        return decode_image(bytes, pfm_scale);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const UnsupportedError& e) {
        throw UnsupportedError(path.string() + ": " + e.what());
    }
}

Image read_gray(const std::filesystem::path& path) {
    auto any = read_image(path);
    if (auto* g = std::get_if<Image>(&any)) return std::move(*g);
    if (auto* c = std::get_if<ColorImage>(&any)) return to_grayscale(*c);
    throw InputError(path.string() + ": expected a PGM or PPM image");
}

DisparityMap read_pfm(const std::filesystem::path& path, float* scale) {
    auto any = read_image(path, scale);
    if (auto* d = std::get_if<DisparityMap>(&any)) return std::move(*d);
    throw InputError(path.string() + ": expected a PFM disparity map");
}

std::vector<std::uint8_t> encode_pgm(const Image& img, PnmEncoding enc) {
    std::vector<std::uint8_t> out;
    const bool ascii = enc == PnmEncoding::Ascii;
    append(out, std::string(ascii ? "P2\n" : "P5\n") + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n");
    if (ascii) {
        for (int y = 0; y < img.height(); ++y) {
            std::string line;
            for (int x = 0; x < img.width(); ++x) {
                if (x) line += ' ';
                line += std::to_string(to_byte(img.at(x, y)));
            }
            append(out, line + "\n");
        }
    } else {
        for (float v : img.data()) out.push_back(to_byte(v));
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(const ColorImage& img, PnmEncoding enc) {
    std::vector<std::uint8_t> out;
    const bool ascii = enc == PnmEncoding::Ascii;
    append(out, std::string(ascii ? "P3\n" : "P6\n") + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n");
    if (ascii) {
        for (int y = 0; y < img.height(); ++y) {
            std::string line;
            for (int x = 0; x < img.width(); ++x) {
                const Rgb& c = img.at(x, y);
                if (x) line += ' ';
                line += std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' + std::to_string(c.b);
            }
            append(out, line + "\n");
        }
    } else {
        for (const Rgb& c : img.data()) {
            out.push_back(c.r);
            out.push_back(c.g);
            out.push_back(c.b);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_pfm(const DisparityMap& map) {
    std::vector<std::uint8_t> out;
    append(out, "Pf\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n-1.0\n");
    out.reserve(out.size() + map.size() * 4);
    for (int y = map.height() - 1; y >= 0; --y) {
        for (int x = 0; x < map.width(); ++x) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(map.at(x, y));
            for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
        }
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const Image& img, PnmEncoding enc) {
    write_file(path, encode_pgm(img, enc));
}
void write_ppm(const std::filesystem::path& path, const ColorImage& img, PnmEncoding enc) {
    write_file(path, encode_ppm(img, enc));
}
void write_pfm(const std::filesystem::path& path, const DisparityMap& map) { write_file(path, encode_pfm(map)); }

Image to_grayscale(const ColorImage& color) {
    Image out(color.width(), color.height());
    auto dst = out.data();
    auto src = color.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = static_cast<float>(0.299 * src[i].r + 0.587 * src[i].g + 0.114 * src[i].b);
    return out;
}

Rgb jet(double t) noexcept {
    t = std::clamp(t, 0.0, 1.0);
    // blue -> cyan -> green -> yellow -> red, four equal segments
    const double r = std::clamp(4.0 * t - 2.0, 0.0, 1.0);
    const double g = t < 0.25 ? 4.0 * t : t > 0.75 ? 4.0 * (1.0 - t) : 1.0;
    const double b = std::clamp(2.0 - 4.0 * t, 0.0, 1.0);
    auto q = [](double c) { return static_cast<std::uint8_t>(std::lround(255.0 * c)); };
    return {q(r), q(g), q(b)};
}

ColorImage colorize_jet(const DisparityMap& map, double d_max) {
    if (!(d_max > 0)) throw InputError("colorize_jet: d_max must be positive");
    ColorImage out(map.width(), map.height());
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x)
            out.at(x, y) = map.valid(x, y) ? jet(map.at(x, y) / d_max) : Rgb{0, 0, 0};
    return out;
}

Image upscale_bilinear(const Image& img, int factor) {
    if (factor < 1) throw InputError("upscale factor must be >= 1");
    if (factor == 1) return img;
    const int w = img.width() * factor;
    const int h = img.height() * factor;
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        const int y0 = y / factor;
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double fy = static_cast<double>(y % factor) / factor;
        for (int x = 0; x < w; ++x) {
            const int x0 = x / factor;
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double fx = static_cast<double>(x % factor) / factor;
            const double top = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
            const double bot = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
            out.at(x, y) = static_cast<float>((1 - fy) * top + fy * bot);
        }
    }
    return out;
}

} // namespace mfuse
