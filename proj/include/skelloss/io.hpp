#pragma once
// File formats: PGM (P2 ASCII / P5 binary) for label masks and images, SLPM
// for probability maps, and a small binary container for model weights.
//
// SLPM: 16-byte header "SLPM", width, height, channels (uint32 LE), then
// float32 LE values, channel-major then row-major.
// SLMP (weights): "SLMP", channels, features, reserved 0 (uint32 LE), then
// float64 LE values, row-major channels x features.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "skelloss/synth.hpp"
#include "skelloss/trainer.hpp"
#include "skelloss/types.hpp"

namespace skelloss::io {

enum class PgmEncoding { ascii, binary };

/// Raw PGM raster: values in [0, maxval].
struct Pgm {
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 255;
    std::vector<unsigned> values;
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Cursor over a PGM header: skips whitespace and '#' comments.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

    unsigned long next_number(const char* what) {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') ++pos_;
        if (start == pos_) throw ValidationError(std::string("PGM: expected ") + what);
        return std::stoul(b_.substr(start, pos_ - start));
    }

    void skip_space() {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    const std::string& b_;
    std::size_t pos_ = 2;
};

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    return v;
}

template <typename T, typename U>
void put_le(std::string& out, T value) {
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <typename T, typename U>
T get_le(const std::string& b, std::size_t at) {
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline Pgm parse_pgm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
        throw ValidationError("PGM: missing P2/P5 magic");
    }
    const bool binary = bytes[1] == '5';
    detail::HeaderReader hr(bytes);
    Pgm p;
    p.width = hr.next_number("width");
    p.height = hr.next_number("height");
    p.maxval = static_cast<unsigned>(hr.next_number("maxval"));
    if (p.width == 0 || p.height == 0) throw ValidationError("PGM: empty image");
    if (p.maxval == 0 || p.maxval > 65535) throw ValidationError("PGM: maxval out of range");
    const std::size_t n = p.width * p.height;
    p.values.resize(n);
    if (binary) {
        if (hr.pos() >= bytes.size()) throw ValidationError("PGM: truncated header");
        hr.advance(1);  // single whitespace before the raster
        const std::size_t bpp = p.maxval < 256 ? 1 : 2;
        if (bytes.size() - hr.pos() < n * bpp) throw ValidationError("PGM: truncated raster");
        const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + hr.pos());
        for (std::size_t i = 0; i < n; ++i) {
            p.values[i] = bpp == 1 ? raw[i] : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) p.values[i] = static_cast<unsigned>(hr.next_number("pixel value"));
    }
    for (unsigned v : p.values) {
        if (v > p.maxval) throw ValidationError("PGM: pixel value exceeds maxval");
    }
    return p;
}

inline std::string format_pgm(const Pgm& p, PgmEncoding enc) {
    std::ostringstream os;
    os << (enc == PgmEncoding::binary ? "P5" : "P2") << '\n' << p.width << ' ' << p.height << '\n' << p.maxval << '\n';
    std::string out = os.str();
    if (enc == PgmEncoding::binary) {
        for (unsigned v : p.values) {
            if (p.maxval >= 256) out.push_back(static_cast<char>((v >> 8) & 0xffu));
            out.push_back(static_cast<char>(v & 0xffu));
        }
    } else {
        for (std::size_t y = 0; y < p.height; ++y) {
            for (std::size_t x = 0; x < p.width; ++x) {
                if (x) out.push_back(' ');
                out += std::to_string(p.values[y * p.width + x]);
            }
            out.push_back('\n');
        }
    }
    return out;
}

/// Label mask from PGM: label = pixel value, class count K = maxval.
inline LabelMask label_mask_from_pgm(const Pgm& p) {
    std::vector<LabelMask::Label> labels(p.values.begin(), p.values.end());
    return LabelMask::from_labels(p.width, p.height, p.maxval, labels);
}

inline Pgm to_pgm(const LabelMask& m) {
    Pgm p;
    p.width = m.width();
    p.height = m.height();
    p.maxval = std::max(m.num_classes(), 1u);
    p.values.assign(m.labels().begin(), m.labels().end());
    return p;
}

inline Pgm to_pgm(const BinaryMask& m) {
    Pgm p;
    p.width = m.width();
    p.height = m.height();
    p.maxval = 1;
    p.values.assign(m.data().begin(), m.data().end());
    return p;
}

/// Intensities in [0,1] quantised to maxval 255 (round half up).
inline Pgm to_pgm(const synth::Image& img) {
    Pgm p;
    p.width = img.width();
    p.height = img.height();
    p.maxval = 255;
    p.values.resize(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        p.values[i] = static_cast<unsigned>(std::floor(std::clamp(img[i], 0.0, 1.0) * 255.0 + 0.5));
    }
    return p;
}

inline synth::Image image_from_pgm(const Pgm& p) {
    synth::Image img(p.width, p.height, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(p.values[i]) / p.maxval;
    return img;
}

inline LabelMask read_label_mask(const std::string& path) { return label_mask_from_pgm(parse_pgm(detail::read_file(path))); }
inline synth::Image read_image(const std::string& path) { return image_from_pgm(parse_pgm(detail::read_file(path))); }

template <typename M>
void write_pgm(const std::string& path, const M& m, PgmEncoding enc = PgmEncoding::binary) {
    detail::write_file(path, format_pgm(to_pgm(m), enc));
}

inline std::string format_slpm(const ProbMap& p) {
    std::string out = "SLPM";
    detail::put_u32(out, static_cast<std::uint32_t>(p.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(p.height()));
    detail::put_u32(out, static_cast<std::uint32_t>(p.channels()));
    out.reserve(16 + 4 * p.size());
    for (double v : p.values()) detail::put_le<float, std::uint32_t>(out, static_cast<float>(v));
    return out;
}

inline ProbMap parse_slpm(const std::string& b) {
    if (b.size() < 16 || b.compare(0, 4, "SLPM") != 0) throw ValidationError("SLPM: bad magic");
    const std::size_t w = detail::get_u32(b, 4);
    const std::size_t h = detail::get_u32(b, 8);
    const std::size_t c = detail::get_u32(b, 12);
    if (w == 0 || h == 0 || c == 0) throw ValidationError("SLPM: empty dimensions");
    if (b.size() != 16 + 4 * w * h * c) throw ValidationError("SLPM: payload size does not match header");
    ProbMap p(w, h, c, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = detail::get_le<float, std::uint32_t>(b, 16 + 4 * i);
    return p;
}

inline ProbMap read_slpm(const std::string& path) { return parse_slpm(detail::read_file(path)); }
inline void write_slpm(const std::string& path, const ProbMap& p) { detail::write_file(path, format_slpm(p)); }

inline std::string format_params(const trainer::ModelParams& m) {
    std::string out = "SLMP";
    detail::put_u32(out, static_cast<std::uint32_t>(m.channels));
    detail::put_u32(out, static_cast<std::uint32_t>(m.features));
    detail::put_u32(out, 0);
    for (double v : m.weights) detail::put_le<double, std::uint64_t>(out, v);
    return out;
}

inline trainer::ModelParams parse_params(const std::string& b) {
    if (b.size() < 16 || b.compare(0, 4, "SLMP") != 0) throw ValidationError("params: bad magic");
    trainer::ModelParams m(detail::get_u32(b, 4), detail::get_u32(b, 8));
    if (b.size() != 16 + 8 * m.weights.size()) throw ValidationError("params: payload size does not match header");
    for (std::size_t i = 0; i < m.weights.size(); ++i) m.weights[i] = detail::get_le<double, std::uint64_t>(b, 16 + 8 * i);
    return m;
}

inline trainer::ModelParams read_params(const std::string& path) { return parse_params(detail::read_file(path)); }
inline void write_params(const std::string& path, const trainer::ModelParams& m) {
    detail::write_file(path, format_params(m));
}

}  // namespace skelloss::io
