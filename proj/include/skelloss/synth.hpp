#pragma once
// Deterministic synthetic scenes: thin tubular strokes (quadratic Bézier
// curves) or filled ellipses, with a noisy intensity image per mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skelloss/rng.hpp"
#include "skelloss/types.hpp"

namespace skelloss::synth {

using Image = Grid<double>;

enum class SceneKind { tubular, blobs };

inline SceneKind parse_kind(const std::string& s) {
    if (s == "tubular") return SceneKind::tubular;
    if (s == "blobs") return SceneKind::blobs;
    throw ValidationError("unknown scene kind '" + s + "' (expected tubular or blobs)");
}

inline const char* to_string(SceneKind k) { return k == SceneKind::tubular ? "tubular" : "blobs"; }

struct SynthConfig {
    SceneKind kind = SceneKind::tubular;
    std::size_t count = 80;
    std::size_t size = 64;
    // Strokes (tubular) or ellipses (blobs) per image, inclusive range.
    int shapes_min = 2;
    int shapes_max = 4;
    // Stroke width in pixels (tubular) or ellipse semi-axis range (blobs).
    int width_min = 1;
    int width_max = 4;
    double noise_sigma = 0.15;
    double contrast = 0.6;
    // Foreground classes; each shape draws its label uniformly from 1..classes.
    unsigned classes = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (count < 1) throw ValidationError("SynthConfig: count must be >= 1");
        if (size < 32) throw ValidationError("SynthConfig: size must be >= 32");
        if (width_min < 1 || width_max < width_min) throw ValidationError("SynthConfig: bad width range");
        if (shapes_min < 1 || shapes_max < shapes_min) throw ValidationError("SynthConfig: bad shape count range");
        if (!(noise_sigma >= 0.0)) throw ValidationError("SynthConfig: noise_sigma must be >= 0");
        if (!(contrast >= 0.0 && contrast <= 1.0)) throw ValidationError("SynthConfig: contrast must be in [0,1]");
        if (classes < 1) throw ValidationError("SynthConfig: classes must be >= 1");
    }
};

struct SynthSample {
    Image image;
    LabelMask gt;
};

/// Tubular scenes keep their foreground below this fraction of the image.
inline constexpr double kMaxTubularFraction = 0.15;

namespace detail {

struct Point {
    double x;
    double y;
};

struct Pixel {
    long x;
    long y;
    bool operator==(const Pixel&) const = default;
};

inline long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

inline bool touching(Pixel a, Pixel b) { return std::abs(a.x - b.x) <= 1 && std::abs(a.y - b.y) <= 1; }

// Quadratic Bézier sampled at >= 4 samples per pixel of control-polygon length.
inline std::vector<Point> sample_bezier(Point p0, Point p1, Point p2) {
    const double len = std::sqrt((p1.x - p0.x) * (p1.x - p0.x) + (p1.y - p0.y) * (p1.y - p0.y)) +
                       std::sqrt((p2.x - p1.x) * (p2.x - p1.x) + (p2.y - p1.y) * (p2.y - p1.y));
    const auto steps = std::max<long>(2, static_cast<long>(std::ceil(4.0 * len)));
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(steps) + 1);
    for (long s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps);
        const double u = 1.0 - t;
        pts.push_back({u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
                       u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y});
    }
    return pts;
}

// One-pixel stroke: rounded samples chained into an 8-connected curve with
// staircase corners removed, so every interior pixel has exactly two
// non-adjacent neighbours along the curve.
inline std::vector<Pixel> thin_chain(const std::vector<Point>& pts) {
    std::vector<Pixel> chain;
    for (const Point& p : pts) {
        const Pixel q{round_half_up(p.x), round_half_up(p.y)};
        if (!chain.empty() && chain.back() == q) continue;
        while (chain.size() >= 2 && touching(chain[chain.size() - 2], q)) chain.pop_back();
        chain.push_back(q);
    }
    return chain;
}

inline void stamp_stroke(BinaryMask& out, const std::vector<Point>& pts, int width) {
    const auto w = static_cast<long>(out.width());
    const auto h = static_cast<long>(out.height());
    auto put = [&](long x, long y) {
        if (x >= 0 && y >= 0 && x < w && y < h) out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
    };
    if (width == 1) {
        for (const Pixel& p : thin_chain(pts)) put(p.x, p.y);
        return;
    }
    const double r = 0.5 * width;
    const double r2 = r * r;
    const long reach = static_cast<long>(std::ceil(r));
    for (const Point& p : pts) {
        const long cx = round_half_up(p.x);
        const long cy = round_half_up(p.y);
        for (long y = cy - reach; y <= cy + reach; ++y) {
            for (long x = cx - reach; x <= cx + reach; ++x) {
                const double dx = static_cast<double>(x) - p.x;
                const double dy = static_cast<double>(y) - p.y;
                if (dx * dx + dy * dy <= r2) put(x, y);
            }
        }
    }
}

// True when every stroke pixel has at most two 8-neighbours in the stroke and
// no pixel lies 8-adjacent to `other`; such strokes are fixed points of thinning.
inline bool is_isolated_curve(const BinaryMask& stroke, const LabelMask& other) {
    const auto w = static_cast<long>(stroke.width());
    const auto h = static_cast<long>(stroke.height());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (!stroke.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) continue;
            int nb = 0;
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    const long u = x + dx;
                    const long v = y + dy;
                    if (u < 0 || v < 0 || u >= w || v >= h) continue;
                    const auto su = static_cast<std::size_t>(u);
                    const auto sv = static_cast<std::size_t>(v);
                    if (other.at(su, sv) != 0) return false;
                    if ((dx || dy) && stroke.at(su, sv)) ++nb;
                }
            }
            if (nb > 2) return false;
        }
    }
    return true;
}

inline void stamp_ellipse(BinaryMask& out, Point c, double a, double b, Point axis) {
    const auto n = static_cast<long>(out.width());
    for (long y = 0; y < static_cast<long>(out.height()); ++y) {
        for (long x = 0; x < n; ++x) {
            const double dx = static_cast<double>(x) - c.x;
            const double dy = static_cast<double>(y) - c.y;
            const double u = (dx * axis.x + dy * axis.y) / a;
            const double v = (-dx * axis.y + dy * axis.x) / b;
            if (u * u + v * v <= 1.0) out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
        }
    }
}

// Unit vector by rejection sampling in the unit disk.
inline Point random_direction(Rng& rng) {
    for (;;) {
        const double u = rng.uniform(-1.0, 1.0);
        const double v = rng.uniform(-1.0, 1.0);
        const double s = u * u + v * v;
        if (s > 1e-6 && s <= 1.0) {
            const double len = std::sqrt(s);
            return {u / len, v / len};
        }
    }
}

inline LabelMask::Label draw_label(Rng& rng, unsigned classes) {
    return static_cast<LabelMask::Label>(1 + rng.below(classes));
}

}  // namespace detail

/// One scene, fully determined by (cfg.seed, index).
inline SynthSample generate_one(const SynthConfig& cfg, std::size_t index) {
    Rng rng(stream_seed(cfg.seed, index));
    const std::size_t n = cfg.size;
    const double extent = static_cast<double>(n);
    LabelMask gt(n, n, cfg.classes);
    const long shapes = rng.range(cfg.shapes_min, cfg.shapes_max);

    if (cfg.kind == SceneKind::tubular) {
        std::size_t fg = 0;
        long drawn = 0;
        const double limit = kMaxTubularFraction * static_cast<double>(n * n);
        for (long attempt = 0; drawn < shapes && attempt < 8 * shapes; ++attempt) {
            const detail::Point p0{rng.uniform(0.0, extent - 1.0), rng.uniform(0.0, extent - 1.0)};
            const detail::Point p1{rng.uniform(0.0, extent - 1.0), rng.uniform(0.0, extent - 1.0)};
            const detail::Point p2{rng.uniform(0.0, extent - 1.0), rng.uniform(0.0, extent - 1.0)};
            const int width = static_cast<int>(rng.range(cfg.width_min, cfg.width_max));
            const auto label = detail::draw_label(rng, cfg.classes);
            BinaryMask stroke(n, n, 0);
            detail::stamp_stroke(stroke, detail::sample_bezier(p0, p1, p2), width);
            // 1-px strokes stay separate curves so they survive thinning unchanged.
            if (width == 1 && !detail::is_isolated_curve(stroke, gt)) continue;
            std::size_t added = 0;
            for (std::size_t i = 0; i < stroke.size(); ++i) added += (stroke[i] && gt[i] == 0) ? 1 : 0;
            if (static_cast<double>(fg + added) >= limit) continue;
            for (std::size_t i = 0; i < stroke.size(); ++i) {
                if (stroke[i]) gt.set(i, label);
            }
            fg += added;
            ++drawn;
        }
    } else {
        for (long s = 0; s < shapes; ++s) {
            const detail::Point c{rng.uniform(0.0, extent - 1.0), rng.uniform(0.0, extent - 1.0)};
            const double a = rng.uniform(cfg.width_min, cfg.width_max);
            const double b = rng.uniform(cfg.width_min, cfg.width_max);
            const detail::Point axis = detail::random_direction(rng);
            const auto label = detail::draw_label(rng, cfg.classes);
            BinaryMask blob(n, n, 0);
            detail::stamp_ellipse(blob, c, a, b, axis);
            for (std::size_t i = 0; i < blob.size(); ++i) {
                if (blob[i]) gt.set(i, label);
            }
        }
    }

    Image img(n, n, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = gt[i] != 0 ? cfg.contrast : 0.0;
        if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * rng.normal();
        img[i] = std::clamp(v, 0.0, 1.0);
    }
    return {std::move(img), std::move(gt)};
}

inline std::vector<SynthSample> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SynthSample> out;
    out.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(generate_one(cfg, i));
    return out;
}

/// Deterministic shuffled split; round(fraction * n) samples go to train.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& data, double train_fraction,
                                                std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ValidationError("split: train fraction must be in (0,1)");
    }
    const std::size_t n = data.size();
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
    if (n_train == 0 || n_train >= n) throw ValidationError("split: one side would be empty");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(stream_seed(seed, 0x5b11u));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::pair<std::vector<T>, std::vector<T>> out;
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(data[order[i]]);
    return out;
}

}  // namespace skelloss::synth
