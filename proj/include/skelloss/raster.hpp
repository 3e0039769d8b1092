#pragma once
// Morphology on 2D masks: binarization, Zhang-Suen thinning, dilation and
// the tubed-skeleton mask transformation built from them.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skelloss/types.hpp"

namespace skelloss::raster {

enum class SeShape { square, disk };

struct StructuringElement {
    SeShape shape = SeShape::square;
    int radius = 1;

    StructuringElement() = default;
    StructuringElement(SeShape s, int r) : shape(s), radius(r) {
        if (r < 1) throw ValidationError("StructuringElement: radius must be >= 1");
    }

    /// Offsets (dx, dy) covered by the element, row-major.
    std::vector<std::array<int, 2>> footprint() const {
        std::vector<std::array<int, 2>> out;
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                if (shape == SeShape::disk && dx * dx + dy * dy > radius * radius) continue;
                out.push_back({dx, dy});
            }
        }
        return out;
    }

    std::string to_string() const {
        return std::string(shape == SeShape::square ? "square" : "disk") + ":" + std::to_string(radius);
    }

    bool operator==(const StructuringElement&) const = default;
};

/// Parses "square:1" / "disk:2". A bare shape name means radius 1.
inline StructuringElement parse_se(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    SeShape shape;
    if (name == "square") {
        shape = SeShape::square;
    } else if (name == "disk") {
        shape = SeShape::disk;
    } else {
        throw ValidationError("unknown structuring element '" + std::string(text) + "'");
    }
    int radius = 1;
    if (colon != std::string_view::npos) {
        const std::string r(text.substr(colon + 1));
        try {
            std::size_t used = 0;
            radius = std::stoi(r, &used);
            if (used != r.size()) throw std::invalid_argument(r);
        } catch (const std::exception&) {
            throw ValidationError("bad structuring element radius '" + r + "'");
        }
    }
    return StructuringElement(shape, radius);
}

inline BinaryMask binarize(const LabelMask& mask) {
    BinaryMask out(mask.width(), mask.height(), 0);
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] > 0 ? 1 : 0;
    return out;
}

namespace detail {

// Zhang-Suen neighbour order P2..P9: N, NE, E, SE, S, SW, W, NW.
constexpr std::array<int, 8> kDx = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr std::array<int, 8> kDy = {-1, -1, 0, 1, 1, 1, 0, -1};

inline std::array<std::uint8_t, 8> neighbours(const BinaryMask& m, std::size_t x, std::size_t y) {
    std::array<std::uint8_t, 8> p{};
    const auto w = static_cast<long>(m.width());
    const auto h = static_cast<long>(m.height());
    for (int k = 0; k < 8; ++k) {
        const long nx = static_cast<long>(x) + kDx[k];
        const long ny = static_cast<long>(y) + kDy[k];
        p[k] = (nx >= 0 && ny >= 0 && nx < w && ny < h)
                   ? m.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny))
                   : 0;
    }
    return p;
}

// Marks pixels removable in one Zhang-Suen sub-iteration; returns the count.
inline std::size_t mark_removable(const BinaryMask& m, bool first_pass, std::vector<std::size_t>& out) {
    out.clear();
    for (std::size_t y = 0; y < m.height(); ++y) {
        for (std::size_t x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            const auto p = neighbours(m, x, y);
            int b = 0;
            int a = 0;
            for (int k = 0; k < 8; ++k) {
                b += p[k];
                if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
            }
            if (b < 2 || b > 6 || a != 1) continue;
            // p[0]=P2 p[2]=P4 p[4]=P6 p[6]=P8
            const bool ok = first_pass ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                       : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
            if (ok) out.push_back(y * m.width() + x);
        }
    }
    return out.size();
}

}  // namespace detail

namespace detail {

// 8-connected component index per pixel (-1 for background), numbered in
// raster order of each component's first pixel.
inline std::vector<long> component_labels(const BinaryMask& m, std::size_t& count) {
    const auto w = static_cast<long>(m.width());
    const auto h = static_cast<long>(m.height());
    std::vector<long> label(m.size(), -1);
    std::vector<std::size_t> stack;
    count = 0;
    for (std::size_t start = 0; start < m.size(); ++start) {
        if (!m[start] || label[start] >= 0) continue;
        const auto id = static_cast<long>(count++);
        label[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const long x = static_cast<long>(i % m.width());
            const long y = static_cast<long>(i / m.width());
            for (int k = 0; k < 8; ++k) {
                const long nx = x + kDx[k];
                const long ny = y + kDy[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const auto j = static_cast<std::size_t>(ny * w + nx);
                if (m[j] && label[j] < 0) {
                    label[j] = id;
                    stack.push_back(j);
                }
            }
        }
    }
    return label;
}

}  // namespace detail

/// Zhang-Suen thinning. Pixels outside the grid count as background.
///
/// Plain Zhang-Suen erases some components completely (a 2x2 block, a
/// two-pixel-thick diagonal). To keep every input component represented, a
/// component left empty gets back one of the pixels removed in its last
/// sub-iteration (the first in raster order).
inline BinaryMask skeletonize(const BinaryMask& mask) {
    BinaryMask img = mask;
    std::vector<std::size_t> removable;
    std::vector<std::uint32_t> removed_at(mask.size(), 0);
    std::uint32_t step = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (bool first : {true, false}) {
            ++step;
            if (detail::mark_removable(img, first, removable) > 0) {
                for (std::size_t i : removable) {
                    img[i] = 0;
                    removed_at[i] = step;
                }
                changed = true;
            }
        }
    }

    std::size_t n_comp = 0;
    const auto comp = detail::component_labels(mask, n_comp);
    std::vector<bool> alive(n_comp, false);
    std::vector<std::size_t> keep(n_comp, mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (comp[i] < 0) continue;
        const auto c = static_cast<std::size_t>(comp[i]);
        if (img[i]) alive[c] = true;
        if (keep[c] == mask.size() || removed_at[i] > removed_at[keep[c]]) keep[c] = i;
    }
    for (std::size_t c = 0; c < n_comp; ++c) {
        if (!alive[c]) img[keep[c]] = 1;
    }
    return img;
}

/// Binary dilation; the footprint is clipped at the image border.
inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    BinaryMask out(mask.width(), mask.height(), 0);
    const auto fp = se.footprint();
    const auto w = static_cast<long>(mask.width());
    const auto h = static_cast<long>(mask.height());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (!mask.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) continue;
            for (const auto& [dx, dy] : fp) {
                const long nx = x + dx;
                const long ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                out.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)) = 1;
            }
        }
    }
    return out;
}

/// Dilated skeleton of the foreground union (all classes together).
inline BinaryMask dilated_skeleton(const LabelMask& mask, const StructuringElement& se) {
    return dilate(skeletonize(binarize(mask)), se);
}

/// Tubed skeleton: the dilated skeleton multiplied by the ground truth, so
/// every surviving pixel keeps its class label.
inline LabelMask tubed_skeletonize(const LabelMask& mask, const StructuringElement& se = {}) {
    const BinaryMask tube = dilated_skeleton(mask, se);
    LabelMask out(mask.width(), mask.height(), mask.num_classes());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (tube[i]) out.set(i, mask[i]);
    }
    return out;
}

/// Dilated skeleton without the ground-truth product. A tube pixel takes the
/// label underneath when that label is nonzero and label 1 otherwise.
inline LabelMask skeletonize_no_ts(const LabelMask& mask, const StructuringElement& se = {}) {
    const BinaryMask tube = dilated_skeleton(mask, se);
    LabelMask out(mask.width(), mask.height(), std::max(mask.num_classes(), 1u));
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (tube[i]) out.set(i, mask[i] != 0 ? mask[i] : LabelMask::Label{1});
    }
    return out;
}

/// Indicator of a single class.
inline BinaryMask class_mask(const LabelMask& mask, LabelMask::Label k) {
    BinaryMask out(mask.width(), mask.height(), 0);
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] == k ? 1 : 0;
    return out;
}

inline std::size_t count(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += v;
    return n;
}

/// a ⊆ b, pixelwise.
inline bool is_subset(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a.shape(), b.shape(), "is_subset");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && !b[i]) return false;
    }
    return true;
}

}  // namespace skelloss::raster
