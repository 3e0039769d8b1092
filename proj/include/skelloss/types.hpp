#pragma once
// Grid containers shared by every module: label masks, binary masks,
// per-channel probability maps and their gradients.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skelloss {

/// Raised when an input violates a documented precondition (shape mismatch,
/// out-of-range value, malformed config). The CLI maps it to exit status 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Shape {
    std::size_t width = 0;
    std::size_t height = 0;

    std::size_t pixels() const { return width * height; }
    bool operator==(const Shape&) const = default;
};

inline std::string to_string(Shape s) {
    return std::to_string(s.width) + "x" + std::to_string(s.height);
}

inline void require_same_shape(Shape a, Shape b, const char* what) {
    if (a != b) {
        throw ValidationError(std::string(what) + ": dimension mismatch (" +
                              to_string(a) + " vs " + to_string(b) + ")");
    }
}

/// Row-major 2D grid of values.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t width, std::size_t height, T fill = T{})
        : shape_{width, height}, data_(width * height, fill) {}

    std::size_t width() const { return shape_.width; }
    std::size_t height() const { return shape_.height; }
    Shape shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    T& at(std::size_t x, std::size_t y) { return data_[y * shape_.width + x]; }
    const T& at(std::size_t x, std::size_t y) const { return data_[y * shape_.width + x]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

/// Binary foreground indicator; every value is exactly 0 or 1.
using BinaryMask = Grid<std::uint8_t>;

/// Integer label grid: 0 is background, 1..K are foreground classes.
class LabelMask {
public:
    using Label = std::uint16_t;

    LabelMask() = default;
    LabelMask(std::size_t width, std::size_t height, unsigned num_classes)
        : labels_(width, height, 0), num_classes_(num_classes) {
        if (width * height == 0) throw ValidationError("LabelMask: empty grid");
    }

    /// Builds a mask from row-major labels, checking every value against K.
    static LabelMask from_labels(std::size_t width, std::size_t height, unsigned num_classes,
                                 const std::vector<Label>& labels) {
        LabelMask m(width, height, num_classes);
        if (labels.size() != width * height) {
            throw ValidationError("LabelMask: label count does not match dimensions");
        }
        for (Label l : labels) {
            if (l > num_classes) {
                throw ValidationError("LabelMask: label " + std::to_string(l) +
                                      " exceeds class count " + std::to_string(num_classes));
            }
        }
        m.labels_.data() = labels;
        return m;
    }

    std::size_t width() const { return labels_.width(); }
    std::size_t height() const { return labels_.height(); }
    Shape shape() const { return labels_.shape(); }
    std::size_t size() const { return labels_.size(); }
    unsigned num_classes() const { return num_classes_; }

    Label at(std::size_t x, std::size_t y) const { return labels_.at(x, y); }
    Label operator[](std::size_t i) const { return labels_[i]; }

    void set(std::size_t x, std::size_t y, Label l) { set(y * width() + x, l); }
    void set(std::size_t i, Label l) {
        if (l > num_classes_) {
            throw ValidationError("LabelMask: label " + std::to_string(l) +
                                  " exceeds class count " + std::to_string(num_classes_));
        }
        labels_[i] = l;
    }

    const std::vector<Label>& labels() const { return labels_.data(); }

    bool operator==(const LabelMask&) const = default;

private:
    Grid<Label> labels_;
    unsigned num_classes_ = 0;
};

/// Channel-major stack of per-pixel values. ProbMap and GradField share this
/// layout: channel c, pixel i lives at index c * pixels + i.
class ChannelField {
public:
    ChannelField() = default;
    ChannelField(std::size_t width, std::size_t height, std::size_t channels, double fill = 0.0)
        : shape_{width, height}, channels_(channels), values_(width * height * channels, fill) {}

    std::size_t width() const { return shape_.width; }
    std::size_t height() const { return shape_.height; }
    Shape shape() const { return shape_; }
    std::size_t pixels() const { return shape_.pixels(); }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return values_.size(); }

    double& at(std::size_t channel, std::size_t pixel) { return values_[channel * pixels() + pixel]; }
    double at(std::size_t channel, std::size_t pixel) const { return values_[channel * pixels() + pixel]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_layout(const ChannelField& o) const {
        return shape_ == o.shape_ && channels_ == o.channels_;
    }

    bool operator==(const ChannelField&) const = default;

private:
    Shape shape_;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

/// Per-class probabilities; channel 0 is background, channels 1..K foreground.
class ProbMap : public ChannelField {
public:
    using ChannelField::ChannelField;
};

/// dL/ds for every channel entry of a ProbMap.
class GradField : public ChannelField {
public:
    using ChannelField::ChannelField;

    GradField& operator+=(const GradField& o) {
        if (!same_layout(o)) throw ValidationError("GradField: layout mismatch");
        for (std::size_t i = 0; i < size(); ++i) (*this)[i] += o[i];
        return *this;
    }

    /// this += scale * o
    void add_scaled(const GradField& o, double scale) {
        if (!same_layout(o)) throw ValidationError("GradField: layout mismatch");
        for (std::size_t i = 0; i < size(); ++i) (*this)[i] += scale * o[i];
    }
};

/// Checks the ProbMap invariants: values in [0,1], per-pixel sums of 1 within tol.
inline bool is_valid_probmap(const ProbMap& p, double tol = 1e-6) {
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p.channels(); ++c) {
            const double v = p.at(c, i);
            if (!(v >= 0.0 && v <= 1.0)) return false;
            sum += v;
        }
        if (sum < 1.0 - tol || sum > 1.0 + tol) return false;
    }
    return true;
}

}  // namespace skelloss
