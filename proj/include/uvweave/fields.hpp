#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace uvweave {

// Normalized location in [0,1]^2. The center of cell (i,j) of an N x M grid
// sits at ((i+0.5)/N, (j+0.5)/M); y grows downwards.
struct Coord {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Coord&, const Coord&) = default;
};

inline Coord pixel_center(int i, int j, int width, int height) {
    return {(i + 0.5) / width, (j + 0.5) / height};
}

using Mask = std::vector<std::uint8_t>;

// Row-major grid of `channels` doubles per cell with an optional validity mask.
class Field2 {
public:
    Field2() = default;
    Field2(int width, int height, int channels, double fill = 0.0);

    // Takes ownership of `data`; rejects size mismatches and non-finite values.
    static Field2 from_data(int width, int height, int channels, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t cells() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * width_ + x;
    }

    double& at(int x, int y, int c = 0) noexcept { return data_[index(x, y) * channels_ + c]; }
    double at(int x, int y, int c = 0) const noexcept { return data_[index(x, y) * channels_ + c]; }

    double& at_index(std::size_t cell, int c = 0) noexcept { return data_[cell * channels_ + c]; }
    double at_index(std::size_t cell, int c = 0) const noexcept { return data_[cell * channels_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool has_mask() const noexcept { return !valid_.empty(); }
    bool valid(int x, int y) const noexcept { return valid_.empty() || valid_[index(x, y)] != 0; }
    bool valid_index(std::size_t cell) const noexcept { return valid_.empty() || valid_[cell] != 0; }
    const Mask& mask() const noexcept { return valid_; }
    void set_mask(Mask mask);
    void clear_mask() noexcept { valid_.clear(); }

    friend bool operator==(const Field2&, const Field2&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
    Mask valid_;
};

// One axis of a clamp-to-edge bilinear lookup. `t` is the weight of i1.
struct AxisStencil {
    int i0 = 0;
    int i1 = 0;
    double t = 0.0;
    bool clamped = false;  // d t / d coordinate == 0
};

// Continuous index within this distance of an integer is snapped onto it, so
// lookups at cell centers reproduce stored values exactly.
inline constexpr double kSnap = 1e-9;

inline AxisStencil locate_axis(double p, int n) noexcept {
    AxisStencil s;
    if (n <= 1) {
        s.clamped = true;
        return s;
    }
    double f = p * n - 0.5;
    const double r = std::nearbyint(f);
    if (std::abs(f - r) < kSnap) f = r;
    if (f < 0.0) {
        f = 0.0;
        s.clamped = true;
    } else if (f > n - 1) {
        f = n - 1;
        s.clamped = true;
    }
    s.i0 = std::min(static_cast<int>(std::floor(f)), n - 2);
    s.i1 = s.i0 + 1;
    s.t = f - s.i0;
    return s;
}

struct BilinearStencil {
    AxisStencil x;
    AxisStencil y;

    // Cell indices in the order 00, 10, 01, 11 (x varies first).
    std::array<std::size_t, 4> cells(int width) const noexcept {
        const auto w = static_cast<std::size_t>(width);
        return {y.i0 * w + x.i0, y.i0 * w + x.i1, y.i1 * w + x.i0, y.i1 * w + x.i1};
    }
    std::array<double, 4> weights() const noexcept {
        return {(1.0 - x.t) * (1.0 - y.t), x.t * (1.0 - y.t), (1.0 - x.t) * y.t, x.t * y.t};
    }
};

inline BilinearStencil locate(Coord p, int width, int height) noexcept {
    return {locate_axis(p.x, width), locate_axis(p.y, height)};
}

struct Sample {
    std::array<double, 4> value{};
    double validity = 1.0;
};

// Bilinear blend of the four enclosing cells after clamp-to-edge. Throws
// ValidationError("invalid coordinate") for non-finite p.
Sample sample_bilinear(const Field2& f, Coord p);

// Value of channel c at a precomputed stencil.
inline double blend(const Field2& f, const BilinearStencil& s, int c) noexcept {
    const int w = f.width();
    const double v00 = f.at_index(static_cast<std::size_t>(s.y.i0) * w + s.x.i0, c);
    const double v10 = f.at_index(static_cast<std::size_t>(s.y.i0) * w + s.x.i1, c);
    const double v01 = f.at_index(static_cast<std::size_t>(s.y.i1) * w + s.x.i0, c);
    const double v11 = f.at_index(static_cast<std::size_t>(s.y.i1) * w + s.x.i1, c);
    const double top = (1.0 - s.x.t) * v00 + s.x.t * v10;
    const double bottom = (1.0 - s.x.t) * v01 + s.x.t * v11;
    return (1.0 - s.y.t) * top + s.y.t * bottom;
}

// Partial derivatives of blend() w.r.t. the normalized coordinate; zero along
// clamped axes.
struct BlendGradient {
    double dx = 0.0;
    double dy = 0.0;
};

inline BlendGradient blend_gradient(const Field2& f, const BilinearStencil& s, int c) noexcept {
    const int w = f.width();
    const double v00 = f.at_index(static_cast<std::size_t>(s.y.i0) * w + s.x.i0, c);
    const double v10 = f.at_index(static_cast<std::size_t>(s.y.i0) * w + s.x.i1, c);
    const double v01 = f.at_index(static_cast<std::size_t>(s.y.i1) * w + s.x.i0, c);
    const double v11 = f.at_index(static_cast<std::size_t>(s.y.i1) * w + s.x.i1, c);
    BlendGradient g;
    if (!s.x.clamped) {
        g.dx = ((1.0 - s.y.t) * (v10 - v00) + s.y.t * (v11 - v01)) * f.width();
    }
    if (!s.y.clamped) {
        g.dy = ((1.0 - s.x.t) * (v01 - v00) + s.x.t * (v11 - v10)) * f.height();
    }
    return g;
}

// d/dx and d/dy of every channel in normalized units: Sobel in the interior,
// central differences along edges, one-sided on the boundary. Output channel
// 2c holds d/dx of input channel c, 2c+1 holds d/dy. Needs a 3x3 grid or larger.
Field2 sobel_gradient(const Field2& f);

// Multi-source breadth-first dilation over the 8-neighbourhood. For every cell
// returns the index of the seed cell it inherits from (itself when seeded), or
// -1 when there are no seeds at all. Seeds are expanded in scanline order.
std::vector<std::int64_t> nearest_seed(int width, int height, const Mask& seeds);

}  // namespace uvweave
