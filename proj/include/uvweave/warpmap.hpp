#pragma once

#include "uvweave/fields.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace uvweave {

inline constexpr int kPartCount = 24;

// Fixed 6 x 4 arrangement of the per-part charts inside the texture atlas.
// Part p (1-based) occupies column (p-1) % 6, row (p-1) / 6.
struct AtlasLayout {
    static constexpr int tiles_x = 6;
    static constexpr int tiles_y = 4;

    struct Rect {
        double x0 = 0.0;
        double y0 = 0.0;
        double w = 1.0;
        double h = 1.0;
    };

    static Rect tile(int part) noexcept;
    static Coord to_texture(int part, Coord local) noexcept;
    static Coord to_local(int part, Coord texture) noexcept;
    // Part whose tile contains the texture location (edges belong to the lower tile).
    static int part_at(Coord texture) noexcept;
};

// Per-pixel UV displacement P(x): the texture location of pixel x is x - uv(x),
// routed through the part's atlas tile when a part channel is present.
// uv.mask(), when set, marks which UV entries are known; extension stages use
// it for pixels inside the silhouette that still await a value.
class UVMap {
public:
    UVMap() = default;
    UVMap(int width, int height, bool with_parts = false);

    static UVMap identity(int width, int height, Mask silhouette);

    int width() const noexcept { return uv.width(); }
    int height() const noexcept { return uv.height(); }
    std::size_t cells() const noexcept { return uv.cells(); }
    bool has_parts() const noexcept { return !part.empty(); }

    bool fg(int x, int y) const noexcept { return silhouette[uv.index(x, y)] != 0; }
    bool fg_index(std::size_t i) const noexcept { return silhouette[i] != 0; }
    int part_index(std::size_t i) const noexcept { return part.empty() ? 0 : part[i]; }

    // Chart-local location x - uv(x).
    Coord local_coord(int x, int y) const noexcept;
    // Global texture location (atlas-routed when parts are present).
    Coord texture_coord(int x, int y) const noexcept;
    // d texture_coord / d (chart-local location), diagonal.
    Coord texture_scale(int x, int y) const noexcept;

    // Throws ValidationError when an invariant is broken.
    void validate() const;

    Field2 uv{0, 0, 2};
    Mask silhouette;
    std::vector<std::uint8_t> part;  // empty: no part channel; 0 = background, 1..24
};

// Sampling locations in a source domain for every cell of a destination grid.
struct WarpGrid {
    int width() const noexcept { return target.width(); }
    int height() const noexcept { return target.height(); }

    Field2 target{0, 0, 2};
    std::vector<double> coverage;  // 0 marks a hole whose target was filled in
};

// omega_I: image grid whose targets are texture locations x - P(x).
WarpGrid image_grid(const UVMap& P);

// omega_T: texture grid whose targets are image locations, built by forward
// splatting every foreground pixel's own center at its texture location with
// bilinear weights, normalising by the accumulated weight and filling empty
// texels from the nearest covered texel (coverage 0). Throws on an empty
// silhouette.
WarpGrid texture_grid(const UVMap& P, int tex_width, int tex_height);

// The warp operator: out(c) = sample_bilinear(src, g.target(c)). The output mask
// marks cells with positive coverage whose sample touches valid source cells.
Field2 warp(const Field2& src, const WarpGrid& g);

namespace detail {

// One foreground pixel's bilinear splat into the texture grid.
struct SplatEntry {
    std::size_t pixel = 0;
    BilinearStencil stencil;
};

struct SplatTrace {
    std::vector<SplatEntry> entries;
    std::vector<double> weight_sum;  // per texel
};

WarpGrid texture_grid_traced(const UVMap& P, int tex_width, int tex_height, SplatTrace* trace);

}  // namespace detail

}  // namespace uvweave
