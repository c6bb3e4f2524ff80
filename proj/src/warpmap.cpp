#include "uvweave/warpmap.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uvweave {

AtlasLayout::Rect AtlasLayout::tile(int part) noexcept {
    const int k = std::clamp(part, 1, kPartCount) - 1;
    Rect r;
    r.w = 1.0 / tiles_x;
    r.h = 1.0 / tiles_y;
    r.x0 = (k % tiles_x) * r.w;
    r.y0 = (k / tiles_x) * r.h;
    return r;
}

Coord AtlasLayout::to_texture(int part, Coord local) noexcept {
    const Rect r = tile(part);
    return {r.x0 + local.x * r.w, r.y0 + local.y * r.h};
}

Coord AtlasLayout::to_local(int part, Coord texture) noexcept {
    const Rect r = tile(part);
    return {(texture.x - r.x0) / r.w, (texture.y - r.y0) / r.h};
}

int AtlasLayout::part_at(Coord texture) noexcept {
    const int col = std::clamp(static_cast<int>(std::floor(texture.x * tiles_x)), 0, tiles_x - 1);
    const int row = std::clamp(static_cast<int>(std::floor(texture.y * tiles_y)), 0, tiles_y - 1);
    return row * tiles_x + col + 1;
}

UVMap::UVMap(int width, int height, bool with_parts)
    : uv(width, height, 2), silhouette(uv.cells(), 0) {
    if (with_parts) part.assign(uv.cells(), 0);
}

UVMap UVMap::identity(int width, int height, Mask silhouette) {
    UVMap m(width, height);
    if (silhouette.size() != m.cells()) throw ValidationError("UVMap::identity: mask size mismatch");
    m.silhouette = std::move(silhouette);
    return m;
}

Coord UVMap::local_coord(int x, int y) const noexcept {
    const Coord c = pixel_center(x, y, width(), height());
    return {c.x - uv.at(x, y, 0), c.y - uv.at(x, y, 1)};
}

Coord UVMap::texture_coord(int x, int y) const noexcept {
    const Coord local = local_coord(x, y);
    if (part.empty()) return local;
    const int p = part[uv.index(x, y)];
    return p > 0 ? AtlasLayout::to_texture(p, local) : local;
}

Coord UVMap::texture_scale(int x, int y) const noexcept {
    if (part.empty()) return {1.0, 1.0};
    const int p = part[uv.index(x, y)];
    if (p <= 0) return {1.0, 1.0};
    const auto r = AtlasLayout::tile(p);
    return {r.w, r.h};
}

void UVMap::validate() const {
    if (uv.channels() != 2) throw ValidationError("UVMap: uv must have 2 channels");
    if (silhouette.size() != cells()) throw ValidationError("UVMap: silhouette size mismatch");
    if (!part.empty() && part.size() != cells()) throw ValidationError("UVMap: part size mismatch");
    for (std::size_t i = 0; i < cells(); ++i) {
        if (silhouette[i]) {
            if (!std::isfinite(uv.at_index(i, 0)) || !std::isfinite(uv.at_index(i, 1))) {
                throw ValidationError("UVMap: non-finite uv on silhouette");
            }
        }
        if (!part.empty()) {
            if (part[i] > kPartCount) throw ValidationError("UVMap: part index out of range");
            if ((part[i] == 0) != (silhouette[i] == 0)) {
                throw ValidationError("UVMap: part must be 0 exactly off the silhouette");
            }
        }
    }
}

WarpGrid image_grid(const UVMap& P) {
    WarpGrid g;
    g.target = Field2(P.width(), P.height(), 2);
    g.coverage.assign(P.cells(), 0.0);
    for (int y = 0; y < P.height(); ++y) {
        for (int x = 0; x < P.width(); ++x) {
            const std::size_t i = P.uv.index(x, y);
            if (P.fg_index(i)) {
                const Coord u = P.texture_coord(x, y);
                g.target.at(x, y, 0) = u.x;
                g.target.at(x, y, 1) = u.y;
                g.coverage[i] = 1.0;
            } else {
                const Coord c = pixel_center(x, y, P.width(), P.height());
                g.target.at(x, y, 0) = c.x - P.uv.at(x, y, 0);
                g.target.at(x, y, 1) = c.y - P.uv.at(x, y, 1);
            }
        }
    }
    return g;
}

namespace detail {

WarpGrid texture_grid_traced(const UVMap& P, int tex_width, int tex_height, SplatTrace* trace) {
    if (tex_width <= 0 || tex_height <= 0) {
        throw ValidationError("texture_grid: texture resolution must be positive");
    }
    const std::size_t ntex = static_cast<std::size_t>(tex_width) * tex_height;
    std::vector<double> num_x(ntex, 0.0), num_y(ntex, 0.0), den(ntex, 0.0);
    if (trace) {
        trace->entries.clear();
        trace->weight_sum.clear();
    }
    bool any = false;
    for (int y = 0; y < P.height(); ++y) {
        for (int x = 0; x < P.width(); ++x) {
            const std::size_t i = P.uv.index(x, y);
            if (!P.fg_index(i)) continue;
            any = true;
            const Coord c = pixel_center(x, y, P.width(), P.height());
            const BilinearStencil s = locate(P.texture_coord(x, y), tex_width, tex_height);
            const auto cells = s.cells(tex_width);
            const auto w = s.weights();
            for (int k = 0; k < 4; ++k) {
                num_x[cells[k]] += w[k] * c.x;
                num_y[cells[k]] += w[k] * c.y;
                den[cells[k]] += w[k];
            }
            if (trace) trace->entries.push_back({i, s});
        }
    }
    if (!any) throw ValidationError("empty silhouette");

    WarpGrid g;
    g.target = Field2(tex_width, tex_height, 2);
    g.coverage.assign(ntex, 0.0);
    Mask covered(ntex, 0);
    for (std::size_t k = 0; k < ntex; ++k) {
        if (den[k] > 0.0) {
            g.target.at_index(k, 0) = num_x[k] / den[k];
            g.target.at_index(k, 1) = num_y[k] / den[k];
            g.coverage[k] = std::min(1.0, den[k]);
            covered[k] = 1;
        }
    }
    const auto donor = nearest_seed(tex_width, tex_height, covered);
    for (std::size_t k = 0; k < ntex; ++k) {
        if (!covered[k]) {
            const auto d = static_cast<std::size_t>(donor[k]);
            g.target.at_index(k, 0) = g.target.at_index(d, 0);
            g.target.at_index(k, 1) = g.target.at_index(d, 1);
        }
    }
    if (trace) trace->weight_sum = std::move(den);
    return g;
}

}  // namespace detail

WarpGrid texture_grid(const UVMap& P, int tex_width, int tex_height) {
    return detail::texture_grid_traced(P, tex_width, tex_height, nullptr);
}

Field2 warp(const Field2& src, const WarpGrid& g) {
    if (src.empty()) throw ValidationError("warp: empty source");
    Field2 out(g.width(), g.height(), src.channels());
    Mask valid(out.cells(), 0);
    const int nc = src.channels();
    for (std::size_t k = 0; k < out.cells(); ++k) {
        const Coord p{g.target.at_index(k, 0), g.target.at_index(k, 1)};
        const BilinearStencil s = locate(p, src.width(), src.height());
        for (int c = 0; c < nc; ++c) out.at_index(k, c) = blend(src, s, c);
        double validity = 1.0;
        if (src.has_mask()) {
            const auto cells = s.cells(src.width());
            const auto w = s.weights();
            validity = 0.0;
            for (int j = 0; j < 4; ++j) validity += src.valid_index(cells[j]) ? w[j] : 0.0;
        }
        valid[k] = (g.coverage[k] > 0.0 && validity > 0.0) ? 1 : 0;
    }
    out.set_mask(std::move(valid));
    return out;
}

}  // namespace uvweave
