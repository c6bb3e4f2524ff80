#include "uvweave/scenegen.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace uvweave {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr Coord kCenter{0.5, 0.5};
constexpr double kRadiusX = 0.3;
constexpr double kRadiusY = 0.35;
// Angular rate of all periodic motion, per frame.
constexpr double kRate = kTwoPi / 16.0;

struct Box {
    double x0, y0, w, h;
};

// Surface region of part p (1-based) and its padded chart box.
Box chart_box(int parts, int p) {
    const double ex0 = kCenter.x - kRadiusX, ey0 = kCenter.y - kRadiusY;
    Box b{ex0, ey0, 2.0 * kRadiusX, 2.0 * kRadiusY};
    if (parts == 2) {
        b.w *= 0.5;
        if (p == 2) b.x0 += b.w;
    } else if (parts == 4) {
        b.w *= 0.5;
        b.h *= 0.5;
        if (p == 2 || p == 4) b.x0 += b.w;
        if (p == 3 || p == 4) b.y0 += b.h;
    }
    const double px = 0.15 * b.w, py = 0.15 * b.h;
    return {b.x0 - px, b.y0 - py, b.w + 2.0 * px, b.h + 2.0 * py};
}

int part_of_surface(int parts, Coord s) {
    if (parts == 2) return s.x < kCenter.x ? 1 : 2;
    if (parts == 4) return (s.x < kCenter.x ? 1 : 2) + (s.y < kCenter.y ? 0 : 2);
    return 0;
}

// Chart-local coordinate of surface point s in part p.
Coord surface_to_local(int parts, int p, Coord s) {
    if (parts == 0) return s;
    const Box b = chart_box(parts, p);
    return {(s.x - b.x0) / b.w, (s.y - b.y0) / b.h};
}

Coord local_to_surface(int parts, int p, Coord l) {
    if (parts == 0) return l;
    const Box b = chart_box(parts, p);
    return {b.x0 + l.x * b.w, b.y0 + l.y * b.h};
}

Coord rotate(Coord v, double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct Motion {
    std::array<double, 4> phase{};  // shift x, shift y, rotation, bend
    std::array<double, 3> drift_phase{};
};

struct Drift {
    double angle = 0.0;
    Coord shift{};

    Coord apply(Coord s) const {
        const Coord r = rotate({s.x - kCenter.x, s.y - kCenter.y}, angle);
        return {kCenter.x + r.x + shift.x, kCenter.y + r.y + shift.y};
    }
    Coord invert(Coord s) const {
        const Coord r = rotate({s.x - kCenter.x - shift.x, s.y - kCenter.y - shift.y}, -angle);
        return {kCenter.x + r.x, kCenter.y + r.y};
    }
};

Drift drift_at(const SceneConfig& cfg, const Motion& m, int t) {
    const double w = kRate * t;
    Drift d;
    d.angle = cfg.uv_drift * 2.0 * (std::sin(w + m.drift_phase[0]) - std::sin(m.drift_phase[0]));
    d.shift = {cfg.uv_drift * (std::sin(w + m.drift_phase[1]) - std::sin(m.drift_phase[1])),
               cfg.uv_drift * (std::sin(w + m.drift_phase[2]) - std::sin(m.drift_phase[2]))};
    return d;
}

// Image location -> surface location for frame t.
Coord image_to_surface(const SceneConfig& cfg, const Motion& m, int t, Coord x) {
    const double a = cfg.amplitude, w = kRate * t;
    const Coord shift{2.0 * a * std::sin(w + m.phase[0]), 2.0 * a * std::sin(w + m.phase[1])};
    const double angle = 4.0 * a * std::sin(w + m.phase[2]);
    const double psi = m.phase[3] + w;
    const Coord r = rotate({x.x - kCenter.x - shift.x, x.y - kCenter.y - shift.y}, -angle);
    return {kCenter.x + r.x + a * std::sin(kTwoPi * cfg.frequency * x.y + psi),
            kCenter.y + r.y + a * std::sin(kTwoPi * cfg.frequency * x.x + psi)};
}

bool on_surface(Coord s) {
    const double dx = (s.x - kCenter.x) / kRadiusX, dy = (s.y - kCenter.y) / kRadiusY;
    return dx * dx + dy * dy <= 1.0;
}

struct Blob {
    Coord c;
    double inv_two_sigma2;
    std::array<double, 3> weight;
};

std::array<double, 3> pattern_color(Pattern pat, const std::vector<Blob>& blobs, Coord s) {
    switch (pat) {
        case Pattern::checker: {
            const long k = static_cast<long>(std::floor(8.0 * s.x)) + static_cast<long>(std::floor(8.0 * s.y));
            return (k & 1) ? std::array<double, 3>{0.9, 0.8, 0.2} : std::array<double, 3>{0.15, 0.2, 0.7};
        }
        case Pattern::grid: {
            auto near_line = [](double v) {
                const double f = v * 8.0 - std::floor(v * 8.0);
                return std::min(f, 1.0 - f) < 1.0 / 16.0;
            };
            if (near_line(s.x) || near_line(s.y)) return {0.1, 0.1, 0.3};
            return {0.85, 0.85, 0.8};
        }
        case Pattern::blobs:
        default: {
            std::array<double, 3> acc{};
            for (const Blob& b : blobs) {
                const double dx = s.x - b.c.x, dy = s.y - b.c.y;
                const double g = std::exp(-(dx * dx + dy * dy) * b.inv_two_sigma2);
                for (int c = 0; c < 3; ++c) acc[c] += b.weight[c] * g;
            }
            for (double& v : acc) v = 0.5 + 0.45 * std::tanh(v);
            return acc;
        }
    }
}

}  // namespace

Pattern parse_pattern(const std::string& name) {
    if (name == "blobs") return Pattern::blobs;
    if (name == "checker") return Pattern::checker;
    if (name == "grid") return Pattern::grid;
    throw ValidationError("unknown texture pattern '" + name + "'");
}

std::string pattern_name(Pattern p) {
    switch (p) {
        case Pattern::checker: return "checker";
        case Pattern::grid: return "grid";
        default: return "blobs";
    }
}

void SceneConfig::validate() const {
    if (width < 32 || height < 32) throw ValidationError("scene: image size must be at least 32");
    if (texture_width() < 32 || texture_height() < 32) throw ValidationError("scene: texture size must be at least 32");
    if (frames < 1) throw ValidationError("scene: need at least one frame");
    if (parts != 0 && parts != 2 && parts != 4) throw ValidationError("scene: parts must be 0, 2 or 4");
    if (!(amplitude >= 0.0) || !(frequency >= 0.0) || !(uv_drift >= 0.0)) {
        throw ValidationError("scene: amplitude, frequency and drift must be non-negative");
    }
    // The bend adds a term of norm <= 2 pi k A to a rotation's Jacobian; keeping
    // it at or below 0.5 keeps the deformation a diffeomorphism.
    if (kTwoPi * frequency * amplitude > 0.5) {
        throw ValidationError("scene: degenerate deformation (2*pi*frequency*amplitude > 0.5)");
    }
}

void CorruptConfig::validate() const {
    if (margin < 0 || duplicate_blocks < 0 || block_size < 0 || !(noise >= 0.0) || !(jitter >= 0.0)) {
        throw ValidationError("corrupt: all settings must be non-negative");
    }
}

FrameSet gen_sequence(const SceneConfig& cfg) {
    cfg.validate();
    const int W = cfg.width, H = cfg.height;
    const int TW = cfg.texture_width(), TH = cfg.texture_height();

    Rng rng(mix_seed(cfg.seed, 0x7363656e65ULL));
    Motion motion;
    for (double& p : motion.phase) p = uniform(rng, 0.0, kTwoPi);
    for (double& p : motion.drift_phase) p = uniform(rng, 0.0, kTwoPi);
    std::vector<Blob> blobs(40);
    for (Blob& b : blobs) {
        b.c = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
        const double sigma = uniform(rng, 0.03, 0.08);
        b.inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
        for (double& w : b.weight) w = uniform(rng, -2.0, 2.0);
    }

    // Texel -> (part, surface point); texels of unused tiles keep part 0.
    auto texel_surface = [&](Coord u, int& part) {
        if (cfg.parts == 0) {
            part = 0;
            return u;
        }
        part = AtlasLayout::part_at(u);
        if (part > cfg.parts) {
            part = 0;
            return u;
        }
        return local_to_surface(cfg.parts, part, AtlasLayout::to_local(part, u));
    };

    FrameSet fs;
    fs.texture = Field2(TW, TH, 3);
    for (int y = 0; y < TH; ++y) {
        for (int x = 0; x < TW; ++x) {
            int p = 0;
            const Coord s = texel_surface(pixel_center(x, y, TW, TH), p);
            const auto col = pattern_color(cfg.pattern, blobs, s);
            for (int c = 0; c < 3; ++c) fs.texture.at(x, y, c) = col[c];
        }
    }

    const bool with_parts = cfg.parts > 0;
    for (int t = 0; t < cfg.frames; ++t) {
        const Drift drift = drift_at(cfg, motion, t);
        UVMap gt(W, H, with_parts), fw(W, H, with_parts);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const Coord px = pixel_center(x, y, W, H);
                const Coord s = image_to_surface(cfg, motion, t, px);
                if (!on_surface(s)) continue;
                const std::size_t i = gt.uv.index(x, y);
                const int p = part_of_surface(cfg.parts, s);
                const Coord l = surface_to_local(cfg.parts, p, s);
                const Coord lw = surface_to_local(cfg.parts, p, drift.apply(s));
                gt.silhouette[i] = fw.silhouette[i] = 1;
                if (with_parts) gt.part[i] = fw.part[i] = static_cast<std::uint8_t>(p);
                gt.uv.at_index(i, 0) = px.x - l.x;
                gt.uv.at_index(i, 1) = px.y - l.y;
                fw.uv.at_index(i, 0) = px.x - lw.x;
                fw.uv.at_index(i, 1) = px.y - lw.y;
            }
        }

        Field2 img = warp(fs.texture, image_grid(gt));
        img.clear_mask();
        for (std::size_t i = 0; i < img.cells(); ++i) {
            if (!gt.silhouette[i]) {
                for (int c = 0; c < 3; ++c) img.at_index(i, c) = 0.0;
            }
        }

        Field2 q(TW, TH, 2);
        for (int y = 0; y < TH; ++y) {
            for (int x = 0; x < TW; ++x) {
                const Coord u = pixel_center(x, y, TW, TH);
                int p = 0;
                const Coord sw = texel_surface(u, p);
                Coord dst = u;
                if (cfg.parts == 0) {
                    dst = drift.invert(sw);
                } else if (p > 0) {
                    dst = AtlasLayout::to_texture(p, surface_to_local(cfg.parts, p, drift.invert(sw)));
                }
                q.at(x, y, 0) = dst.x;
                q.at(x, y, 1) = dst.y;
            }
        }

        fs.masks.push_back(gt.silhouette);
        fs.images.push_back(std::move(img));
        fs.gt_uv.push_back(std::move(gt));
        fs.raw_uv.push_back(fw);
        fs.frame_uv.push_back(std::move(fw));
        fs.correspondence.push_back(std::move(q));
    }
    return fs;
}

Mask erode(const Mask& m, int width, int height, int margin) {
    if (margin <= 0) return m;
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -margin; dy <= margin; ++dy)
        for (int dx = -margin; dx <= margin; ++dx)
            if (dx * dx + dy * dy <= margin * margin) offsets.emplace_back(dx, dy);
    Mask out(m.size(), 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            if (!m[i]) continue;
            bool keep = true;
            for (const auto& [dx, dy] : offsets) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || yy < 0 || xx >= width || yy >= height ||
                    !m[static_cast<std::size_t>(yy) * width + xx]) {
                    keep = false;
                    break;
                }
            }
            out[i] = keep ? 1 : 0;
        }
    }
    return out;
}

FrameSet corrupt(const FrameSet& fs, const CorruptConfig& cfg) {
    cfg.validate();
    FrameSet out = fs;
    out.raw_uv.resize(fs.frame_uv.size());
    for (int t = 0; t < fs.frames(); ++t) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
        UVMap r = fs.frame_uv[t];
        const int W = r.width(), H = r.height();

        if (cfg.margin > 0) {
            const Mask kept = erode(r.silhouette, W, H, cfg.margin);
            bool any = false;
            for (std::size_t i = 0; i < r.cells(); ++i) {
                if (kept[i]) {
                    any = true;
                    continue;
                }
                r.silhouette[i] = 0;
                r.uv.at_index(i, 0) = r.uv.at_index(i, 1) = 0.0;
                if (r.has_parts()) r.part[i] = 0;
            }
            if (!any) throw ValidationError("silhouette vanishes");
        }

        std::vector<std::size_t> fg;
        for (std::size_t i = 0; i < r.cells(); ++i)
            if (r.silhouette[i]) fg.push_back(i);
        if (fg.empty() && (cfg.duplicate_blocks > 0 || cfg.noise > 0 || cfg.jitter > 0)) {
            throw ValidationError("silhouette vanishes");
        }

        for (int b = 0; b < cfg.duplicate_blocks && cfg.block_size > 0; ++b) {
            const std::size_t c = fg[uniform_index(rng, fg.size())];
            const int cx = static_cast<int>(c % W), cy = static_cast<int>(c / W);
            const Coord lc = r.local_coord(cx, cy);
            const int pc = r.part_index(c);
            const int x0 = cx - cfg.block_size / 2, y0 = cy - cfg.block_size / 2;
            for (int y = std::max(0, y0); y < std::min(H, y0 + cfg.block_size); ++y) {
                for (int x = std::max(0, x0); x < std::min(W, x0 + cfg.block_size); ++x) {
                    if (!r.fg(x, y)) continue;
                    const Coord px = pixel_center(x, y, W, H);
                    r.uv.at(x, y, 0) = px.x - lc.x;
                    r.uv.at(x, y, 1) = px.y - lc.y;
                    if (r.has_parts()) r.part[r.uv.index(x, y)] = static_cast<std::uint8_t>(pc);
                }
            }
        }

        if (cfg.noise > 0.0) {
            for (std::size_t i : fg) {
                r.uv.at_index(i, 0) += uniform(rng, -cfg.noise, cfg.noise);
                r.uv.at_index(i, 1) += uniform(rng, -cfg.noise, cfg.noise);
            }
        }

        if (cfg.jitter > 0.0) {
            const double angle = uniform(rng, -cfg.jitter, cfg.jitter);
            const Coord shift{uniform(rng, -cfg.jitter, cfg.jitter), uniform(rng, -cfg.jitter, cfg.jitter)};
            for (std::size_t i : fg) {
                const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
                const Coord l = r.local_coord(x, y);
                const Coord rl = rotate({l.x - 0.5, l.y - 0.5}, angle);
                const Coord px = pixel_center(x, y, W, H);
                r.uv.at_index(i, 0) = px.x - (0.5 + rl.x + shift.x);
                r.uv.at_index(i, 1) = px.y - (0.5 + rl.y + shift.y);
            }
        }
        out.raw_uv[t] = std::move(r);
    }
    return out;
}

Field2 frame_texture(const FrameSet& fs, int t) {
    WarpGrid g;
    g.target = fs.correspondence.at(static_cast<std::size_t>(t));
    g.coverage.assign(g.target.cells(), 1.0);
    Field2 out = warp(fs.texture, g);
    out.clear_mask();
    return out;
}

}  // namespace uvweave
