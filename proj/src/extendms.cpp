#include "uvweave/extendms.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace uvweave {

namespace {

struct Fit2 {
    // v(d) = mean_v + B (d - mean_d), channels x, y
    std::array<double, 2> mean_v{};
    Coord mean_d{};
    std::array<std::array<double, 2>, 2> B{};  // B[c] = gradient of channel c
};

// Least squares linear fit with a pseudo-inverse for rank-deficient scatter.
// Directions with no spread get zero slope.
template <class Sample>
Fit2 fit_linear(const std::vector<Sample>& s) {
    Fit2 f;
    const double n = static_cast<double>(s.size());
    for (const auto& p : s) {
        f.mean_d.x += p.d.x / n;
        f.mean_d.y += p.d.y / n;
        f.mean_v[0] += p.v[0] / n;
        f.mean_v[1] += p.v[1] / n;
    }
    double a = 0, b = 0, c = 0;
    std::array<Coord, 2> cv{};
    for (const auto& p : s) {
        const double dx = p.d.x - f.mean_d.x, dy = p.d.y - f.mean_d.y;
        a += dx * dx;
        b += dx * dy;
        c += dy * dy;
        for (int k = 0; k < 2; ++k) {
            cv[k].x += (p.v[k] - f.mean_v[k]) * dx;
            cv[k].y += (p.v[k] - f.mean_v[k]) * dy;
        }
    }
    const double half_tr = 0.5 * (a + c);
    const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    const double l1 = half_tr + disc, l2 = half_tr - disc;
    if (l1 <= 1e-12) return f;
    std::array<std::array<double, 2>, 2> pinv{};
    if (l2 > 1e-9 * l1) {
        const double det = a * c - b * b;
        pinv = {{{c / det, -b / det}, {-b / det, a / det}}};
    } else {
        // Rank one: invert along the dominant eigenvector only.
        double ex = b, ey = l1 - a;
        if (std::abs(ex) + std::abs(ey) < 1e-15) {
            ex = l1 - c;
            ey = b;
        }
        if (std::abs(ex) + std::abs(ey) < 1e-15) {
            ex = a >= c ? 1.0 : 0.0;
            ey = a >= c ? 0.0 : 1.0;
        }
        const double nrm = std::hypot(ex, ey);
        ex /= nrm;
        ey /= nrm;
        pinv = {{{ex * ex / l1, ex * ey / l1}, {ex * ey / l1, ey * ey / l1}}};
    }
    for (int k = 0; k < 2; ++k) {
        f.B[k][0] = pinv[0][0] * cv[k].x + pinv[0][1] * cv[k].y;
        f.B[k][1] = pinv[1][0] * cv[k].x + pinv[1][1] * cv[k].y;
    }
    return f;
}

struct UvSample {
    Coord d;
    std::array<double, 2> v;
};

Coord texel_of(const UVMap& P, std::size_t i, int TW, int TH) {
    const int x = static_cast<int>(i % P.width()), y = static_cast<int>(i / P.width());
    const Coord u = P.texture_coord(x, y);
    return {u.x * TW, u.y * TH};
}

}  // namespace

UVMap label_fill(const UVMap& raw, const Mask& full_mask) {
    raw.validate();
    if (full_mask.size() != raw.cells()) throw ValidationError("label_fill: mask size mismatch");
    bool grows = false;
    for (std::size_t i = 0; i < raw.cells(); ++i) {
        if (raw.silhouette[i] && !full_mask[i]) throw ValidationError("mask must contain raw silhouette");
        if (full_mask[i] && !raw.silhouette[i]) grows = true;
    }
    if (!grows) return raw;

    const int W = raw.width(), H = raw.height();
    UVMap out = raw;
    Mask known(raw.cells(), 0);
    for (std::size_t i = 0; i < raw.cells(); ++i) known[i] = raw.silhouette[i] && raw.uv.valid_index(i) ? 1 : 0;
    out.silhouette.assign(full_mask.begin(), full_mask.end());
    for (auto& m : out.silhouette) m = m ? 1 : 0;
    out.uv.set_mask(known);

    if (raw.has_parts()) {
        // The nearest labeled pixel always has an unlabeled 4-neighbour (or the
        // border) towards the query, so only those boundary pixels are scanned.
        auto labeled = [&](int x, int y) {
            return x >= 0 && y >= 0 && x < W && y < H && raw.silhouette[raw.uv.index(x, y)] &&
                   raw.part[raw.uv.index(x, y)] > 0;
        };
        struct Seed {
            int x, y, part;
        };
        std::vector<Seed> seeds;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (labeled(x, y) &&
                    (!labeled(x - 1, y) || !labeled(x + 1, y) || !labeled(x, y - 1) || !labeled(x, y + 1))) {
                    seeds.push_back({x, y, raw.part[raw.uv.index(x, y)]});
                }
        if (seeds.empty()) throw ValidationError("label_fill: raw UV map has no labeled pixels");
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t i = raw.uv.index(x, y);
                if (!out.silhouette[i] || raw.silhouette[i]) continue;
                long best = std::numeric_limits<long>::max();
                int part = 0;
                for (const Seed& s : seeds) {
                    const long d = static_cast<long>(s.x - x) * (s.x - x) + static_cast<long>(s.y - y) * (s.y - y);
                    if (d < best || (d == best && s.part < part)) {
                        best = d;
                        part = s.part;
                    }
                }
                out.part[i] = static_cast<std::uint8_t>(part);
            }
        }
    }
    return out;
}

Extrapolation extrapolate_uv(const UVMap& labeled) {
    labeled.validate();
    const int W = labeled.width(), H = labeled.height();
    Extrapolation r{labeled, {}};
    UVMap& P = r.uv;
    Mask known(P.cells(), 0);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < P.cells(); ++i) {
        if (!P.silhouette[i]) continue;
        if (P.uv.valid_index(i)) known[i] = 1;
        else todo.push_back(i);
    }
    P.uv.clear_mask();
    if (todo.empty()) return r;

    if (P.has_parts()) {
        std::array<bool, kPartCount + 1> has_known{}, needed{};
        for (std::size_t i = 0; i < P.cells(); ++i) {
            if (known[i]) has_known[P.part[i]] = true;
        }
        for (std::size_t i : todo) needed[P.part[i]] = true;
        for (int p = 0; p <= kPartCount; ++p) {
            if (needed[p] && !has_known[p]) throw ValidationError("extrapolate_uv: no known UVs for part " + std::to_string(p));
        }
    } else if (std::find(known.begin(), known.end(), 1) == known.end()) {
        throw ValidationError("extrapolate_uv: no known UVs");
    }

    struct Fill {
        std::size_t i;
        double u, v;
    };
    std::vector<UvSample> window;
    for (;;) {
        std::vector<Fill> fills;
        std::vector<std::size_t> rest;
        for (std::size_t i : todo) {
            const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
            window.clear();
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if ((dx == 0 && dy == 0) || xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
                    const std::size_t j = P.uv.index(xx, yy);
                    if (!known[j] || P.part_index(j) != P.part_index(i)) continue;
                    window.push_back({{double(dx), double(dy)}, {P.uv.at_index(j, 0), P.uv.at_index(j, 1)}});
                }
            if (window.size() < 2) {
                rest.push_back(i);
                continue;
            }
            const Fit2 f = fit_linear(window);
            fills.push_back({i, f.mean_v[0] - f.B[0][0] * f.mean_d.x - f.B[0][1] * f.mean_d.y,
                             f.mean_v[1] - f.B[1][0] * f.mean_d.x - f.B[1][1] * f.mean_d.y});
        }
        if (fills.empty()) break;
        for (const Fill& f : fills) {
            P.uv.at_index(f.i, 0) = f.u;
            P.uv.at_index(f.i, 1) = f.v;
            known[f.i] = 1;
            r.new_points.push_back(f.i);
        }
        todo.swap(rest);
        if (todo.empty()) break;
    }

    // Islands no sweep could reach take the nearest known texture location.
    if (!todo.empty()) {
        std::vector<std::size_t> sources;
        for (std::size_t i = 0; i < P.cells(); ++i)
            if (known[i]) sources.push_back(i);
        std::vector<std::pair<std::size_t, Coord>> copies;
        for (std::size_t i : todo) {
            const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
            long best = std::numeric_limits<long>::max();
            std::size_t src = sources.front();
            for (std::size_t j : sources) {
                if (P.part_index(j) != P.part_index(i)) continue;
                const int sx = static_cast<int>(j % W), sy = static_cast<int>(j / W);
                const long d = static_cast<long>(sx - x) * (sx - x) + static_cast<long>(sy - y) * (sy - y);
                if (d < best) {
                    best = d;
                    src = j;
                }
            }
            copies.emplace_back(i, P.local_coord(static_cast<int>(src % W), static_cast<int>(src / W)));
        }
        for (const auto& [i, local] : copies) {
            const Coord c = pixel_center(static_cast<int>(i % W), static_cast<int>(i / W), W, H);
            P.uv.at_index(i, 0) = c.x - local.x;
            P.uv.at_index(i, 1) = c.y - local.y;
            r.new_points.push_back(i);
        }
    }
    return r;
}

double spring_distortion(const SpringSystem& s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const SpringPoint& p : s.points)
        for (const Spring& k : p.springs) {
            const double len = std::hypot(p.pos.x - k.anchor.x, p.pos.y - k.anchor.y);
            sum += std::abs(len - k.rest) / k.rest;
            ++n;
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

Coord spring_force(const SpringPoint& p, SpringPhase phase) {
    Coord f{};
    int active = 0;
    for (const Spring& k : p.springs) {
        const double dx = p.pos.x - k.anchor.x, dy = p.pos.y - k.anchor.y;
        const double len = std::hypot(dx, dy);
        const double ext = k.rest - len;  // > 0: compressed, pushes away
        if (phase == SpringPhase::push && ext <= 0.0) continue;
        if (phase == SpringPhase::pull && ext >= 0.0) continue;
        if (len <= 1e-12) continue;  // direction undefined
        f.x += ext * dx / len;
        f.y += ext * dy / len;
        ++active;
    }
    if (active == 0) return {};
    return {f.x / active, f.y / active};
}

RelaxReport relax_system(SpringSystem& s, const RelaxConfig& cfg) {
    RelaxReport rep;
    rep.points = s.points.size();
    for (const auto& p : s.points) {
        if (p.springs.empty()) throw ValidationError("relax: movable point without springs");
        for (const auto& k : p.springs)
            if (!(k.rest > 0.0)) throw ValidationError("relax: rest length must be positive");
        rep.springs += p.springs.size();
    }
    rep.distortion_before = spring_distortion(s);
    // Pure pushing first; then pulling is switched on as well, which lets the
    // point settle at the Hooke equilibrium instead of the inner edge of its
    // rest circles.
    for (SpringPoint& p : s.points) {
        for (SpringPhase phase : {SpringPhase::push, SpringPhase::both}) {
            int it = 0;
            for (;; ++it) {
                const Coord f = spring_force(p, phase);
                if (std::hypot(f.x, f.y) < cfg.force_tol) break;
                if (it == cfg.max_iters) {
                    rep.converged = false;
                    break;
                }
                p.pos.x += cfg.step * f.x;
                p.pos.y += cfg.step * f.y;
            }
            int& worst = phase == SpringPhase::push ? rep.push_iters : rep.pull_iters;
            worst = std::max(worst, it);
        }
        const Coord f = spring_force(p, SpringPhase::both);
        rep.max_force = std::max(rep.max_force, std::hypot(f.x, f.y));
    }
    rep.distortion_after = spring_distortion(s);
    return rep;
}

Relaxation relax_springs(const UVMap& extended, const std::vector<std::size_t>& new_points,
                         const RelaxConfig& cfg) {
    extended.validate();
    Relaxation out{extended, {}, {}};
    if (new_points.empty()) return out;
    const int W = extended.width(), H = extended.height();
    const int TW = cfg.tex_width > 0 ? cfg.tex_width : W;
    const int TH = cfg.tex_height > 0 ? cfg.tex_height : H;
    const double half = 0.5 * cfg.region;

    Mask is_new(extended.cells(), 0);
    for (std::size_t i : new_points) {
        if (i >= extended.cells() || !extended.silhouette[i]) throw ValidationError("relax_springs: bad new point");
        is_new[i] = 1;
    }
    struct Known {
        Coord texel, pixel;
        int part;
    };
    std::vector<Known> known;
    for (std::size_t i = 0; i < extended.cells(); ++i) {
        if (!extended.silhouette[i] || is_new[i]) continue;
        known.push_back({texel_of(extended, i, TW, TH), {double(i % W), double(i / W)}, extended.part_index(i)});
    }
    if (known.empty()) throw ValidationError("relax_springs: no known UVs to anchor to");

    // Local texel-per-pixel map: least squares fit texel ~ a + B pixel. A spring's
    // rest length is its image-space offset mapped through B.
    using Jacobian = std::array<std::array<double, 2>, 2>;
    auto jacobian_of = [](const std::vector<const Known*>& pts, Jacobian& B) {
        if (pts.size() < 3) return false;
        std::vector<UvSample> s;
        s.reserve(pts.size());
        for (const Known* k : pts) s.push_back({k->pixel, {k->texel.x, k->texel.y}});
        const Fit2 f = fit_linear(s);
        const double det = f.B[0][0] * f.B[1][1] - f.B[0][1] * f.B[1][0];
        if (std::abs(det) < 1e-6) return false;
        B = f.B;
        return true;
    };
    std::array<Jacobian, kPartCount + 1> global{};
    for (int p = 0; p <= kPartCount; ++p) {
        std::vector<const Known*> pts;
        for (const Known& k : known)
            if (k.part == p) pts.push_back(&k);
        if (!jacobian_of(pts, global[p])) {
            global[p] = {{{static_cast<double>(TW) / W, 0.0}, {0.0, static_cast<double>(TH) / H}}};
        }
    }

    SpringSystem& sys = out.system;
    sys.points.reserve(new_points.size());
    std::vector<const Known*> near;
    for (std::size_t i : new_points) {
        const Coord o = texel_of(extended, i, TW, TH);
        const Coord px{double(i % W), double(i / W)};
        const int part = extended.part_index(i);
        near.clear();
        for (const Known& k : known) {
            if (k.part != part) continue;
            if (std::abs(k.texel.x - o.x) <= half && std::abs(k.texel.y - o.y) <= half) near.push_back(&k);
        }
        if (near.empty()) {
            // Nothing inside the region: tie to the nearest known entry of the part.
            const Known* best = nullptr;
            double bd = std::numeric_limits<double>::max();
            for (const Known& k : known) {
                if (k.part != part) continue;
                const double d = std::hypot(k.texel.x - o.x, k.texel.y - o.y);
                if (d < bd) {
                    bd = d;
                    best = &k;
                }
            }
            if (!best) throw ValidationError("relax_springs: no anchors for part " + std::to_string(part));
            near.push_back(best);
        }
        Jacobian B;
        if (!jacobian_of(near, B)) B = global[part];
        SpringPoint sp{o, {}};
        sp.springs.reserve(near.size());
        for (const Known* k : near) {
            const double dx = k->pixel.x - px.x, dy = k->pixel.y - px.y;
            sp.springs.push_back({k->texel, std::hypot(B[0][0] * dx + B[0][1] * dy, B[1][0] * dx + B[1][1] * dy)});
        }
        sys.points.push_back(std::move(sp));
    }

    out.report = relax_system(sys, cfg);

    for (std::size_t n = 0; n < new_points.size(); ++n) {
        const std::size_t i = new_points[n];
        const Coord t{sys.points[n].pos.x / TW, sys.points[n].pos.y / TH};
        const int part = extended.part_index(i);
        const Coord local = (extended.has_parts() && part > 0) ? AtlasLayout::to_local(part, t) : t;
        const Coord c = pixel_center(static_cast<int>(i % W), static_cast<int>(i / W), W, H);
        out.uv.uv.at_index(i, 0) = c.x - local.x;
        out.uv.uv.at_index(i, 1) = c.y - local.y;
    }
    return out;
}

}  // namespace uvweave
