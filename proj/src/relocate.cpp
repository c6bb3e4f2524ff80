#include "uvweave/relocate.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace uvweave {

std::size_t Correspondence::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

void Correspondence::validate() const {
    if (target.channels() != 2) throw ValidationError("correspondence: target needs 2 channels");
    if (valid.size() != target.cells() || domain.size() != target.cells())
        throw ValidationError("correspondence: mask size mismatch");
    for (std::size_t i = 0; i < target.cells(); ++i) {
        if (!valid[i]) continue;
        if (!domain[i]) throw ValidationError("correspondence: valid entry outside the domain");
        if (!std::isfinite(target.at_index(i, 0)) || !std::isfinite(target.at_index(i, 1)))
            throw ValidationError("correspondence: non-finite target");
    }
}

Correspondence identity_correspondence(int width, int height, Mask valid) {
    if (width <= 0 || height <= 0) throw ValidationError("correspondence: empty grid");
    Correspondence q;
    q.target = Field2(width, height, 2);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Coord c = pixel_center(x, y, width, height);
            q.target.at(x, y, 0) = c.x;
            q.target.at(x, y, 1) = c.y;
        }
    }
    if (valid.empty()) valid.assign(q.target.cells(), 1);
    if (valid.size() != q.target.cells()) throw ValidationError("correspondence: mask size mismatch");
    q.valid = valid;
    q.domain = std::move(valid);
    return q;
}

Correspondence init_correspondence(const Correspondence& q0, const FlowField& flow, const Mask& domain) {
    q0.validate();
    const int w = q0.width(), h = q0.height();
    if (flow.width() != w || flow.height() != h) throw ValidationError("init_correspondence: flow resolution mismatch");
    if (!domain.empty() && domain.size() != q0.target.cells())
        throw ValidationError("init_correspondence: domain size mismatch");
    Correspondence out;
    out.target = Field2(w, h, 2);
    out.valid.assign(out.target.cells(), 0);
    out.domain = domain.empty() ? Mask(out.target.cells(), 1) : domain;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = out.target.index(x, y);
            const Coord c = pixel_center(x, y, w, h);
            const Coord p{c.x + flow.displacement.at(x, y, 0), c.y + flow.displacement.at(x, y, 1)};
            const BilinearStencil s = locate(p, w, h);
            const auto cells = s.cells(w);
            const auto wt = s.weights();
            double acc[2] = {}, wsum = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (!q0.valid[cells[k]] || wt[k] <= 0.0) continue;
                acc[0] += wt[k] * q0.target.at_index(cells[k], 0);
                acc[1] += wt[k] * q0.target.at_index(cells[k], 1);
                wsum += wt[k];
            }
            if (wsum > 0.0) {
                out.target.at_index(i, 0) = acc[0] / wsum;
                out.target.at_index(i, 1) = acc[1] / wsum;
                out.valid[i] = out.domain[i];
            } else {
                // Keep a finite placeholder; patch_fill replaces it.
                out.target.at_index(i, 0) = c.x;
                out.target.at_index(i, 1) = c.y;
            }
        }
    }
    return out;
}

Correspondence prune_mismatch(const Correspondence& qr, const Field2& T_o, const Field2& T_t, double tau) {
    if (!(tau >= 0.0)) throw ValidationError("prune_mismatch: tau must be non-negative");
    if (T_t.width() != qr.width() || T_t.height() != qr.height())
        throw ValidationError("prune_mismatch: frame texture resolution mismatch");
    if (T_o.channels() != T_t.channels()) throw ValidationError("prune_mismatch: channel mismatch");
    Correspondence out = qr;
    const int nc = std::min(T_t.channels(), 4);
    for (std::size_t i = 0; i < out.target.cells(); ++i) {
        if (!out.valid[i]) continue;
        const Sample s = sample_bilinear(T_o, {out.target.at_index(i, 0), out.target.at_index(i, 1)});
        double d2 = 0.0;
        for (int c = 0; c < nc; ++c) {
            const double d = s.value[c] - T_t.at_index(i, c);
            d2 += d * d;
        }
        if (std::sqrt(d2) > tau) out.valid[i] = 0;
    }
    return out;
}

void PatchConfig::validate() const {
    if (patch < 1) throw ValidationError("patch_fill: patch must be positive");
    if (window < 1 || window % 2 == 0) throw ValidationError("patch_fill: window must be odd");
    if (stride < 1 || stride > patch) throw ValidationError("patch_fill: stride must be in [1, patch]");
}

namespace {

// Tile origins along one axis: multiples of stride, plus the last full fit.
std::vector<int> tile_origins(int n, int patch, int stride) {
    std::vector<int> out;
    const int last = std::max(0, n - patch);
    for (int o = 0; o < last; o += stride) out.push_back(o);
    out.push_back(last);
    return out;
}

}  // namespace

Correspondence patch_fill(const Correspondence& qc, const Field2& T_o, const Field2& T_t, const Correspondence& q0,
                          const PatchConfig& cfg) {
    cfg.validate();
    qc.validate();
    const int w = qc.width(), h = qc.height();
    if (T_t.width() != w || T_t.height() != h || T_o.width() != w || T_o.height() != h || q0.width() != w ||
        q0.height() != h)
        throw ValidationError("patch_fill: resolution mismatch");
    Correspondence out = qc;
    const std::size_t n = out.target.cells();
    Mask todo(n, 0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        todo[i] = out.domain[i] && !out.valid[i];
        any = any || todo[i];
    }
    if (!any) return out;

    const int pw = std::min(cfg.patch, w), ph = std::min(cfg.patch, h);
    const int half = cfg.window / 2;
    const int nc = std::min({T_t.channels(), T_o.channels(), 3});
    std::vector<double> acc(2 * n, 0.0);
    std::vector<int> cnt(n, 0);

    for (int ay : tile_origins(h, ph, cfg.stride)) {
        for (int ax : tile_origins(w, pw, cfg.stride)) {
            bool needed = false;
            for (int y = ay; y < ay + ph && !needed; ++y)
                for (int x = ax; x < ax + pw && !needed; ++x) needed = todo[out.target.index(x, y)];
            if (!needed) continue;

            double best = std::numeric_limits<double>::infinity();
            long bestd = std::numeric_limits<long>::max();
            int bx = ax, by = ay;
            for (int oy = std::max(0, ay - half); oy <= std::min(h - ph, ay + half); ++oy) {
                for (int ox = std::max(0, ax - half); ox <= std::min(w - pw, ax + half); ++ox) {
                    double ssd = 0.0;
                    for (int y = 0; y < ph && ssd <= best; ++y) {
                        for (int x = 0; x < pw; ++x) {
                            for (int c = 0; c < nc; ++c) {
                                const double d = T_t.at(ax + x, ay + y, c) - T_o.at(ox + x, oy + y, c);
                                ssd += d * d;
                            }
                        }
                    }
                    const long d2 = static_cast<long>(ox - ax) * (ox - ax) + static_cast<long>(oy - ay) * (oy - ay);
                    if (ssd < best || (ssd == best && d2 < bestd)) {
                        best = ssd;
                        bestd = d2;
                        bx = ox;
                        by = oy;
                    }
                }
            }
            for (int y = 0; y < ph; ++y) {
                for (int x = 0; x < pw; ++x) {
                    const std::size_t a = out.target.index(ax + x, ay + y);
                    const std::size_t b = out.target.index(bx + x, by + y);
                    if (!todo[a] || !q0.valid[b]) continue;
                    acc[2 * a] += q0.target.at_index(b, 0);
                    acc[2 * a + 1] += q0.target.at_index(b, 1);
                    ++cnt[a];
                }
            }
        }
    }

    Mask seeds(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (todo[i] && cnt[i] > 0) {
            out.target.at_index(i, 0) = acc[2 * i] / cnt[i];
            out.target.at_index(i, 1) = acc[2 * i + 1] / cnt[i];
            out.valid[i] = 1;
        }
        seeds[i] = out.valid[i];
    }
    // Tiles whose donor carried no valid Q0 entry: nearest filled texel.
    const auto near = nearest_seed(w, h, seeds);
    for (std::size_t i = 0; i < n; ++i) {
        if (!todo[i] || out.valid[i] || near[i] < 0) continue;
        const auto s = static_cast<std::size_t>(near[i]);
        out.target.at_index(i, 0) = out.target.at_index(s, 0);
        out.target.at_index(i, 1) = out.target.at_index(s, 1);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (todo[i] && near[i] >= 0) out.valid[i] = 1;
    return out;
}

namespace {

// Target field with invalid entries copied from the nearest valid one, so that
// bilinear lookups near the domain edge stay meaningful.
Field2 dense_target(const Correspondence& q) {
    Field2 t = q.target;
    const auto near = nearest_seed(q.width(), q.height(), q.valid);
    for (std::size_t i = 0; i < t.cells(); ++i) {
        if (q.valid[i] || near[i] < 0) continue;
        const auto s = static_cast<std::size_t>(near[i]);
        t.at_index(i, 0) = q.target.at_index(s, 0);
        t.at_index(i, 1) = q.target.at_index(s, 1);
    }
    return t;
}

}  // namespace

Field2 apply_correspondence(const Field2& T_o, const Correspondence& q) {
    q.validate();
    const Field2 t = dense_target(q);
    Field2 out(q.width(), q.height(), T_o.channels());
    const int nc = std::min(T_o.channels(), 4);
    for (std::size_t i = 0; i < out.cells(); ++i) {
        const Sample s = sample_bilinear(T_o, {t.at_index(i, 0), t.at_index(i, 1)});
        for (int c = 0; c < nc; ++c) out.at_index(i, c) = s.value[c];
    }
    out.set_mask(q.valid);
    return out;
}

UVMap to_image_uv(const Correspondence& qt, const UVMap& P_o) {
    qt.validate();
    P_o.validate();
    if (qt.valid_count() == 0) throw ValidationError("to_image_uv: correspondence has no valid entry");
    const Field2 t = dense_target(qt);
    UVMap out = P_o;
    for (int y = 0; y < P_o.height(); ++y) {
        for (int x = 0; x < P_o.width(); ++x) {
            if (!P_o.fg(x, y)) continue;
            const Sample s = sample_bilinear(t, P_o.texture_coord(x, y));
            Coord q{s.value[0], s.value[1]};
            const std::size_t i = P_o.uv.index(x, y);
            if (P_o.has_parts()) q = AtlasLayout::to_local(P_o.part[i], q);
            const Coord c = pixel_center(x, y, P_o.width(), P_o.height());
            out.uv.at_index(i, 0) = c.x - q.x;
            out.uv.at_index(i, 1) = c.y - q.y;
        }
    }
    return out;
}

Field2 unwrap_texture(const Field2& image, const UVMap& P, int tex_width, int tex_height) {
    return warp(image, texture_grid(P, tex_width, tex_height));
}

FrameRelocation relocate_frame(const Field2& T_o, const Correspondence& q0, const Field2& T_t, const UVMap& P_o,
                               const RelocateConfig& cfg, const FlowField* flow) {
    if (T_t.width() != T_o.width() || T_t.height() != T_o.height())
        throw ValidationError("relocate: texture resolution mismatch");
    Mask domain = T_t.has_mask() ? T_t.mask() : Mask(T_t.cells(), 1);
    FrameRelocation r;
    r.q_init = init_correspondence(q0, flow ? *flow : block_flow(T_t, T_o, cfg.flow), domain);
    r.q_pruned = prune_mismatch(r.q_init, T_o, T_t, cfg.tau);
    const std::size_t before = r.q_init.valid_count();
    r.pruned_fraction =
        before ? 1.0 - static_cast<double>(r.q_pruned.valid_count()) / static_cast<double>(before) : 0.0;
    r.q = patch_fill(r.q_pruned, T_o, T_t, q0, cfg.patch);
    r.uv = to_image_uv(r.q, P_o);
    return r;
}

}  // namespace uvweave
