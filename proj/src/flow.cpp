#include "uvweave/flow.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace uvweave {

void FlowConfig::validate() const {
    if (levels < 1) throw ValidationError("flow: levels must be at least 1");
    if (block < 4) throw ValidationError("flow: block must be at least 4");
    if (search < 0) throw ValidationError("flow: search radius must be non-negative");
}

double flow_reach(const FlowConfig& cfg) {
    // Each finer level doubles the prediction (rounded) and searches again.
    return cfg.search * (std::pow(2.0, cfg.levels) - 1.0) + std::pow(2.0, cfg.levels) + (cfg.subpixel ? 0.5 : 0.0);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 2x box reduction; a cell is valid when any of its sources is, and averages
// only valid sources.
Field2 reduce(const Field2& f) {
    const int w = (f.width() + 1) / 2;
    const int h = (f.height() + 1) / 2;
    const int nc = f.channels();
    Field2 out(w, h, nc);
    Mask valid(out.cells(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[8] = {};
            int n = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = 2 * x + dx, sy = 2 * y + dy;
                    if (sx >= f.width() || sy >= f.height() || !f.valid(sx, sy)) continue;
                    for (int c = 0; c < nc && c < 8; ++c) acc[c] += f.at(sx, sy, c);
                    ++n;
                }
            }
            if (n == 0) continue;
            valid[out.index(x, y)] = 1;
            for (int c = 0; c < nc && c < 8; ++c) out.at(x, y, c) = acc[c] / n;
        }
    }
    out.set_mask(std::move(valid));
    return out;
}

struct Block {
    int x0, y0, x1, y1;
};

double block_cost(const Field2& a, const Field2& b, const Block& bl, int dx, int dy) {
    const int nc = std::min(a.channels(), 3);
    double sum = 0.0;
    int n = 0;
    for (int y = bl.y0; y < bl.y1; ++y) {
        const int by = y + dy;
        if (by < 0 || by >= b.height()) continue;
        for (int x = bl.x0; x < bl.x1; ++x) {
            const int bx = x + dx;
            if (bx < 0 || bx >= b.width() || !a.valid(x, y) || !b.valid(bx, by)) continue;
            for (int c = 0; c < nc; ++c) {
                const double d = a.at(x, y, c) - b.at(bx, by, c);
                sum += d * d;
            }
            ++n;
        }
    }
    const int area = (bl.x1 - bl.x0) * (bl.y1 - bl.y0);
    if (n == 0 || 4 * n < area) return kInf;
    return sum / n;
}

double parabola(double cm, double c0, double cp) {
    if (!std::isfinite(cm) || !std::isfinite(cp)) return 0.0;
    const double den = cm - 2.0 * c0 + cp;
    if (!(den > 0.0)) return 0.0;
    return std::clamp(0.5 * (cm - cp) / den, -0.5, 0.5);
}

// Block vectors (normalized units) on a grid of nbx x nby blocks.
Field2 match_level(const Field2& a, const Field2& b, const Field2* prior, const FlowConfig& cfg, bool refine) {
    const int w = a.width(), h = a.height();
    const int B = cfg.block, r = cfg.search;
    const int nbx = (w + B - 1) / B, nby = (h + B - 1) / B;
    Field2 out(nbx, nby, 2);
    for (int j = 0; j < nby; ++j) {
        for (int i = 0; i < nbx; ++i) {
            const Block bl{i * B, j * B, std::min(w, (i + 1) * B), std::min(h, (j + 1) * B)};
            int px = 0, py = 0;
            if (prior) {
                const Coord c{0.5 * (bl.x0 + bl.x1) / w, 0.5 * (bl.y0 + bl.y1) / h};
                const Sample s = sample_bilinear(*prior, c);
                px = static_cast<int>(std::lround(s.value[0] * w));
                py = static_cast<int>(std::lround(s.value[1] * h));
            }
            double best = kInf;
            int bx = px, by = py;
            long bestd = std::numeric_limits<long>::max();
            for (int dy = py - r; dy <= py + r; ++dy) {
                for (int dx = px - r; dx <= px + r; ++dx) {
                    const double c = block_cost(a, b, bl, dx, dy);
                    const long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
                    if (c < best || (c == best && std::isfinite(c) && d2 < bestd)) {
                        best = c;
                        bestd = d2;
                        bx = dx;
                        by = dy;
                    }
                }
            }
            double fx = bx, fy = by;
            // An exact match is already exact; the parabola would only add bias.
            if (refine && std::isfinite(best) && best > 0.0) {
                fx += parabola(block_cost(a, b, bl, bx - 1, by), best, block_cost(a, b, bl, bx + 1, by));
                fy += parabola(block_cost(a, b, bl, bx, by - 1), best, block_cost(a, b, bl, bx, by + 1));
            }
            out.at(i, j, 0) = fx / w;
            out.at(i, j, 1) = fy / h;
        }
    }
    return out;
}

// Per-cell field from block vectors, interpolated between block centers.
Field2 densify(const Field2& blocks, int w, int h, int B) {
    Field2 out(w, h, 2);
    const double gw = static_cast<double>(blocks.width()) * B;
    const double gh = static_cast<double>(blocks.height()) * B;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Sample s = sample_bilinear(blocks, {(x + 0.5) / gw, (y + 0.5) / gh});
            out.at(x, y, 0) = s.value[0];
            out.at(x, y, 1) = s.value[1];
        }
    }
    return out;
}

}  // namespace

FlowField block_flow(const Field2& a, const Field2& b, const FlowConfig& cfg) {
    cfg.validate();
    if (a.width() != b.width() || a.height() != b.height()) throw ValidationError("block_flow: resolution mismatch");
    if (a.channels() != 3 || b.channels() != 3) throw ValidationError("block_flow: expects 3-channel inputs");
    if (a.empty()) throw ValidationError("block_flow: empty input");

    std::vector<Field2> pa{a}, pb{b};
    for (int l = 1; l < cfg.levels; ++l) {
        if (pa.back().width() < 2 * cfg.block || pa.back().height() < 2 * cfg.block) break;
        pa.push_back(reduce(pa.back()));
        pb.push_back(reduce(pb.back()));
    }
    Field2 prior;
    bool have_prior = false;
    for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
        const Field2 blocks = match_level(pa[l], pb[l], have_prior ? &prior : nullptr, cfg, cfg.subpixel && l == 0);
        prior = densify(blocks, pa[l].width(), pa[l].height(), cfg.block);
        have_prior = true;
    }
    FlowField out;
    out.displacement = std::move(prior);
    return out;
}

}  // namespace uvweave
