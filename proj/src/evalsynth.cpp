#include "uvweave/evalsynth.hpp"

#include "uvweave/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uvweave {

namespace {

// Bilinear fetch with the arithmetic written out so the counters are honest.
struct Fetcher {
    const Field2& T;
    RenderStats* stats;

    void operator()(Coord p, double* out) const {
        const BilinearStencil s = locate(p, T.width(), T.height());
        const int w = T.width();
        const int nc = T.channels();
        const double* base = T.data().data();
        const double* r0 = base + static_cast<std::size_t>(s.y.i0) * w * nc;
        const double* r1 = base + static_cast<std::size_t>(s.y.i1) * w * nc;
        const double* v00 = r0 + static_cast<std::size_t>(s.x.i0) * nc;
        const double* v10 = r0 + static_cast<std::size_t>(s.x.i1) * nc;
        const double* v01 = r1 + static_cast<std::size_t>(s.x.i0) * nc;
        const double* v11 = r1 + static_cast<std::size_t>(s.x.i1) * nc;
        const double ax = 1.0 - s.x.t, ay = 1.0 - s.y.t;
        for (int c = 0; c < nc; ++c) {
            const double top = ax * v00[c] + s.x.t * v10[c];
            const double bottom = ax * v01[c] + s.x.t * v11[c];
            out[c] = ay * top + s.y.t * bottom;
        }
        if (stats) {
            stats->fetches += 1;
            stats->texel_reads += 4;
            stats->madds += 6 * static_cast<std::uint64_t>(nc);
        }
    }
};

void check_same_shape(const UVMap& a, const UVMap& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) throw ValidationError(std::string(what) + ": dimension mismatch");
}

}  // namespace

Field2 render_lookup(const Field2& T, const UVMap& P, RenderStats* stats) {
    if (T.empty()) throw ValidationError("render: empty texture");
    if (stats) *stats = RenderStats{0, 0, 0, 0, T.channels()};
    Field2 out(P.width(), P.height(), T.channels());
    const Fetcher fetch{T, stats};
    for (int y = 0; y < P.height(); ++y) {
        for (int x = 0; x < P.width(); ++x) {
            if (!P.fg(x, y)) continue;
            fetch(P.texture_coord(x, y), &out.at(x, y, 0));
            if (stats) ++stats->pixels;
        }
    }
    return out;
}

Field2 composite_parts(const UVMap& P, const Field2& T_const, const Field2& T_frame, const std::set<int>& reuse) {
    if (!P.has_parts()) throw ValidationError("composite_parts: UV map has no part channel");
    if (T_const.channels() != T_frame.channels()) throw ValidationError("composite_parts: channel mismatch");
    Field2 out(P.width(), P.height(), T_const.channels());
    const Fetcher from_const{T_const, nullptr}, from_frame{T_frame, nullptr};
    for (int y = 0; y < P.height(); ++y) {
        for (int x = 0; x < P.width(); ++x) {
            if (!P.fg(x, y)) continue;
            const bool frame = reuse.count(P.part[P.uv.index(x, y)]) > 0;
            (frame ? from_frame : from_const)(P.texture_coord(x, y), &out.at(x, y, 0));
        }
    }
    return out;
}

double loss_l2(const UVMap& a, const UVMap& b) {
    check_same_shape(a, b, "loss_l2");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.cells(); ++i) {
        if (!a.fg_index(i) && !b.fg_index(i)) continue;
        for (int c = 0; c < 2; ++c) {
            const double d = a.uv.at_index(i, c) - b.uv.at_index(i, c);
            sum += d * d;
        }
    }
    return sum;
}

double loss_smo(const UVMap& prev, const UVMap& cur, const UVMap& next) {
    check_same_shape(prev, cur, "loss_smo");
    check_same_shape(cur, next, "loss_smo");
    double sum = 0.0;
    for (std::size_t i = 0; i < cur.cells(); ++i) {
        if (!prev.fg_index(i) && !cur.fg_index(i) && !next.fg_index(i)) continue;
        for (int c = 0; c < 2; ++c) {
            const double m = prev.uv.at_index(i, c), p = cur.uv.at_index(i, c), n = next.uv.at_index(i, c);
            const double a = m - p, b = p - n, s = m - 2.0 * p + n;
            sum += a * a + b * b + s * s;
        }
    }
    return sum;
}

double loss_img_s(const UVMap& P, const Field2& T_o, const Field2& I) {
    if (I.width() != P.width() || I.height() != P.height()) throw ValidationError("loss_img_s: image size mismatch");
    if (I.channels() != T_o.channels()) throw ValidationError("loss_img_s: channel mismatch");
    const Field2 r = render_lookup(T_o, P);
    double sum = 0.0;
    for (std::size_t i = 0; i < P.cells(); ++i) {
        if (!P.fg_index(i)) continue;
        for (int c = 0; c < I.channels(); ++c) {
            const double d = r.at_index(i, c) - I.at_index(i, c);
            sum += d * d;
        }
    }
    return sum;
}

double loss_ce(const Field2& scores, const std::vector<std::uint8_t>& reference) {
    if (scores.cells() != reference.size()) throw ValidationError("loss_ce: size mismatch");
    if (scores.cells() == 0) throw ValidationError("loss_ce: empty input");
    const int k = scores.channels();
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.cells(); ++i) {
        if (reference[i] >= k) throw ValidationError("loss_ce: reference class out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) mx = std::max(mx, scores.at_index(i, c));
        double z = 0.0;
        for (int c = 0; c < k; ++c) z += std::exp(scores.at_index(i, c) - mx);
        sum += mx + std::log(z) - scores.at_index(i, reference[i]);
    }
    return sum / static_cast<double>(scores.cells());
}

double metric_psnr(const Field2& a, const Field2& b, const Mask& mask) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
        throw ValidationError("psnr: dimension mismatch");
    if (!mask.empty() && mask.size() != a.cells()) throw ValidationError("psnr: mask size mismatch");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.cells(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        for (int c = 0; c < a.channels(); ++c) {
            const double d = a.at_index(i, c) - b.at_index(i, c);
            se += d * d;
        }
        n += static_cast<std::size_t>(a.channels());
    }
    if (n == 0) throw ValidationError("psnr: empty foreground");
    const double mse = se / static_cast<double>(n);
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

Field2 uv_motion(const UVMap& P_t, const UVMap& P_next, int tex_width, int tex_height) {
    check_same_shape(P_t, P_next, "uv_motion");
    const int w = P_t.width(), h = P_t.height();
    Field2 c_img(w, h, 2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Coord c = pixel_center(x, y, w, h);
            c_img.at(x, y, 0) = c.x;
            c_img.at(x, y, 1) = c.y;
        }
    Field2 a = warp(c_img, texture_grid(P_t, tex_width, tex_height));
    const Field2 b = warp(c_img, texture_grid(P_next, tex_width, tex_height));
    a.clear_mask();
    for (std::size_t i = 0; i < a.data().size(); ++i) a.data()[i] = b.data()[i] - a.data()[i];
    Field2 v = warp(a, image_grid(P_next));
    v.clear_mask();
    for (std::size_t i = 0; i < v.cells(); ++i) {
        if (!P_next.fg_index(i)) {
            v.at_index(i, 0) = v.at_index(i, 1) = 0.0;
            continue;
        }
        v.at_index(i, 0) *= w;
        v.at_index(i, 1) *= h;
    }
    return v;
}

double metric_tdiff(const std::vector<Field2>& frames, const std::vector<UVMap>& uvs, int tex_width, int tex_height) {
    if (frames.size() < 2) throw ValidationError("t-diff needs >=2 frames");
    if (frames.size() != uvs.size()) throw ValidationError("t-diff: frame and UV counts differ");
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
        const Field2& cur = frames[t];
        const Field2& next = frames[t + 1];
        const UVMap& P = uvs[t + 1];
        if (cur.width() != P.width() || next.width() != P.width() || cur.height() != P.height() ||
            next.height() != P.height())
            throw ValidationError("t-diff: frame size mismatch");
        const Field2 v = uv_motion(uvs[t], P, tex_width, tex_height);
        const int w = P.width(), h = P.height(), nc = cur.channels();
        double sum = 0.0;
        std::size_t n = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!P.fg(x, y)) continue;
                const Coord c = pixel_center(x, y, w, h);
                const BilinearStencil s = locate({c.x - v.at(x, y, 0) / w, c.y - v.at(x, y, 1) / h}, w, h);
                double d = 0.0;
                for (int ch = 0; ch < nc; ++ch) d += std::abs(next.at(x, y, ch) - blend(cur, s, ch));
                sum += d / nc;
                ++n;
            }
        }
        total += n ? sum / static_cast<double>(n) : 0.0;
    }
    return total / static_cast<double>(frames.size() - 1);
}

double metric_tof(const std::vector<Field2>& real, const std::vector<Field2>& gen, const FlowConfig& cfg) {
    if (real.size() != gen.size()) throw ValidationError("tOF: sequence length mismatch");
    if (real.size() < 2) throw ValidationError("tOF needs >=2 frames");
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < real.size(); ++t) {
        const FlowField fr = block_flow(real[t], real[t + 1], cfg);
        const FlowField fg = block_flow(gen[t], gen[t + 1], cfg);
        if (fr.width() != fg.width() || fr.height() != fg.height()) throw ValidationError("tOF: frame size mismatch");
        const int w = fr.width(), h = fr.height();
        double sum = 0.0;
        for (std::size_t i = 0; i < fr.displacement.cells(); ++i) {
            sum += std::abs(fr.displacement.at_index(i, 0) - fg.displacement.at_index(i, 0)) * w +
                   std::abs(fr.displacement.at_index(i, 1) - fg.displacement.at_index(i, 1)) * h;
        }
        total += sum / static_cast<double>(fr.displacement.cells());
    }
    return total / static_cast<double>(real.size() - 1);
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["psnr_mean"] = psnr_mean;
    j["psnr_min"] = psnr_min;
    j["psnr"] = psnr;
    j["t_diff"] = t_diff;
    j["t_diff_reference"] = "frame t+1";
    j["t_of"] = t_of;
    j["tlp"] = "unavailable";
    return j.dump(2);
}

MetricReport evaluate_sequence(const std::vector<Field2>& real, const std::vector<Mask>& masks,
                               const std::vector<Field2>& gen, const std::vector<UVMap>& uvs, int tex_width,
                               int tex_height, const FlowConfig& flow) {
    if (real.size() != gen.size() || real.size() != masks.size() || real.size() != uvs.size())
        throw ValidationError("metrics: sequence length mismatch");
    if (real.empty()) throw ValidationError("metrics: empty sequence");
    MetricReport r;
    for (std::size_t t = 0; t < real.size(); ++t) r.psnr.push_back(metric_psnr(gen[t], real[t], masks[t]));
    double s = 0.0;
    for (double p : r.psnr) s += p;
    r.psnr_mean = s / static_cast<double>(r.psnr.size());
    r.psnr_min = *std::min_element(r.psnr.begin(), r.psnr.end());
    if (real.size() >= 2) {
        r.t_diff = metric_tdiff(gen, uvs, tex_width, tex_height);
        r.t_of = metric_tof(real, gen, flow);
    }
    return r;
}

}  // namespace uvweave
