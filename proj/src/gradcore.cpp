#include "uvweave/gradcore.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace uvweave {

namespace {

TextureSize resolve(TextureSize tex, const UVMap& P) {
    if (tex.width <= 0) tex.width = P.width();
    if (tex.height <= 0) tex.height = P.height();
    return tex;
}

void check_inputs(const UVMap& P, const Field2& I) {
    if (I.width() != P.width() || I.height() != P.height()) {
        throw ValidationError("resolution mismatch between UV map and reference image");
    }
}

struct Forward {
    TextureSize tex;
    detail::SplatTrace trace;
    WarpGrid grid;
    std::vector<BilinearStencil> texel_stencil;  // lookup of each texel into I
    Field2 texture;
    Field2 recon;  // I' on the foreground, zero elsewhere
    double loss = 0.0;
};

Forward run_forward(const UVMap& P, const Field2& I, TextureSize tex) {
    check_inputs(P, I);
    Forward f;
    f.tex = resolve(tex, P);
    f.grid = detail::texture_grid_traced(P, f.tex.width, f.tex.height, &f.trace);
    const int nc = I.channels();
    f.texture = Field2(f.tex.width, f.tex.height, nc);
    f.texel_stencil.resize(f.texture.cells());
    for (std::size_t k = 0; k < f.texture.cells(); ++k) {
        const Coord t{f.grid.target.at_index(k, 0), f.grid.target.at_index(k, 1)};
        f.texel_stencil[k] = locate(t, I.width(), I.height());
        for (int c = 0; c < nc; ++c) f.texture.at_index(k, c) = blend(I, f.texel_stencil[k], c);
    }
    f.recon = Field2(I.width(), I.height(), nc);
    double loss = 0.0;
    for (const auto& e : f.trace.entries) {
        for (int c = 0; c < nc; ++c) {
            const double v = blend(f.texture, e.stencil, c);
            f.recon.at_index(e.pixel, c) = v;
            const double r = v - I.at_index(e.pixel, c);
            loss += r * r;
        }
    }
    f.loss = loss;
    return f;
}

// d weight_k / d t for the 00, 10, 01, 11 corners.
struct WeightDerivs {
    std::array<double, 4> dtx;
    std::array<double, 4> dty;
};

WeightDerivs weight_derivs(const BilinearStencil& s) {
    const double tx = s.x.t;
    const double ty = s.y.t;
    return {{-(1.0 - ty), (1.0 - ty), -ty, ty}, {-(1.0 - tx), -tx, (1.0 - tx), tx}};
}

void add_app_gradient(const UVMap& P, const Field2& I, const Forward& f, Field2& grad) {
    const int nc = I.channels();
    const int tw = f.tex.width;
    const int th = f.tex.height;
    const std::size_t ntex = f.texture.cells();
    std::vector<double> g_tex(ntex * nc, 0.0);
    std::vector<double> gu_x(P.cells(), 0.0), gu_y(P.cells(), 0.0);

    // Residual -> direct term and texture adjoint.
    for (const auto& e : f.trace.entries) {
        const auto cells = e.stencil.cells(tw);
        const auto w = e.stencil.weights();
        for (int c = 0; c < nc; ++c) {
            const double r = 2.0 * (f.recon.at_index(e.pixel, c) - I.at_index(e.pixel, c));
            if (r == 0.0) continue;
            const BlendGradient bg = blend_gradient(f.texture, e.stencil, c);
            gu_x[e.pixel] += r * bg.dx;
            gu_y[e.pixel] += r * bg.dy;
            for (int k = 0; k < 4; ++k) g_tex[cells[k] * nc + c] += w[k] * r;
        }
    }

    // Texture adjoint -> adjoint of each covered texel's target location.
    std::vector<double> gt_x(ntex, 0.0), gt_y(ntex, 0.0);
    for (std::size_t k = 0; k < ntex; ++k) {
        if (!(f.trace.weight_sum[k] > 0.0)) continue;
        double ax = 0.0;
        double ay = 0.0;
        for (int c = 0; c < nc; ++c) {
            const double g = g_tex[k * nc + c];
            if (g == 0.0) continue;
            const BlendGradient bg = blend_gradient(I, f.texel_stencil[k], c);
            ax += g * bg.dx;
            ay += g * bg.dy;
        }
        gt_x[k] = ax;
        gt_y[k] = ay;
    }

    // target_k = sum_p w_pk c_p / sum_p w_pk  =>  d target_k / d w_pk = (c_p - target_k) / den_k.
    for (const auto& e : f.trace.entries) {
        const auto cells = e.stencil.cells(tw);
        const WeightDerivs d = weight_derivs(e.stencil);
        const int px = static_cast<int>(e.pixel % P.width());
        const int py = static_cast<int>(e.pixel / P.width());
        const Coord cp = pixel_center(px, py, P.width(), P.height());
        double sx = 0.0;
        double sy = 0.0;
        for (int j = 0; j < 4; ++j) {
            const std::size_t k = cells[j];
            const double den = f.trace.weight_sum[k];
            if (!(den > 0.0)) continue;
            const double gw = (gt_x[k] * (cp.x - f.grid.target.at_index(k, 0)) +
                               gt_y[k] * (cp.y - f.grid.target.at_index(k, 1))) / den;
            sx += gw * d.dtx[j];
            sy += gw * d.dty[j];
        }
        if (!e.stencil.x.clamped) gu_x[e.pixel] += sx * tw;
        if (!e.stencil.y.clamped) gu_y[e.pixel] += sy * th;
    }

    // u = atlas(x - uv)  =>  d u / d uv = -scale.
    for (const auto& e : f.trace.entries) {
        const int px = static_cast<int>(e.pixel % P.width());
        const int py = static_cast<int>(e.pixel / P.width());
        const Coord s = P.texture_scale(px, py);
        grad.at_index(e.pixel, 0) -= s.x * gu_x[e.pixel];
        grad.at_index(e.pixel, 1) -= s.y * gu_y[e.pixel];
    }
}

// Accumulates the regularizer energy and (optionally) its gradient.
double accumulate_reg(const UVMap& P, double alpha1, double alpha2, Field2* grad) {
    const int w = P.width();
    const int h = P.height();
    if (w < 5 || h < 5) throw ValidationError("grad_reg: grid must be at least 5x5");
    auto in = [&](int x, int y) { return P.silhouette[static_cast<std::size_t>(y) * w + x] != 0; };
    double e = 0.0;
    for (int c = 0; c < 2; ++c) {
        auto v = [&](int x, int y) { return P.uv.at(x, y, c); };
        auto add = [&](int x, int y, double g) {
            if (grad) grad->at(x, y, c) += g;
        };
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!in(x, y)) continue;
                if (x + 1 < w && in(x + 1, y)) {
                    const double d = v(x + 1, y) - v(x, y);
                    e += alpha1 * d * d;
                    add(x + 1, y, 2.0 * alpha1 * d);
                    add(x, y, -2.0 * alpha1 * d);
                }
                if (y + 1 < h && in(x, y + 1)) {
                    const double d = v(x, y + 1) - v(x, y);
                    e += alpha1 * d * d;
                    add(x, y + 1, 2.0 * alpha1 * d);
                    add(x, y, -2.0 * alpha1 * d);
                }
                if (x > 0 && x + 1 < w && in(x - 1, y) && in(x + 1, y)) {
                    const double hxx = v(x - 1, y) - 2.0 * v(x, y) + v(x + 1, y);
                    e += alpha2 * hxx * hxx;
                    add(x - 1, y, 2.0 * alpha2 * hxx);
                    add(x, y, -4.0 * alpha2 * hxx);
                    add(x + 1, y, 2.0 * alpha2 * hxx);
                }
                if (y > 0 && y + 1 < h && in(x, y - 1) && in(x, y + 1)) {
                    const double hyy = v(x, y - 1) - 2.0 * v(x, y) + v(x, y + 1);
                    e += alpha2 * hyy * hyy;
                    add(x, y - 1, 2.0 * alpha2 * hyy);
                    add(x, y, -4.0 * alpha2 * hyy);
                    add(x, y + 1, 2.0 * alpha2 * hyy);
                }
                // H_xy and H_yx are equal, hence the factor 2.
                if (x + 1 < w && y + 1 < h && in(x + 1, y) && in(x, y + 1) && in(x + 1, y + 1)) {
                    const double hxy = v(x + 1, y + 1) - v(x + 1, y) - v(x, y + 1) + v(x, y);
                    e += 2.0 * alpha2 * hxy * hxy;
                    const double g = 4.0 * alpha2 * hxy;
                    add(x + 1, y + 1, g);
                    add(x + 1, y, -g);
                    add(x, y + 1, -g);
                    add(x, y, g);
                }
            }
        }
    }
    return e;
}

}  // namespace

Field2 reconstruct(const UVMap& P, const Field2& I, TextureSize tex) {
    return run_forward(P, I, tex).recon;
}

double loss_app(const UVMap& P, const Field2& I, TextureSize tex) {
    return run_forward(P, I, tex).loss;
}

LossReport grad_app(const UVMap& P, const Field2& I, TextureSize tex) {
    const Forward f = run_forward(P, I, tex);
    LossReport r;
    r.l_app = f.loss;
    r.grad = Field2(P.width(), P.height(), 2);
    add_app_gradient(P, I, f, r.grad);
    return r;
}

double loss_reg(const UVMap& P, double alpha1, double alpha2) {
    return accumulate_reg(P, alpha1, alpha2, nullptr);
}

LossReport grad_reg(const UVMap& P, double alpha1, double alpha2) {
    LossReport r;
    r.grad = Field2(P.width(), P.height(), 2);
    r.l_reg = accumulate_reg(P, alpha1, alpha2, &r.grad);
    return r;
}

LossReport grad_total(const UVMap& P, const Field2& I, double alpha1, double alpha2,
                      TextureSize tex) {
    const Forward f = run_forward(P, I, tex);
    LossReport r;
    r.l_app = f.loss;
    r.grad = Field2(P.width(), P.height(), 2);
    add_app_gradient(P, I, f, r.grad);
    r.l_reg = accumulate_reg(P, alpha1, alpha2, &r.grad);
    return r;
}

std::uint64_t sampling_signature(const UVMap& P, const Field2& I, TextureSize tex) {
    const Forward f = run_forward(P, I, tex);
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    auto mix_axis = [&](const AxisStencil& a) {
        mix(static_cast<std::uint64_t>(a.i0));
        mix(a.clamped ? 1u : 0u);
        // t == 0 exactly means a zero-weight corner, which changes coverage.
        mix(a.t == 0.0 ? 1u : 0u);
    };
    for (const auto& e : f.trace.entries) {
        mix(e.pixel);
        mix_axis(e.stencil.x);
        mix_axis(e.stencil.y);
    }
    for (std::size_t k = 0; k < f.texel_stencil.size(); ++k) {
        mix(f.trace.weight_sum[k] > 0.0 ? 1u : 0u);
        mix_axis(f.texel_stencil[k].x);
        mix_axis(f.texel_stencil[k].y);
    }
    return h;
}

GradCheckScene make_grad_check_scene(std::uint64_t seed, int size) {
    if (size < 5) throw ValidationError("grad-check scene must be at least 5x5");
    Rng rng(mix_seed(seed, 0x6772616463ULL));
    GradCheckScene s{UVMap(size, size), Field2(size, size, 3)};
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    struct Wave {
        double fx, fy, phase, amp;
    };
    for (int c = 0; c < 3; ++c) {
        std::array<Wave, 3> waves{};
        for (auto& wv : waves) {
            wv = {uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 2.0), uniform(rng, 0.0, kTwoPi),
                  uniform(rng, 0.1, 0.25)};
        }
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const Coord p = pixel_center(x, y, size, size);
                double v = 0.5;
                for (const auto& wv : waves) v += wv.amp * std::sin(kTwoPi * (wv.fx * p.x + wv.fy * p.y) + wv.phase);
                s.image.at(x, y, c) = v;
            }
        }
    }
    const double texel = 1.0 / size;
    for (std::size_t i = 0; i < s.uv.cells(); ++i) {
        s.uv.silhouette[i] = 1;
        s.uv.uv.at_index(i, 0) = uniform(rng, -0.6, 0.6) * texel;
        s.uv.uv.at_index(i, 1) = uniform(rng, -0.6, 0.6) * texel;
    }
    return s;
}

GradCheckReport finite_difference_check(const UVMap& P, const Field2& I,
                                        const GradCheckConfig& cfg) {
    const double a1 = cfg.alpha1;
    const double a2 = cfg.alpha2;
    const LossReport rep = grad_total(P, I, a1, a2);
    double gmax = 0.0;
    for (double v : rep.grad.data()) gmax = std::max(gmax, std::abs(v));

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < P.cells(); ++i) {
        if (P.fg_index(i)) {
            candidates.push_back(2 * i);
            candidates.push_back(2 * i + 1);
        }
    }
    Rng rng(mix_seed(cfg.seed, 0x66646368ULL));
    for (std::size_t i = candidates.size(); i > 1; --i) {
        std::swap(candidates[i - 1], candidates[uniform_index(rng, i)]);
    }

    const std::uint64_t sig0 = sampling_signature(P, I);
    GradCheckReport out;
    for (std::size_t idx : candidates) {
        if (out.probes >= cfg.probes) break;
        const std::size_t cell = idx / 2;
        const int ch = static_cast<int>(idx % 2);
        UVMap plus = P;
        UVMap minus = P;
        plus.uv.at_index(cell, ch) += cfg.eps;
        minus.uv.at_index(cell, ch) -= cfg.eps;
        if (sampling_signature(plus, I) != sig0 || sampling_signature(minus, I) != sig0) {
            ++out.rejected;
            continue;
        }
        const double lp = loss_app(plus, I) + loss_reg(plus, a1, a2);
        const double lm = loss_app(minus, I) + loss_reg(minus, a1, a2);
        const double fd = (lp - lm) / (2.0 * cfg.eps);
        const double an = rep.grad.at_index(cell, ch);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6 * gmax, 1e-12});
        out.max_rel_error = std::max(out.max_rel_error, std::abs(fd - an) / denom);
        ++out.probes;
    }
    return out;
}

}  // namespace uvweave
