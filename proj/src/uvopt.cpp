#include "uvweave/uvopt.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace uvweave {

void OptConfig::validate() const {
    if (!(alpha1 > 0) || !(alpha2 > 0) || !(lr > 0) || max_steps <= 0 || !(rel_tol > 0) || window <= 0) {
        throw ValidationError("optimize: alpha1, alpha2, lr, max_steps, rel_tol and window must be positive");
    }
}

namespace {

constexpr double kLow = -1.0;
constexpr double kHigh = 2.0;
constexpr int kGrowAfter = 10;
constexpr int kMaxHalvings = 60;
constexpr int kDivergeSteps = 50;
constexpr double kDivergeFactor = 10.0;

// P - lr * g on the silhouette, clamped to the sanity box.
UVMap descend(const UVMap& P, const Field2& g, double lr, int& clamped) {
    UVMap out = P;
    for (std::size_t i = 0; i < P.cells(); ++i) {
        if (!P.fg_index(i)) continue;
        for (int c = 0; c < 2; ++c) {
            double v = P.uv.at_index(i, c) - lr * g.at_index(i, c);
            if (v < kLow || v > kHigh) {
                v = std::clamp(v, kLow, kHigh);
                ++clamped;
            }
            out.uv.at_index(i, c) = v;
        }
    }
    return out;
}

}  // namespace

OptResult optimize_uv(const UVMap& init, const Field2& image, const OptConfig& cfg) {
    cfg.validate();
    init.validate();
    const auto t0 = std::chrono::steady_clock::now();
    OptResult res{init, {}};
    OptTrace& tr = res.trace;

    LossReport cur = grad_total(res.uv, image, cfg.alpha1, cfg.alpha2, cfg.tex);
    if (!std::isfinite(cur.total())) throw NumericalError("optimize: initial loss is not finite");
    const double initial = cur.total();
    tr.loss.push_back(initial);
    tr.l_app.push_back(cur.l_app);

    double lr = cfg.lr;
    int streak = 0;
    int above = 0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        int clamped = 0;
        UVMap cand = descend(res.uv, cur.grad, lr, clamped);
        LossReport next = grad_total(cand, image, cfg.alpha1, cfg.alpha2, cfg.tex);
        if (cfg.backtracking) {
            int halvings = 0;
            while (!(next.total() <= cur.total()) && halvings < kMaxHalvings) {
                lr *= 0.5;
                ++halvings;
                ++tr.rejected;
                clamped = 0;
                cand = descend(res.uv, cur.grad, lr, clamped);
                next = grad_total(cand, image, cfg.alpha1, cfg.alpha2, cfg.tex);
            }
            if (!(next.total() <= cur.total())) break;  // no descent direction left at this precision
            if (halvings == 0 && ++streak >= kGrowAfter) {
                lr = std::min(2.0 * lr, cfg.lr);
                streak = 0;
            } else if (halvings > 0) {
                streak = 0;
            }
        }
        if (!std::isfinite(next.total())) throw NumericalError("divergence; reduce lr");
        tr.clamped += clamped;
        tr.lr.push_back(lr);
        res.uv = std::move(cand);
        cur = std::move(next);
        tr.loss.push_back(cur.total());
        tr.l_app.push_back(cur.l_app);
        ++tr.steps;

        above = cur.total() > kDivergeFactor * initial ? above + 1 : 0;
        if (above >= kDivergeSteps) throw NumericalError("divergence; reduce lr");

        const std::size_t n = tr.loss.size();
        if (n > static_cast<std::size_t>(cfg.window)) {
            const double old = tr.loss[n - 1 - cfg.window];
            if (old <= 0.0 || (old - cur.total()) / old < cfg.rel_tol) {
                tr.early_stop = true;
                break;
            }
        }
    }
    tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace uvweave
