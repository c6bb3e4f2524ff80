#include "doctest.h"
#include "test_util.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/gradcore.hpp"
#include "uvweave/scenegen.hpp"
#include "uvweave/uvopt.hpp"

#include <cmath>

using namespace uvweave;

namespace {

struct Case {
    FrameSet fs;
    UVMap bad;
};

// Noisy UVs on the full silhouette, no erosion, so no extension is needed.
Case noisy_case(int size = 64) {
    SceneConfig cfg;
    cfg.width = cfg.height = size;
    cfg.frames = 1;
    cfg.seed = 5;
    Case c{gen_sequence(cfg), {}};
    CorruptConfig cc;
    cc.noise = 0.01;
    cc.duplicate_blocks = 3;
    cc.block_size = 5;
    c.bad = corrupt(c.fs, cc).raw_uv[0];
    return c;
}

double max_uv_change(const UVMap& a, const UVMap& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.cells(); ++i)
        for (int ch = 0; ch < 2; ++ch) m = std::max(m, std::abs(a.uv.at_index(i, ch) - b.uv.at_index(i, ch)));
    return m;
}

}  // namespace

TEST_CASE("optimizer defaults") {
    const OptConfig c;
    CHECK(c.alpha1 == 100.0);
    CHECK(c.alpha2 == 10.0);
    CHECK(c.lr == 10.0);
    CHECK(c.max_steps == 16500);
    CHECK(c.rel_tol == 1e-6);
    CHECK(c.window == 100);
}

TEST_CASE("one accepted step is exactly P - lr * grad") {
    const Case c = noisy_case();
    OptConfig oc;
    oc.lr = 1e-5;
    oc.max_steps = 1;
    const OptResult r = optimize_uv(c.bad, c.fs.images[0], oc);
    REQUIRE(r.trace.steps == 1);
    REQUIRE(r.trace.rejected == 0);
    const LossReport g = grad_total(c.bad, c.fs.images[0], 100.0, 10.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < c.bad.cells(); ++i) {
        for (int ch = 0; ch < 2; ++ch) {
            const double want = c.bad.silhouette[i] ? c.bad.uv.at_index(i, ch) - 1e-5 * g.grad.at_index(i, ch)
                                                    : c.bad.uv.at_index(i, ch);
            worst = std::max(worst, std::abs(r.uv.uv.at_index(i, ch) - want));
        }
    }
    CHECK(worst == 0.0);
    CHECK(r.trace.loss[0] == doctest::Approx(g.total()).epsilon(1e-14));
}

TEST_CASE("corrupted UVs: appearance loss drops tenfold, trace never rises, channels kept") {
    const Case c = noisy_case();
    OptConfig oc;
    oc.max_steps = 400;
    const OptResult r = optimize_uv(c.bad, c.fs.images[0], oc);
    const OptTrace& t = r.trace;
    INFO("L_app " << t.l_app.front() << " -> " << t.l_app.back() << " in " << t.steps << " steps");
    CHECK(t.l_app.back() <= 0.1 * t.l_app.front());
    REQUIRE(t.loss.size() == static_cast<std::size_t>(t.steps) + 1);
    for (std::size_t k = 1; k < t.loss.size(); ++k) CHECK(t.loss[k] <= t.loss[k - 1]);
    CHECK(r.uv.silhouette == c.bad.silhouette);
    CHECK(r.uv.part == c.bad.part);
    CHECK(t.rejected > 0);  // lr = 10 is far past the stable step
    CHECK(t.seconds > 0.0);
}

TEST_CASE("optimization is deterministic") {
    const Case c = noisy_case(48);
    OptConfig oc;
    oc.max_steps = 60;
    const OptResult a = optimize_uv(c.bad, c.fs.images[0], oc);
    const OptResult b = optimize_uv(c.bad, c.fs.images[0], oc);
    CHECK(a.uv.uv == b.uv.uv);
    CHECK(a.trace.loss == b.trace.loss);
}

TEST_CASE("early stop once improvement over the window is below tolerance") {
    const Case c = noisy_case(48);
    OptConfig oc;
    oc.rel_tol = 0.5;
    oc.window = 5;
    const OptResult r = optimize_uv(c.bad, c.fs.images[0], oc);
    CHECK(r.trace.early_stop);
    CHECK(r.trace.steps < oc.max_steps);
    const auto& L = r.trace.loss;
    const double old = L[L.size() - 1 - 5];
    CHECK((old - L.back()) / old < 0.5);
}

TEST_CASE("without the guard a huge step diverges; UVs stay in the sanity box") {
    const Case c = noisy_case(48);
    OptConfig oc;
    oc.backtracking = false;
    oc.lr = 1e3;
    oc.max_steps = 3;
    const OptResult r = optimize_uv(c.bad, c.fs.images[0], oc);
    CHECK(r.trace.clamped > 0);
    for (double v : r.uv.uv.data()) {
        CHECK(v >= -1.0);
        CHECK(v <= 2.0);
    }
    oc.max_steps = 200;
    CHECK_THROWS_WITH_AS(optimize_uv(c.bad, c.fs.images[0], oc), "divergence; reduce lr", NumericalError);
}

TEST_CASE("invalid configurations are rejected") {
    const Case c = noisy_case(32);
    OptConfig oc;
    oc.lr = 0.0;
    CHECK_THROWS_AS(optimize_uv(c.bad, c.fs.images[0], oc), ValidationError);
    oc = {};
    oc.max_steps = 0;
    CHECK_THROWS_AS(optimize_uv(c.bad, c.fs.images[0], oc), ValidationError);
    Field2 wrong(16, 16, 3);
    CHECK_THROWS_AS(optimize_uv(c.bad, wrong, {}), ValidationError);
}

// P* is not a stationary point of L_app + L_r (bilinear blur, edge mixing,
// nonzero smoothness term), so descent moves it by about a texel.
TEST_CASE("starting at the ground truth the UVs barely move" * doctest::may_fail()) {
    const Case c = noisy_case();
    OptConfig oc;
    oc.max_steps = 2000;
    const OptResult r = optimize_uv(c.fs.frame_uv[0], c.fs.images[0], oc);
    const double change = max_uv_change(r.uv, c.fs.frame_uv[0]);
    INFO("max change " << change << " after " << r.trace.steps << " steps");
    CHECK(change < 1e-4);
}

TEST_CASE("starting at the ground truth the loss moves little and the UVs stay within two texels") {
    const Case c = noisy_case();
    OptConfig oc;
    oc.max_steps = 2000;
    const OptResult r = optimize_uv(c.fs.frame_uv[0], c.fs.images[0], oc);
    const double change = max_uv_change(r.uv, c.fs.frame_uv[0]);
    INFO("max change " << change * 64 << " texels");
    CHECK(change * 64 < 2.0);
    CHECK(r.trace.loss.back() <= r.trace.loss.front());
}
