#include "doctest.h"
#include "test_util.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/gradcore.hpp"
#include "uvweave/scenegen.hpp"

#include <cmath>

using namespace uvweave;

namespace {

SceneConfig small_scene(std::uint64_t seed = 3) {
    SceneConfig cfg;
    cfg.width = cfg.height = 64;
    cfg.frames = 4;
    cfg.seed = seed;
    return cfg;
}

std::size_t count(const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)); }

double mean_pixel_loss(const UVMap& P, const Field2& I) {
    return loss_app(P, I) / static_cast<double>(count(P.silhouette));
}

}  // namespace

TEST_CASE("gen_sequence: amplitude 0 gives identical frames") {
    SceneConfig cfg = small_scene();
    cfg.amplitude = 0.0;
    const FrameSet fs = gen_sequence(cfg);
    for (int t = 1; t < fs.frames(); ++t) {
        CHECK(fs.images[t] == fs.images[0]);
        CHECK(fs.gt_uv[t].uv == fs.gt_uv[0].uv);
        CHECK(fs.gt_uv[t].silhouette == fs.gt_uv[0].silhouette);
    }
}

TEST_CASE("gen_sequence: same seed twice is bit-identical") {
    const FrameSet a = gen_sequence(small_scene(9));
    const FrameSet b = gen_sequence(small_scene(9));
    CHECK(a.texture == b.texture);
    for (int t = 0; t < a.frames(); ++t) {
        CHECK(a.images[t] == b.images[t]);
        CHECK(a.gt_uv[t].uv == b.gt_uv[t].uv);
        CHECK(a.frame_uv[t].uv == b.frame_uv[t].uv);
        CHECK(a.correspondence[t] == b.correspondence[t]);
    }
    const FrameSet c = gen_sequence(small_scene(10));
    CHECK_FALSE(a.texture == c.texture);
}

TEST_CASE("gen_sequence: frames move when the amplitude is positive") {
    const FrameSet fs = gen_sequence(small_scene());
    CHECK_FALSE(fs.gt_uv[1].uv == fs.gt_uv[0].uv);
}

TEST_CASE("gen_sequence: degenerate deformation and bad sizes are rejected") {
    SceneConfig cfg = small_scene();
    cfg.amplitude = 0.1;
    cfg.frequency = 2.0;  // 2 pi k A > 0.5
    CHECK_THROWS_AS(gen_sequence(cfg), ValidationError);
    cfg = small_scene();
    cfg.width = 16;
    CHECK_THROWS_AS(gen_sequence(cfg), ValidationError);
    cfg = small_scene();
    cfg.parts = 3;
    CHECK_THROWS_AS(gen_sequence(cfg), ValidationError);
}

TEST_CASE("gen_sequence: ground-truth UVs reproduce every frame within the interpolation floor") {
    for (int parts : {0, 2, 4}) {
        SceneConfig cfg = small_scene();
        cfg.width = cfg.height = 128;
        cfg.parts = parts;
        const FrameSet fs = gen_sequence(cfg);
        for (int t = 0; t < fs.frames(); ++t) {
            const double m = mean_pixel_loss(fs.gt_uv[t], fs.images[t]);
            INFO("parts " << parts << " frame " << t << " mean loss " << m);
            CHECK(m < 1e-3);
        }
    }
}

TEST_CASE("gen_sequence: frame textures satisfy T*_t(u) == T*(Q*_t(u))") {
    const FrameSet fs = gen_sequence(small_scene());
    for (int t = 0; t < fs.frames(); ++t) {
        const Field2 tt = frame_texture(fs, t);
        for (int y = 0; y < tt.height(); y += 7)
            for (int x = 0; x < tt.width(); x += 5) {
                const Coord q{fs.correspondence[t].at(x, y, 0), fs.correspondence[t].at(x, y, 1)};
                const Sample s = sample_bilinear(fs.texture, q);
                for (int c = 0; c < 3; ++c) CHECK(tt.at(x, y, c) == s.value[c]);
            }
    }
}

TEST_CASE("gen_sequence: frame 0 correspondence is the identity and frame-wise UVs agree with P*") {
    const FrameSet fs = gen_sequence(small_scene());
    const Field2& q = fs.correspondence[0];
    for (int y = 0; y < q.height(); ++y)
        for (int x = 0; x < q.width(); ++x) {
            const Coord u = pixel_center(x, y, q.width(), q.height());
            CHECK(q.at(x, y, 0) == doctest::Approx(u.x).epsilon(1e-12));
            CHECK(q.at(x, y, 1) == doctest::Approx(u.y).epsilon(1e-12));
        }
    CHECK(testing::max_abs_diff(fs.frame_uv[0].uv, fs.gt_uv[0].uv) < 1e-12);
}

TEST_CASE("gen_sequence: drifted frame-wise UVs are consistent with the correspondence") {
    // A pixel's frame-wise texel, pushed through Q*_t, lands on its P* texel.
    const FrameSet fs = gen_sequence(small_scene());
    const int t = fs.frames() - 1;
    const UVMap& gt = fs.gt_uv[t];
    const UVMap& fw = fs.frame_uv[t];
    const double texel = 1.0 / fs.texture.width();
    for (int y = 0; y < gt.height(); y += 3)
        for (int x = 0; x < gt.width(); x += 3) {
            if (!gt.fg(x, y)) continue;
            const Sample q = sample_bilinear(fs.correspondence[t], fw.texture_coord(x, y));
            const Coord g = gt.texture_coord(x, y);
            CHECK(std::abs(q.value[0] - g.x) < 1e-6 * texel + 1e-9);
            CHECK(std::abs(q.value[1] - g.y) < 1e-6 * texel + 1e-9);
        }
}

TEST_CASE("corrupt: zero config is the identity") {
    const FrameSet fs = gen_sequence(small_scene());
    const FrameSet out = corrupt(fs, CorruptConfig{});
    for (int t = 0; t < fs.frames(); ++t) {
        CHECK(out.raw_uv[t].uv == fs.raw_uv[t].uv);
        CHECK(out.raw_uv[t].silhouette == fs.raw_uv[t].silhouette);
        CHECK(out.images[t] == fs.images[t]);
    }
}

TEST_CASE("corrupt: margin 4 shrinks the silhouette and removed pixels carry no UVs") {
    const FrameSet fs = gen_sequence(small_scene());
    CorruptConfig cfg;
    cfg.margin = 4;
    const FrameSet out = corrupt(fs, cfg);
    for (int t = 0; t < fs.frames(); ++t) {
        const UVMap& r = out.raw_uv[t];
        CHECK(count(r.silhouette) < count(fs.masks[t]));
        for (std::size_t i = 0; i < r.cells(); ++i) {
            if (fs.masks[t][i] && !r.silhouette[i]) {
                CHECK(r.uv.at_index(i, 0) == 0.0);
                CHECK(r.uv.at_index(i, 1) == 0.0);
            }
            if (r.silhouette[i]) CHECK(fs.masks[t][i]);
        }
    }
}

TEST_CASE("corrupt: erosion removes exactly the pixels within the margin of the background") {
    Mask m(100, 1);
    const Mask e = erode(m, 10, 10, 2);
    CHECK(e[5 * 10 + 5] == 1);
    CHECK(e[1 * 10 + 5] == 0);  // two rows from the outside row y = -1
    CHECK(e[2 * 10 + 5] == 1);  // three rows away
    CHECK(e[2 * 10 + 2] == 1);
}

TEST_CASE("corrupt: a margin beyond the radius makes the silhouette vanish") {
    const FrameSet fs = gen_sequence(small_scene());
    CorruptConfig cfg;
    cfg.margin = 40;
    CHECK_THROWS_WITH_AS(corrupt(fs, cfg), "silhouette vanishes", ValidationError);
}

TEST_CASE("corrupt: corrupted UVs always lose appearance against ground truth") {
    SceneConfig sc = small_scene();
    sc.width = sc.height = 96;
    const FrameSet fs = gen_sequence(sc);
    CorruptConfig cfg;
    cfg.margin = 4;
    cfg.duplicate_blocks = 8;
    cfg.noise = 0.01;
    const FrameSet out = corrupt(fs, cfg);
    for (int t = 0; t < fs.frames(); ++t) {
        // Same pixel set for a fair comparison: ground truth restricted to the eroded silhouette.
        UVMap gt = fs.frame_uv[t];
        gt.silhouette = out.raw_uv[t].silhouette;
        CHECK(loss_app(out.raw_uv[t], fs.images[t]) > loss_app(gt, fs.images[t]));
    }
}

TEST_CASE("corrupt: deterministic per seed, different across seeds") {
    const FrameSet fs = gen_sequence(small_scene());
    CorruptConfig cfg;
    cfg.duplicate_blocks = 3;
    cfg.noise = 0.005;
    cfg.jitter = 0.01;
    const FrameSet a = corrupt(fs, cfg), b = corrupt(fs, cfg);
    for (int t = 0; t < fs.frames(); ++t) CHECK(a.raw_uv[t].uv == b.raw_uv[t].uv);
    cfg.seed = 99;
    const FrameSet c = corrupt(fs, cfg);
    CHECK_FALSE(a.raw_uv[0].uv == c.raw_uv[0].uv);
}
