#include "doctest.h"
#include "test_util.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/warpmap.hpp"

#include <cmath>

using namespace uvweave;
using uvweave::testing::random_field;

namespace {

UVMap random_uv(Rng& rng, int w, int h, double amp, double fg_prob = 1.0) {
    UVMap P(w, h);
    for (std::size_t i = 0; i < P.cells(); ++i) {
        P.silhouette[i] = uniform01(rng) < fg_prob ? 1 : 0;
        if (P.silhouette[i]) {
            P.uv.at_index(i, 0) = uniform(rng, -amp, amp);
            P.uv.at_index(i, 1) = uniform(rng, -amp, amp);
        }
    }
    return P;
}

Mask square_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(static_cast<std::size_t>(w) * h, 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m[static_cast<std::size_t>(y) * w + x] = 1;
    return m;
}

}  // namespace

TEST_CASE("AtlasLayout: 24 equal tiles cover the unit square without overlap") {
    double area = 0.0;
    for (int p = 1; p <= kPartCount; ++p) {
        const auto r = AtlasLayout::tile(p);
        CHECK(r.w == doctest::Approx(1.0 / 6.0));
        CHECK(r.h == doctest::Approx(0.25));
        area += r.w * r.h;
        const Coord mid = AtlasLayout::to_texture(p, {0.5, 0.5});
        CHECK(AtlasLayout::part_at(mid) == p);
        const Coord back = AtlasLayout::to_local(p, mid);
        CHECK(back.x == doctest::Approx(0.5));
        CHECK(back.y == doctest::Approx(0.5));
    }
    CHECK(area == doctest::Approx(1.0));
    CHECK(AtlasLayout::tile(7).x0 == doctest::Approx(0.0));
    CHECK(AtlasLayout::tile(7).y0 == doctest::Approx(0.25));
}

TEST_CASE("UVMap::validate catches broken invariants") {
    UVMap P(4, 4, true);
    CHECK_NOTHROW(P.validate());
    P.silhouette[5] = 1;
    CHECK_THROWS_AS(P.validate(), ValidationError);  // foreground without a part
    P.part[5] = 3;
    CHECK_NOTHROW(P.validate());
    P.part[6] = 2;
    CHECK_THROWS_AS(P.validate(), ValidationError);  // part on background
    P.part[6] = 0;
    P.uv.at_index(5, 0) = std::nan("");
    CHECK_THROWS_AS(P.validate(), ValidationError);
}

TEST_CASE("image_grid: zero displacement is the identity grid") {
    const UVMap P = UVMap::identity(6, 5, Mask(30, 1));
    const WarpGrid g = image_grid(P);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) {
            const Coord c = pixel_center(x, y, 6, 5);
            CHECK(g.target.at(x, y, 0) == c.x);
            CHECK(g.target.at(x, y, 1) == c.y);
            CHECK(g.coverage[g.target.index(x, y)] == 1.0);
        }
}

TEST_CASE("image_grid: uv = x - u0 sends every pixel to u0") {
    const Coord u0{0.3, 0.65};
    UVMap P(7, 7);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
            P.silhouette[P.uv.index(x, y)] = 1;
            const Coord c = pixel_center(x, y, 7, 7);
            P.uv.at(x, y, 0) = c.x - u0.x;
            P.uv.at(x, y, 1) = c.y - u0.y;
        }
    const WarpGrid g = image_grid(P);
    for (std::size_t i = 0; i < P.cells(); ++i) {
        CHECK(g.target.at_index(i, 0) == doctest::Approx(u0.x).epsilon(1e-15));
        CHECK(g.target.at_index(i, 1) == doctest::Approx(u0.y).epsilon(1e-15));
    }
}

TEST_CASE("image_grid: coverage is zero off the silhouette") {
    const UVMap P = UVMap::identity(4, 4, square_mask(4, 4, 1, 1, 3, 3));
    const WarpGrid g = image_grid(P);
    CHECK(g.coverage[0] == 0.0);
    CHECK(g.coverage[5] == 1.0);
}

TEST_CASE("property: image_grid target plus uv reproduces the pixel grid") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int w = 3 + static_cast<int>(uniform_index(rng, 20));
        const int h = 3 + static_cast<int>(uniform_index(rng, 20));
        const UVMap P = random_uv(rng, w, h, 0.2);
        const WarpGrid g = image_grid(P);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Coord c = pixel_center(x, y, w, h);
                CHECK(g.target.at(x, y, 0) + P.uv.at(x, y, 0) == doctest::Approx(c.x).epsilon(1e-15));
                CHECK(g.target.at(x, y, 1) + P.uv.at(x, y, 1) == doctest::Approx(c.y).epsilon(1e-15));
            }
    }
}

TEST_CASE("image_grid: part channel routes through the atlas tile") {
    UVMap P(4, 4, true);
    P.silhouette[0] = 1;
    P.part[0] = 8;
    const WarpGrid g = image_grid(P);
    const Coord expect = AtlasLayout::to_texture(8, pixel_center(0, 0, 4, 4));
    CHECK(g.target.at(0, 0, 0) == doctest::Approx(expect.x));
    CHECK(g.target.at(0, 0, 1) == doctest::Approx(expect.y));
}

TEST_CASE("texture_grid: identity UVs on a square silhouette invert to the identity") {
    const UVMap P = UVMap::identity(10, 10, square_mask(10, 10, 2, 3, 8, 9));
    const WarpGrid g = texture_grid(P, 10, 10);
    int covered = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            if (g.coverage[g.target.index(x, y)] == 0.0) continue;
            ++covered;
            const Coord c = pixel_center(x, y, 10, 10);
            CHECK(g.target.at(x, y, 0) == doctest::Approx(c.x).epsilon(1e-14));
            CHECK(g.target.at(x, y, 1) == doctest::Approx(c.y).epsilon(1e-14));
        }
    CHECK(covered == 36);
}

TEST_CASE("texture_grid: duplicate UVs average their source coordinates") {
    UVMap P(4, 4);
    const Coord a = pixel_center(0, 0, 4, 4), b = pixel_center(3, 2, 4, 4);
    const Coord u = pixel_center(1, 1, 4, 4);  // both land on this texel center
    for (const Coord& c : {a, b}) {
        const int x = static_cast<int>(c.x * 4), y = static_cast<int>(c.y * 4);
        P.silhouette[P.uv.index(x, y)] = 1;
        P.uv.at(x, y, 0) = c.x - u.x;
        P.uv.at(x, y, 1) = c.y - u.y;
    }
    const WarpGrid g = texture_grid(P, 4, 4);
    CHECK(g.coverage[g.target.index(1, 1)] > 0.0);
    CHECK(g.target.at(1, 1, 0) == doctest::Approx(0.5 * (a.x + b.x)));
    CHECK(g.target.at(1, 1, 1) == doctest::Approx(0.5 * (a.y + b.y)));
}

TEST_CASE("texture_grid: holes copy the nearest covered texel and keep coverage 0") {
    const UVMap P = UVMap::identity(6, 6, square_mask(6, 6, 0, 0, 2, 2));
    const WarpGrid g = texture_grid(P, 6, 6);
    CHECK(g.coverage[g.target.index(5, 5)] == 0.0);
    CHECK(g.target.at(5, 5, 0) == doctest::Approx(pixel_center(1, 1, 6, 6).x));
    CHECK(g.target.at(5, 5, 1) == doctest::Approx(pixel_center(1, 1, 6, 6).y));
}

TEST_CASE("texture_grid: empty silhouette is an error") {
    const UVMap P(5, 5);
    CHECK_THROWS_WITH_AS(texture_grid(P, 5, 5), "empty silhouette", ValidationError);
    CHECK_THROWS_AS(texture_grid(UVMap::identity(3, 3, Mask(9, 1)), 0, 4), ValidationError);
}

TEST_CASE("property: enlarging the silhouette never reduces texture coverage") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        UVMap big = random_uv(rng, 12, 12, 0.1);
        UVMap small = big;
        for (std::size_t i = 0; i < small.cells(); ++i)
            if (uniform01(rng) < 0.4) small.silhouette[i] = 0;
        if (std::count(small.silhouette.begin(), small.silhouette.end(), 1) == 0) continue;
        const WarpGrid gs = texture_grid(small, 12, 12);
        const WarpGrid gb = texture_grid(big, 12, 12);
        for (std::size_t i = 0; i < gs.coverage.size(); ++i) CHECK(gb.coverage[i] >= gs.coverage[i]);
    }
}

TEST_CASE("warp: identity grid reproduces the source bit-exactly") {
    Rng rng(5);
    const Field2 src = random_field(rng, 9, 7, 3);
    const WarpGrid g = image_grid(UVMap::identity(9, 7, Mask(63, 1)));
    const Field2 out = warp(src, g);
    for (std::size_t i = 0; i < src.cells(); ++i)
        for (int c = 0; c < 3; ++c) CHECK(out.at_index(i, c) == src.at_index(i, c));
}

TEST_CASE("warp: a one-texel translation is a shifted copy") {
    Rng rng(6);
    const Field2 src = random_field(rng, 8, 8, 1);
    UVMap P(8, 8);
    for (std::size_t i = 0; i < P.cells(); ++i) {
        P.silhouette[i] = 1;
        P.uv.at_index(i, 0) = -1.0 / 8.0;  // target = x + one texel
    }
    const Field2 out = warp(src, image_grid(P));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 7; ++x) CHECK(out.at(x, y) == src.at(x + 1, y));
}

TEST_CASE("property: warp is linear in the source") {
    Rng rng(7);
    const Field2 f = random_field(rng, 10, 10, 2), h = random_field(rng, 10, 10, 2);
    const WarpGrid g = image_grid(random_uv(rng, 10, 10, 0.15));
    const double a = 0.7, b = -1.3;
    Field2 comb(10, 10, 2);
    for (std::size_t i = 0; i < comb.data().size(); ++i) comb.data()[i] = a * f.data()[i] + b * h.data()[i];
    const Field2 lhs = warp(comb, g);
    const Field2 wf = warp(f, g), wh = warp(h, g);
    for (std::size_t i = 0; i < lhs.data().size(); ++i)
        CHECK(std::abs(lhs.data()[i] - (a * wf.data()[i] + b * wh.data()[i])) < 1e-13);
}

TEST_CASE("warp: output validity follows coverage and the source mask") {
    const UVMap P = UVMap::identity(4, 4, square_mask(4, 4, 0, 0, 2, 4));
    Field2 src(4, 4, 1, 1.0);
    Mask m(16, 1);
    m[src.index(1, 1)] = 0;
    src.set_mask(m);
    const Field2 out = warp(src, image_grid(P));
    CHECK(out.valid(0, 0));
    CHECK_FALSE(out.valid(1, 1));  // invalid source cell
    CHECK_FALSE(out.valid(3, 3));  // outside the silhouette
}

TEST_CASE("property: identity round trip through the texture is lossless at pixel centers") {
    Rng rng(8);
    const Field2 img = random_field(rng, 12, 12, 3);
    const UVMap P = UVMap::identity(12, 12, Mask(144, 1));
    const Field2 tex = warp(img, texture_grid(P, 12, 12));
    const Field2 back = warp(tex, image_grid(P));
    CHECK(testing::max_abs_diff(back, img) < 1e-14);
}
