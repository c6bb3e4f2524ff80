#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/warpmap.hpp"

#include <cstddef>
#include <vector>

namespace uvweave {

// Grows the raw UV map to the full foreground. New pixels get the part of the
// nearest originally labeled pixel (ties: lower part). The output silhouette
// is full_mask and uv.mask() marks the entries that carry a known UV; when
// nothing is new the input comes back unchanged.
UVMap label_fill(const UVMap& raw, const Mask& full_mask);

struct Extrapolation {
    UVMap uv;
    std::vector<std::size_t> new_points;  // pixel indices, in fill order
};

// Fills unknown silhouette entries sweep by sweep: a pixel is filled once it
// has at least two known same-part neighbours in its 3x3 window, by a least
// squares linear fit over those neighbours. Pixels never reached copy the
// texture location of the nearest known same-part pixel.
Extrapolation extrapolate_uv(const UVMap& labeled);

struct Spring {
    Coord anchor;  // fixed, texel units
    double rest = 1.0;
};

struct SpringPoint {
    Coord pos;  // texel units
    std::vector<Spring> springs;
};

struct SpringSystem {
    std::vector<SpringPoint> points;
};

enum class SpringPhase { push, pull, both };

struct RelaxConfig {
    double step = 0.1;        // explicit Euler step
    double force_tol = 1e-3;  // texels
    int max_iters = 2000;     // per phase and point
    double region = 40.0;     // side of the anchor window, texels
    int tex_width = 0;        // texture size defining a texel; 0: image size
    int tex_height = 0;
};

struct RelaxReport {
    double distortion_before = 0.0;
    double distortion_after = 0.0;
    double max_force = 0.0;  // largest final net force (all springs active)
    int push_iters = 0;      // worst point
    int pull_iters = 0;
    bool converged = true;
    std::size_t points = 0;
    std::size_t springs = 0;
};

// Mean |length - rest| / rest over all springs.
double spring_distortion(const SpringSystem& s);

// Hooke force on one point averaged over its active springs; push keeps only
// compressed springs, pull only stretched ones, both keeps all.
Coord spring_force(const SpringPoint& p, SpringPhase phase);

// Per point: pushing only until converged, then pushing and pulling together.
RelaxReport relax_system(SpringSystem& s, const RelaxConfig& cfg);

struct Relaxation {
    UVMap uv;
    SpringSystem system;  // final state
    RelaxReport report;
};

// Builds one spring system per extrapolated pixel against the known entries
// inside the region around it, relaxes it and writes the positions back.
// Known entries are never moved.
Relaxation relax_springs(const UVMap& extended, const std::vector<std::size_t>& new_points,
                         const RelaxConfig& cfg = {});

}  // namespace uvweave
