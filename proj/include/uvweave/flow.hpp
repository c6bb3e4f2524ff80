#pragma once

#include "uvweave/fields.hpp"

namespace uvweave {

struct FlowConfig {
    int levels = 3;
    int block = 8;   // texels
    int search = 4;  // texels per level, each direction
    bool subpixel = true;

    void validate() const;
};

// Displacement in normalized units, one vector per cell of the first input.
struct FlowField {
    int width() const noexcept { return displacement.width(); }
    int height() const noexcept { return displacement.height(); }
    Field2 displacement{0, 0, 2};
};

// Coarse-to-fine block matching: for every block of `a` the integer offset d
// minimizing the mean squared RGB difference a(u) - b(u + d) over the cells
// valid in both inputs, refined by a parabola through the neighbouring costs
// at the finest level. Ties go to the smaller offset, then scanline order.
// Block vectors are interpolated bilinearly between block centers, so
// b(u + flow(u)) ~ a(u).
FlowField block_flow(const Field2& a, const Field2& b, const FlowConfig& cfg = {});

// Largest displacement, in texels per axis, that block_flow can return.
double flow_reach(const FlowConfig& cfg);

}  // namespace uvweave
