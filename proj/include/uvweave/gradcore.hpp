#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/warpmap.hpp"

#include <cstdint>
#include <vector>

namespace uvweave {

// Texture resolution used for the image -> texture -> image round trip.
// Zero means "same as the image".
struct TextureSize {
    int width = 0;
    int height = 0;
};

struct LossReport {
    double l_app = 0.0;
    double l_reg = 0.0;
    Field2 grad{0, 0, 2};  // d loss / d uv over the image grid, zero off the silhouette

    double total() const noexcept { return l_app + l_reg; }
};

// I' = W(W(I, omega_T(P)), omega_I(P)); background pixels are zero.
Field2 reconstruct(const UVMap& P, const Field2& I, TextureSize tex = {});

// Sum over foreground pixels of ||I'(x) - I(x)||^2.
double loss_app(const UVMap& P, const Field2& I, TextureSize tex = {});

// Appearance loss and its gradient. The gradient has two parts: the direct
// term through omega_I (d omega_I / d P = -1) and the texture term, which
// back-propagates the texture adjoint through the recorded splat weights of
// omega_T. Filled (coverage 0) texels never carry weight in I', so they take
// no gradient.
LossReport grad_app(const UVMap& P, const Field2& I, TextureSize tex = {});

// alpha1 * sum ||grad P||^2 + alpha2 * sum_ij ||H_ij P||^2 with unit-spacing
// difference stencils. A stencil contributes only when all of its cells are on
// the silhouette. Needs at least a 5 x 5 grid.
double loss_reg(const UVMap& P, double alpha1, double alpha2);
LossReport grad_reg(const UVMap& P, double alpha1, double alpha2);

// grad_app + grad_reg in one pass.
LossReport grad_total(const UVMap& P, const Field2& I, double alpha1, double alpha2,
                      TextureSize tex = {});

// Hash of every bilinear cell choice (and clamp state) made by the forward
// pass. Two UV maps with equal signatures lie in the same smooth piece of the
// loss, which is what finite-difference probes need.
std::uint64_t sampling_signature(const UVMap& P, const Field2& I, TextureSize tex = {});

struct GradCheckScene {
    UVMap uv;
    Field2 image;
};

// Small random scene: smooth random colours and a random near-identity UV
// field over the whole grid.
GradCheckScene make_grad_check_scene(std::uint64_t seed, int size);

struct GradCheckConfig {
    int probes = 20;
    double eps = 1e-3;
    double alpha1 = 100.0;
    double alpha2 = 10.0;
    std::uint64_t seed = 1;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int probes = 0;
    int rejected = 0;  // candidates discarded for straddling a cell boundary
};

// Central differences of loss_app + loss_reg against grad_total at random
// probes whose +-eps perturbations keep the sampling signature unchanged.
GradCheckReport finite_difference_check(const UVMap& P, const Field2& I,
                                        const GradCheckConfig& cfg);

}  // namespace uvweave
