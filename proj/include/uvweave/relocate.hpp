#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/flow.hpp"
#include "uvweave/warpmap.hpp"

namespace uvweave {

// Texel-wise map from a frame texture into the constant texture T_o.
// valid marks trusted entries; domain marks the texels the frame actually
// observes (valid is a subset of it).
struct Correspondence {
    int width() const noexcept { return target.width(); }
    int height() const noexcept { return target.height(); }
    std::size_t valid_count() const;
    void validate() const;

    Field2 target{0, 0, 2};
    Mask valid;
    Mask domain;
};

// target(u) = u, valid and domain = `valid` (all texels when empty).
Correspondence identity_correspondence(int width, int height, Mask valid = {});

// Q^r: Q0 sampled at u + flow(u), averaging only the valid Q0 cells of the
// bilinear stencil. Entries whose stencil holds no valid cell, or that lie
// outside `domain`, are invalid.
Correspondence init_correspondence(const Correspondence& q0, const FlowField& flow, const Mask& domain = {});

// Clears entries whose colour disagrees: |T_o(target(u)) - T_t(u)|_2 > tau.
Correspondence prune_mismatch(const Correspondence& qr, const Field2& T_o, const Field2& T_t, double tau = 0.05);

struct PatchConfig {
    int patch = 8;
    int window = 21;  // odd, search window side centered on the tile
    int stride = 4;   // tile spacing

    void validate() const;
};

// Covers the invalid domain texels with patch tiles A; for every tile the
// best matching tile B of T_o inside the window (SSD over RGB) donates its Q0
// entries. Overlapping donations are averaged. Valid entries are untouched and
// the result is valid on the whole domain.
Correspondence patch_fill(const Correspondence& qc, const Field2& T_o, const Field2& T_t, const Correspondence& q0,
                          const PatchConfig& cfg = {});

// T_o looked up through the correspondence, on the correspondence grid.
Field2 apply_correspondence(const Field2& T_o, const Correspondence& q);

// P^f: every foreground pixel's texture location x - P_o(x) is moved to
// Q_t(x - P_o(x)) and re-encoded as a displacement. Silhouette and parts are
// copied from P_o.
UVMap to_image_uv(const Correspondence& qt, const UVMap& P_o);

struct RelocateConfig {
    FlowConfig flow{};
    double tau = 0.05;
    PatchConfig patch{};
};

struct FrameRelocation {
    Correspondence q_init;    // Q^r
    Correspondence q_pruned;  // Q^c
    Correspondence q;         // Q_t
    UVMap uv;                 // P^f
    double pruned_fraction = 0.0;  // of the initially valid entries
};

// Unwrapped texture of a frame: warp of the image through omega_T(P). The mask
// marks covered texels.
Field2 unwrap_texture(const Field2& image, const UVMap& P, int tex_width, int tex_height);

// Full per-frame relocation against the constant texture T_o (with its
// identity correspondence q0). T_t is the frame's unwrapped texture with its
// coverage mask. `flow` replaces the built-in block_flow(T_t, T_o) when given.
FrameRelocation relocate_frame(const Field2& T_o, const Correspondence& q0, const Field2& T_t, const UVMap& P_o,
                               const RelocateConfig& cfg = {}, const FlowField* flow = nullptr);

}  // namespace uvweave
