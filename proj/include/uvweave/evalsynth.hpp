#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/flow.hpp"
#include "uvweave/warpmap.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace uvweave {

// Work done by render_lookup, counted as it happens.
struct RenderStats {
    std::uint64_t pixels = 0;       // foreground pixels rendered
    std::uint64_t fetches = 0;      // bilinear fetches
    std::uint64_t texel_reads = 0;
    std::uint64_t madds = 0;        // multiply-adds in the blends, all channels
    int channels = 0;

    double reads_per_pixel() const { return pixels ? static_cast<double>(texel_reads) / pixels : 0.0; }
    double madds_per_channel() const {
        return pixels && channels ? static_cast<double>(madds) / (static_cast<double>(pixels) * channels) : 0.0;
    }
};

// I'(x) = T(x - P(x)) with one bilinear fetch per foreground pixel; zero on
// the background.
Field2 render_lookup(const Field2& T, const UVMap& P, RenderStats* stats = nullptr);

// Pixels whose part is in `reuse` sample T_frame, all others T_const.
Field2 composite_parts(const UVMap& P, const Field2& T_const, const Field2& T_frame, const std::set<int>& reuse);

// Squared Frobenius distance over the union of the silhouettes.
double loss_l2(const UVMap& a, const UVMap& b);
// |Pm - P|^2 + |P - Pp|^2 + |Pm - 2P + Pp|^2 over the union silhouette.
double loss_smo(const UVMap& prev, const UVMap& cur, const UVMap& next);
// |render_lookup(T_o, P) - I|^2 on P's silhouette.
double loss_img_s(const UVMap& P, const Field2& T_o, const Field2& I);
// Mean negative log softmax probability of the reference class; scores has
// one channel per class (25: background plus 24 parts).
double loss_ce(const Field2& scores, const std::vector<std::uint8_t>& reference);

// 10 log10(1 / MSE) over the cells of `mask` (all cells when empty) and all
// channels, capped at 99 dB.
double metric_psnr(const Field2& a, const Field2& b, const Mask& mask = {});

// Image-space motion of frame t+1's pixels since frame t, derived from the
// UVs alone: the image position of every texel under each frame, differenced
// in texture space and pulled back to frame t+1. Pixel units.
Field2 uv_motion(const UVMap& P_t, const UVMap& P_next, int tex_width, int tex_height);

// Mean L1 (per pixel, averaged over channels) between frame t+1 and frame t
// warped along uv_motion, over frame t+1's foreground, averaged over t.
double metric_tdiff(const std::vector<Field2>& frames, const std::vector<UVMap>& uvs, int tex_width,
                    int tex_height);

// Mean over pixels and consecutive pairs of |OF(real) - OF(gen)|_1, in pixels.
double metric_tof(const std::vector<Field2>& real, const std::vector<Field2>& gen, const FlowConfig& cfg = {});

struct MetricReport {
    std::vector<double> psnr;  // per frame
    double psnr_mean = 0.0;
    double psnr_min = 0.0;
    double t_diff = 0.0;
    double t_of = 0.0;

    std::string to_json() const;
};

// Metrics of a generated sequence against the real one. Background pixels of
// every frame are given by the real foreground masks.
MetricReport evaluate_sequence(const std::vector<Field2>& real, const std::vector<Mask>& masks,
                               const std::vector<Field2>& gen, const std::vector<UVMap>& uvs, int tex_width,
                               int tex_height, const FlowConfig& flow = {});

}  // namespace uvweave
