#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/warpmap.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uvweave {

enum class Pattern { blobs, checker, grid };

Pattern parse_pattern(const std::string& name);
std::string pattern_name(Pattern p);

// A textured elliptical surface seen through a smooth, time-varying warp.
// All lengths are normalized units unless noted.
struct SceneConfig {
    int width = 128;
    int height = 128;
    int tex_width = 0;   // 0: same as the image
    int tex_height = 0;
    int frames = 16;
    std::uint64_t seed = 1;
    // Scales all per-frame motion: rigid shift (2x), rotation (4x, radians)
    // and the sinusoidal bend. 0 gives a static sequence.
    double amplitude = 0.01;
    double frequency = 2.0;  // cycles per unit of the sinusoidal bend
    // Rigid drift of the frame-wise UV estimates inside the texture, zero at
    // frame 0. This is what temporal relocation has to undo.
    double uv_drift = 0.02;
    int parts = 0;  // 0, 2 (halves) or 4 (quadrants)
    Pattern pattern = Pattern::blobs;

    int texture_width() const noexcept { return tex_width > 0 ? tex_width : width; }
    int texture_height() const noexcept { return tex_height > 0 ? tex_height : height; }
    void validate() const;
};

struct CorruptConfig {
    int margin = 0;             // erosion radius in pixels
    int duplicate_blocks = 0;
    int block_size = 6;         // pixels per block side
    double noise = 0.0;         // uniform UV noise in [-noise, noise]
    double jitter = 0.0;        // per-frame rigid texture-space jitter (shift and radians)
    std::uint64_t seed = 7;

    void validate() const;
};

struct FrameSet {
    int frames() const noexcept { return static_cast<int>(images.size()); }

    Field2 texture;                      // T*, shared by every frame
    std::vector<Field2> images;          // I_t, zero on the background
    std::vector<Mask> masks;             // full foreground of each frame
    std::vector<UVMap> gt_uv;            // P*_t, indexes T*
    std::vector<UVMap> frame_uv;         // frame-wise UVs indexing the drifted texture of frame t
    std::vector<UVMap> raw_uv;           // frame_uv after corruption (== frame_uv from gen_sequence)
    std::vector<Field2> correspondence;  // Q*_t over the texture grid: texel of frame t -> location in T*
};

// Throws ValidationError on bad sizes or a non-invertible deformation.
FrameSet gen_sequence(const SceneConfig& cfg);

// Applies erosion, duplicated blocks, noise and rigid jitter (in this order)
// to frame_uv and stores the result in raw_uv. Throws "silhouette vanishes"
// when erosion leaves nothing.
FrameSet corrupt(const FrameSet& fs, const CorruptConfig& cfg);

// T*_t: the ground-truth texture of frame t, i.e. T* looked up through Q*_t.
Field2 frame_texture(const FrameSet& fs, int t);

// Pixels of `m` whose Euclidean distance to the background (or the image
// border) exceeds `margin`.
Mask erode(const Mask& m, int width, int height, int margin);

}  // namespace uvweave
