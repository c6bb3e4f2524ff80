#pragma once

#include "uvweave/evalsynth.hpp"
#include "uvweave/extendms.hpp"
#include "uvweave/fields.hpp"
#include "uvweave/relocate.hpp"
#include "uvweave/uvopt.hpp"
#include "uvweave/warpmap.hpp"

#include <cstddef>
#include <functional>
#include <set>
#include <vector>

namespace uvweave {

// Thread count: `requested` when positive, else UVWEAVE_THREADS, else the
// hardware concurrency (at least 1).
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Every index writes its
// own slot, so results do not depend on scheduling. The exception of the
// lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct SynthConfig {
    // Parts rendered from each frame's own texture instead of T_o.
    std::set<int> reuse_parts;
};

// Everything the stages read and write, frame by frame.
struct Sequence {
    int frames() const noexcept { return static_cast<int>(images.size()); }

    int tex_width = 0;
    int tex_height = 0;
    std::vector<Field2> images;
    std::vector<Mask> masks;
    std::vector<UVMap> raw;

    std::vector<UVMap> extended;       // extend
    std::vector<RelaxReport> relax;
    std::vector<UVMap> optimized;      // optimize
    std::vector<OptTrace> traces;
    Field2 texture_const;              // relocate: T_o
    std::vector<UVMap> relocated;      // P^f
    std::vector<double> pruned_fraction;
    std::vector<Field2> renders;       // synth
};

void run_extend(Sequence& s, const RelaxConfig& cfg, int threads);
void run_optimize(Sequence& s, const OptConfig& cfg, int threads);
// `flows`, when given, holds one flow per frame (frame 0 ignored) on the
// texture grid, from the frame texture towards T_o.
void run_relocate(Sequence& s, const RelocateConfig& cfg, int threads, const std::vector<FlowField>* flows = nullptr);
void run_synth(Sequence& s, const SynthConfig& cfg, int threads);

// Lookup renders of every frame through `uvs` from one constant texture,
// unwrapped from frame 0 through uvs[0]. Used as the baseline for raw UVs.
std::vector<Field2> constant_texture_renders(const Sequence& s, const std::vector<UVMap>& uvs, int threads);

struct PipelineMetrics {
    MetricReport recovered;
    MetricReport baseline;             // raw UVs, same synthesis
    std::vector<double> lapp_initial;  // per frame, before optimization
    std::vector<double> lapp_final;

    std::string to_json() const;
};

PipelineMetrics run_metrics(const Sequence& s, const FlowConfig& flow, int threads);

}  // namespace uvweave
