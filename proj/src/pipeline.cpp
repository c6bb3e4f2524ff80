#include "uvweave/pipeline.hpp"

#include "uvweave/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace uvweave {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("UVWEAVE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 1024));
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr failure;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

void check_inputs(const Sequence& s) {
    if (s.images.empty()) throw ValidationError("sequence has no frames");
    if (s.masks.size() != s.images.size() || s.raw.size() != s.images.size())
        throw ValidationError("sequence: images, masks and raw UVs differ in count");
    if (s.tex_width <= 0 || s.tex_height <= 0) throw ValidationError("sequence: texture size not set");
}

void require(bool ok, const char* stage, const char* missing) {
    if (!ok) throw ValidationError(std::string("stage '") + stage + "' needs '" + missing + "' to have run");
}

}  // namespace

void run_extend(Sequence& s, const RelaxConfig& cfg, int threads) {
    check_inputs(s);
    const std::size_t n = s.images.size();
    s.extended.assign(n, {});
    s.relax.assign(n, {});
    RelaxConfig c = cfg;
    c.tex_width = s.tex_width;
    c.tex_height = s.tex_height;
    parallel_for(n, threads, [&](std::size_t t) {
        const UVMap labeled = label_fill(s.raw[t], s.masks[t]);
        const Extrapolation ex = extrapolate_uv(labeled);
        Relaxation r = relax_springs(ex.uv, ex.new_points, c);
        r.uv.uv.clear_mask();
        s.extended[t] = std::move(r.uv);
        s.relax[t] = r.report;
    });
}

void run_optimize(Sequence& s, const OptConfig& cfg, int threads) {
    check_inputs(s);
    require(s.extended.size() == s.images.size(), "optimize", "extend");
    const std::size_t n = s.images.size();
    s.optimized.assign(n, {});
    s.traces.assign(n, {});
    OptConfig c = cfg;
    c.tex = {s.tex_width, s.tex_height};
    parallel_for(n, threads, [&](std::size_t t) {
        OptResult r = optimize_uv(s.extended[t], s.images[t], c);
        s.optimized[t] = std::move(r.uv);
        s.traces[t] = std::move(r.trace);
    });
}

void run_relocate(Sequence& s, const RelocateConfig& cfg, int threads, const std::vector<FlowField>* flows) {
    check_inputs(s);
    require(s.optimized.size() == s.images.size(), "relocate", "optimize");
    const std::size_t n = s.images.size();
    if (flows && flows->size() != n) throw ValidationError("relocate: need one external flow per frame");
    // frame-0 barrier: T_o and Q_0 first
    s.texture_const = unwrap_texture(s.images[0], s.optimized[0], s.tex_width, s.tex_height);
    const Correspondence q0 = identity_correspondence(s.tex_width, s.tex_height, s.texture_const.mask());
    s.relocated.assign(n, {});
    s.pruned_fraction.assign(n, 0.0);
    s.relocated[0] = s.optimized[0];
    parallel_for(n - 1, threads, [&](std::size_t k) {
        const std::size_t t = k + 1;
        const Field2 Tt = unwrap_texture(s.images[t], s.optimized[t], s.tex_width, s.tex_height);
        FrameRelocation r =
            relocate_frame(s.texture_const, q0, Tt, s.optimized[t], cfg, flows ? &(*flows)[t] : nullptr);
        s.relocated[t] = std::move(r.uv);
        s.pruned_fraction[t] = r.pruned_fraction;
    });
}

void run_synth(Sequence& s, const SynthConfig& cfg, int threads) {
    require(s.relocated.size() == s.images.size() && !s.texture_const.empty(), "synth", "relocate");
    const std::size_t n = s.images.size();
    s.renders.assign(n, {});
    parallel_for(n, threads, [&](std::size_t t) {
        Field2 out = render_lookup(s.texture_const, s.relocated[t]);
        if (!cfg.reuse_parts.empty()) {
            if (!s.relocated[t].has_parts()) throw ValidationError("synth: part reuse needs a part channel");
            // Reused parts come from the frame's own texture through its own UVs.
            const Field2 Tt = unwrap_texture(s.images[t], s.optimized[t], s.tex_width, s.tex_height);
            const Field2 own = render_lookup(Tt, s.optimized[t]);
            for (std::size_t i = 0; i < out.cells(); ++i) {
                if (!cfg.reuse_parts.count(s.relocated[t].part[i])) continue;
                for (int c = 0; c < out.channels(); ++c) out.at_index(i, c) = own.at_index(i, c);
            }
        }
        s.renders[t] = std::move(out);
    });
}

std::vector<Field2> constant_texture_renders(const Sequence& s, const std::vector<UVMap>& uvs, int threads) {
    if (uvs.size() != s.images.size() || uvs.empty()) throw ValidationError("renders: UV count mismatch");
    const Field2 T = unwrap_texture(s.images[0], uvs[0], s.tex_width, s.tex_height);
    std::vector<Field2> out(uvs.size());
    parallel_for(uvs.size(), threads, [&](std::size_t t) { out[t] = render_lookup(T, uvs[t]); });
    return out;
}

std::string PipelineMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["recovered"] = nlohmann::ordered_json::parse(recovered.to_json());
    j["baseline"] = nlohmann::ordered_json::parse(baseline.to_json());
    j["lapp_initial"] = lapp_initial;
    j["lapp_final"] = lapp_final;
    return j.dump(2);
}

PipelineMetrics run_metrics(const Sequence& s, const FlowConfig& flow, int threads) {
    check_inputs(s);
    require(s.renders.size() == s.images.size(), "metrics", "synth");
    PipelineMetrics m;
    m.recovered = evaluate_sequence(s.images, s.masks, s.renders, s.relocated, s.tex_width, s.tex_height, flow);
    const std::vector<Field2> base = constant_texture_renders(s, s.raw, threads);
    m.baseline = evaluate_sequence(s.images, s.masks, base, s.raw, s.tex_width, s.tex_height, flow);
    for (const OptTrace& tr : s.traces) {
        m.lapp_initial.push_back(tr.l_app.empty() ? 0.0 : tr.l_app.front());
        m.lapp_final.push_back(tr.l_app.empty() ? 0.0 : tr.l_app.back());
    }
    return m;
}

}  // namespace uvweave
