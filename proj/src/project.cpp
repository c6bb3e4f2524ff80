#include "uvweave/project.hpp"

#include "uvweave/errors.hpp"
#include "uvweave/io.hpp"
#include "uvweave/scenegen.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

namespace uvweave {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const char* const kProducers[] = {"gt", "frame", "raw", "extend", "optimize", "relocate"};

ojson parse_json(const std::string& text, const std::string& what) {
    try {
        return ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

// One config section; every key read is remembered so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const ojson& root, std::string name) : name_(std::move(name)) {
        if (root.contains(name_)) {
            j_ = root.at(name_);
            if (!j_.is_object()) throw ValidationError("config: section '" + name_ + "' must be an object");
        } else {
            j_ = ojson::object();
        }
    }
    Section(ojson j, std::string name, int) : j_(std::move(j)), name_(std::move(name)) {
        if (!j_.is_object()) throw ValidationError("config: '" + name_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& v) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const ojson& x = j_.at(key);
        bool ok;
        if constexpr (std::is_same_v<T, bool>) ok = x.is_boolean();
        else if constexpr (std::is_unsigned_v<T>) ok = x.is_number_unsigned();
        else if constexpr (std::is_integral_v<T>) ok = x.is_number_integer();
        else if constexpr (std::is_floating_point_v<T>) ok = x.is_number();
        else ok = x.is_string();
        if (!ok) throw ValidationError("config: " + name_ + "." + key + " has the wrong type");
        v = x.get<T>();
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.contains(key) ? j_.at(key) : ojson::object(), name_ + "." + key, 0);
    }

    const ojson& raw(const char* key) {
        seen_.insert(key);
        static const ojson null;
        return j_.contains(key) ? j_.at(key) : null;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ValidationError("config: unknown key " + name_ + "." + k);
    }

private:
    ojson j_;
    std::string name_;
    std::set<std::string> seen_;
};

const std::set<std::string> kSections = {"gen",   "corrupt", "extend",    "optimize",  "relocate",
                                         "synth", "metrics", "retexture", "grad-check"};

ojson parse_config(const std::string& text) {
    if (text.empty()) return ojson::object();
    ojson j = parse_json(text, "config");
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    for (const auto& [k, v] : j.items())
        if (!kSections.count(k)) throw ValidationError("config: unknown section '" + k + "'");
    return j;
}

SceneConfig gen_config(const ojson& root, ojson& snap) {
    SceneConfig c;
    Section s(root, "gen");
    std::string pattern = pattern_name(c.pattern);
    s.get("width", c.width);
    s.get("height", c.height);
    s.get("tex_width", c.tex_width);
    s.get("tex_height", c.tex_height);
    s.get("frames", c.frames);
    s.get("seed", c.seed);
    s.get("amplitude", c.amplitude);
    s.get("frequency", c.frequency);
    s.get("uv_drift", c.uv_drift);
    s.get("parts", c.parts);
    s.get("pattern", pattern);
    s.finish();
    c.pattern = parse_pattern(pattern);
    c.validate();
    snap = {{"width", c.width},          {"height", c.height},
            {"tex_width", c.texture_width()}, {"tex_height", c.texture_height()},
            {"frames", c.frames},        {"seed", c.seed},
            {"amplitude", c.amplitude},  {"frequency", c.frequency},
            {"uv_drift", c.uv_drift},    {"parts", c.parts},
            {"pattern", pattern_name(c.pattern)}};
    return c;
}

CorruptConfig corrupt_config(const ojson& root, ojson& snap) {
    CorruptConfig c;
    Section s(root, "corrupt");
    s.get("margin", c.margin);
    s.get("duplicate_blocks", c.duplicate_blocks);
    s.get("block_size", c.block_size);
    s.get("noise", c.noise);
    s.get("jitter", c.jitter);
    s.get("seed", c.seed);
    s.finish();
    c.validate();
    snap = {{"margin", c.margin}, {"duplicate_blocks", c.duplicate_blocks}, {"block_size", c.block_size},
            {"noise", c.noise},   {"jitter", c.jitter},                     {"seed", c.seed}};
    return c;
}

RelaxConfig extend_config(const ojson& root, ojson& snap) {
    RelaxConfig c;
    Section s(root, "extend");
    s.get("step", c.step);
    s.get("force_tol", c.force_tol);
    s.get("max_iters", c.max_iters);
    s.get("region", c.region);
    s.finish();
    if (!(c.step > 0) || !(c.force_tol > 0) || c.max_iters < 1 || !(c.region > 0))
        throw ValidationError("config: extend values must be positive");
    snap = {{"step", c.step}, {"force_tol", c.force_tol}, {"max_iters", c.max_iters}, {"region", c.region}};
    return c;
}

OptConfig optimize_config(const ojson& root, ojson& snap) {
    OptConfig c;
    Section s(root, "optimize");
    s.get("alpha1", c.alpha1);
    s.get("alpha2", c.alpha2);
    s.get("lr", c.lr);
    s.get("max_steps", c.max_steps);
    s.get("rel_tol", c.rel_tol);
    s.get("window", c.window);
    s.get("backtracking", c.backtracking);
    s.finish();
    c.validate();
    snap = {{"alpha1", c.alpha1},   {"alpha2", c.alpha2}, {"lr", c.lr},
            {"max_steps", c.max_steps}, {"rel_tol", c.rel_tol}, {"window", c.window},
            {"backtracking", c.backtracking}};
    return c;
}

FlowConfig flow_config(Section s, ojson& snap) {
    FlowConfig c;
    s.get("levels", c.levels);
    s.get("block", c.block);
    s.get("search", c.search);
    s.get("subpixel", c.subpixel);
    s.finish();
    if (c.levels < 1 || c.block < 1 || c.search < 0) throw ValidationError("config: bad flow settings");
    snap = {{"levels", c.levels}, {"block", c.block}, {"search", c.search}, {"subpixel", c.subpixel}};
    return c;
}

RelocateConfig relocate_config(const ojson& root, ojson& snap) {
    RelocateConfig c;
    Section s(root, "relocate");
    ojson fsnap;
    c.flow = flow_config(s.sub("flow"), fsnap);
    Section p = s.sub("patch");
    p.get("patch", c.patch.patch);
    p.get("window", c.patch.window);
    p.get("stride", c.patch.stride);
    p.finish();
    s.get("tau", c.tau);
    s.finish();
    if (!(c.tau >= 0)) throw ValidationError("config: relocate.tau must be >= 0");
    if (c.patch.patch < 1 || c.patch.stride < 1 || c.patch.window < 1 || c.patch.window % 2 == 0)
        throw ValidationError("config: bad patch settings");
    snap = {{"tau", c.tau},
            {"flow", fsnap},
            {"patch", {{"patch", c.patch.patch}, {"window", c.patch.window}, {"stride", c.patch.stride}}}};
    return c;
}

SynthConfig synth_config(const ojson& root, ojson& snap) {
    SynthConfig c;
    Section s(root, "synth");
    const ojson& parts = s.raw("reuse_parts");
    s.finish();
    if (!parts.is_null()) {
        if (!parts.is_array()) throw ValidationError("config: synth.reuse_parts must be a list");
        for (const auto& p : parts) {
            if (!p.is_number_integer() || p.get<int>() < 1 || p.get<int>() > kPartCount)
                throw ValidationError("config: synth.reuse_parts entries must be part indices");
            c.reuse_parts.insert(p.get<int>());
        }
    }
    snap = {{"reuse_parts", ojson(std::vector<int>(c.reuse_parts.begin(), c.reuse_parts.end()))}};
    return c;
}

FlowConfig metrics_config(const ojson& root, ojson& snap) {
    Section s(root, "metrics");
    ojson fsnap;
    const FlowConfig c = flow_config(s.sub("flow"), fsnap);
    s.finish();
    snap = {{"flow", fsnap}};
    return c;
}

GradCheckConfig grad_config(const ojson& root, int& scenes, int& size, double& tolerance) {
    Section s(root, "grad-check");
    GradCheckConfig c;
    scenes = 3;
    size = 8;
    tolerance = 1e-3;
    s.get("scenes", scenes);
    s.get("size", size);
    s.get("probes", c.probes);
    s.get("eps", c.eps);
    s.get("alpha1", c.alpha1);
    s.get("alpha2", c.alpha2);
    s.get("seed", c.seed);
    s.get("tolerance", tolerance);
    s.finish();
    if (scenes < 1 || size < 4 || c.probes < 1 || !(c.eps > 0) || !(tolerance > 0))
        throw ValidationError("config: bad grad-check settings");
    return c;
}

// Parses the config and checks every section, so a typo anywhere in the file
// is reported whichever stage runs.
ojson load_config(const std::string& text) {
    const ojson root = parse_config(text);
    ojson snap;
    gen_config(root, snap);
    corrupt_config(root, snap);
    extend_config(root, snap);
    optimize_config(root, snap);
    relocate_config(root, snap);
    synth_config(root, snap);
    metrics_config(root, snap);
    Section(root, "retexture").finish();
    int a, b;
    double tol;
    grad_config(root, a, b, tol);
    return root;
}

std::string idx(int t) {
    char b[16];
    std::snprintf(b, sizeof b, "%04d", t);
    return b;
}

std::string join(const std::string& dir, const std::string& rel) { return (fs::path(dir) / rel).string(); }

UVFiles uv_files(const std::string& producer, int t) {
    return {"uv_" + producer + "/" + idx(t) + ".pfm", "uv_" + producer + "/" + idx(t) + "_sil.pfm"};
}

void write_uv(const std::string& dir, const std::string& producer, int t, const UVMap& P, FrameFiles& f) {
    const UVFiles u = uv_files(producer, t);
    write_uvmap(join(dir, u.uv), join(dir, u.silhouette), P);
    f.uv[producer] = u;
}

UVMap read_uv(const std::string& dir, const Manifest& m, int t, const std::string& producer) {
    const UVFiles& u = m.frames[t].uv.at(producer);
    UVMap P = read_uvmap(join(dir, u.uv), join(dir, u.silhouette), m.parts);
    if (P.width() != m.width || P.height() != m.height)
        throw ValidationError(u.uv + ": size differs from the manifest");
    return P;
}

bool all_have(const Manifest& m, const std::string& producer) {
    for (const FrameFiles& f : m.frames)
        if (!f.uv.count(producer)) return false;
    return !m.frames.empty();
}

void require_stage(const Manifest& m, const char* stage, const char* needed) {
    if (!m.stage(needed))
        throw ValidationError(std::string("stage '") + stage + "' needs '" + needed + "' to have run");
}

// Stage graph: which stages consume the outputs of which.
const std::map<std::string, std::vector<std::string>> kDownstream = {
    {"gen", {"corrupt", "extend"}}, {"corrupt", {"extend"}},          {"extend", {"optimize"}},
    {"optimize", {"relocate"}},     {"relocate", {"synth", "retexture"}}, {"synth", {"metrics"}},
    {"metrics", {}},                {"retexture", {}}};

void invalidate(Manifest& m, const std::string& stage) {
    std::set<std::string> drop;
    std::vector<std::string> todo = {stage};
    while (!todo.empty()) {
        const std::string s = todo.back();
        todo.pop_back();
        if (!drop.insert(s).second) continue;
        for (const auto& d : kDownstream.at(s)) todo.push_back(d);
    }
    std::erase_if(m.stages, [&](const StageRecord& r) { return drop.count(r.name) != 0; });
    for (FrameFiles& f : m.frames) {
        for (const char* p : {"extend", "optimize", "relocate"})
            if (drop.count(p)) f.uv.erase(p);
        if (drop.count("synth")) f.render.clear();
    }
    if (drop.count("relocate")) m.textures.erase("const");
    if (drop.count("metrics")) m.metrics.clear();
}

void record(Manifest& m, const std::string& name, const ojson& config, const ojson& summary) {
    m.stages.push_back({name, config.dump(), summary.dump()});
}

ojson stage_gen(const std::string& dir, const ojson& root, ojson& snap) {
    const SceneConfig c = gen_config(root, snap);
    const FrameSet set = gen_sequence(c);
    fs::create_directories(dir);
    Manifest m;
    m.width = c.width;
    m.height = c.height;
    m.tex_width = c.texture_width();
    m.tex_height = c.texture_height();
    m.parts = c.parts > 0;
    write_pfm(join(dir, "texture_gt.pfm"), set.texture);
    m.textures["gt"] = "texture_gt.pfm";
    ojson lapp = ojson::array();
    for (int t = 0; t < set.frames(); ++t) {
        FrameFiles f;
        f.image = "images/" + idx(t) + ".pfm";
        f.mask = "masks/" + idx(t) + ".pfm";
        write_pfm(join(dir, f.image), set.images[t]);
        write_mask(join(dir, f.mask), set.masks[t], c.width, c.height);
        write_uv(dir, "gt", t, set.gt_uv[t], f);
        write_uv(dir, "frame", t, set.frame_uv[t], f);
        write_uv(dir, "raw", t, set.raw_uv[t], f);
        const Field2& q = set.correspondence[t];
        Field2 q3(q.width(), q.height(), 3);
        for (std::size_t i = 0; i < q.cells(); ++i) {
            q3.at_index(i, 0) = q.at_index(i, 0);
            q3.at_index(i, 1) = q.at_index(i, 1);
        }
        f.correspondence = "correspondence/" + idx(t) + ".pfm";
        write_pfm(join(dir, f.correspondence), q3);
        m.frames.push_back(std::move(f));
    }
    const ojson summary = {{"frames", c.frames}};
    record(m, "gen", snap, summary);
    save_manifest(dir, m);
    return summary;
}

}  // namespace

const StageRecord* Manifest::stage(const std::string& name) const {
    for (const StageRecord& r : stages)
        if (r.name == name) return &r;
    return nullptr;
}

std::string Manifest::to_json() const {
    ojson j;
    j["version"] = version;
    j["width"] = width;
    j["height"] = height;
    j["tex_width"] = tex_width;
    j["tex_height"] = tex_height;
    j["parts"] = parts;
    ojson frames_j = ojson::array();
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const FrameFiles& f = frames[t];
        ojson fj;
        fj["index"] = t;
        fj["image"] = f.image;
        fj["mask"] = f.mask;
        ojson uv = ojson::object();
        for (const char* p : kProducers) {
            auto it = f.uv.find(p);
            if (it != f.uv.end()) uv[p] = {{"uv", it->second.uv}, {"silhouette", it->second.silhouette}};
        }
        fj["uv"] = uv;
        if (!f.correspondence.empty()) fj["correspondence"] = f.correspondence;
        if (!f.render.empty()) fj["render"] = f.render;
        frames_j.push_back(fj);
    }
    j["frames"] = frames_j;
    j["textures"] = ojson::object();
    for (const auto& [k, v] : textures) j["textures"][k] = v;
    if (!metrics.empty()) j["metrics"] = metrics;
    ojson st = ojson::array();
    for (const StageRecord& r : stages)
        st.push_back({{"name", r.name}, {"config", parse_json(r.config, "manifest")}, {"summary", parse_json(r.summary, "manifest")}});
    j["stages"] = st;
    return j.dump(2) + "\n";
}

std::string manifest_file(const std::string& dir) { return join(dir, "manifest.json"); }

Manifest parse_manifest(const std::string& text) {
    const ojson j = parse_json(text, "manifest");
    Manifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != 1) throw ValidationError("manifest: unsupported version " + std::to_string(m.version));
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.tex_width = j.value("tex_width", m.width);
        m.tex_height = j.value("tex_height", m.height);
        m.parts = j.value("parts", false);
        const ojson& frames = j.at("frames");
        if (!frames.is_array() || frames.empty()) throw ValidationError("manifest: no frames");
        for (std::size_t t = 0; t < frames.size(); ++t) {
            const ojson& fj = frames[t];
            if (fj.at("index").get<std::size_t>() != t)
                throw ValidationError("manifest: frame indices must be contiguous from 0 (entry " + std::to_string(t) +
                                      " has index " + fj.at("index").dump() + ")");
            FrameFiles f;
            f.image = fj.at("image").get<std::string>();
            f.mask = fj.at("mask").get<std::string>();
            if (fj.contains("uv")) {
                for (const auto& [k, v] : fj.at("uv").items()) {
                    if (std::find(std::begin(kProducers), std::end(kProducers), k) == std::end(kProducers))
                        throw ValidationError("manifest: unknown UV producer '" + k + "'");
                    f.uv[k] = {v.at("uv").get<std::string>(), v.at("silhouette").get<std::string>()};
                }
            }
            f.correspondence = fj.value("correspondence", std::string());
            f.render = fj.value("render", std::string());
            m.frames.push_back(std::move(f));
        }
        if (j.contains("textures"))
            for (const auto& [k, v] : j.at("textures").items()) m.textures[k] = v.get<std::string>();
        m.metrics = j.value("metrics", std::string());
        if (j.contains("stages"))
            for (const ojson& r : j.at("stages"))
                m.stages.push_back({r.at("name").get<std::string>(), r.value("config", ojson::object()).dump(),
                                    r.value("summary", ojson::object()).dump()});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    if (m.width < 1 || m.height < 1 || m.tex_width < 1 || m.tex_height < 1)
        throw ValidationError("manifest: sizes must be positive");
    return m;
}

Manifest load_manifest(const std::string& dir) {
    const std::string path = manifest_file(dir);
    if (!fs::exists(path)) throw ValidationError("no manifest at " + path);
    Manifest m = parse_manifest(read_file(path));
    auto check = [&](const std::string& rel) {
        if (!rel.empty() && !fs::exists(join(dir, rel))) throw ValidationError("manifest: missing file " + rel);
    };
    for (const FrameFiles& f : m.frames) {
        check(f.image);
        check(f.mask);
        for (const auto& [k, u] : f.uv) {
            check(u.uv);
            check(u.silhouette);
        }
        check(f.correspondence);
        check(f.render);
    }
    for (const auto& [k, v] : m.textures) check(v);
    check(m.metrics);
    return m;
}

void save_manifest(const std::string& dir, const Manifest& m) { write_file(manifest_file(dir), m.to_json()); }

Field2 read_image(const std::string& path) {
    if (fs::path(path).extension() == ".ppm") return read_ppm(path);
    Field2 f = read_pfm(path);
    if (f.channels() != 3) throw ValidationError(path + ": images need three channels");
    return f;
}

Sequence load_sequence(const std::string& dir, const Manifest& m) {
    Sequence s;
    s.tex_width = m.tex_width;
    s.tex_height = m.tex_height;
    const int n = static_cast<int>(m.frames.size());
    for (int t = 0; t < n; ++t) {
        const FrameFiles& f = m.frames[t];
        Field2 img = read_image(join(dir, f.image));
        int w = 0, h = 0;
        Mask mask = read_mask(join(dir, f.mask), &w, &h);
        if (img.width() != m.width || img.height() != m.height || w != m.width || h != m.height)
            throw ValidationError("frame " + std::to_string(t) + ": size differs from the manifest");
        s.images.push_back(std::move(img));
        s.masks.push_back(std::move(mask));
    }
    auto load_all = [&](const std::string& producer, std::vector<UVMap>& out) {
        if (!all_have(m, producer)) return;
        for (int t = 0; t < n; ++t) out.push_back(read_uv(dir, m, t, producer));
    };
    load_all("raw", s.raw);
    load_all("extend", s.extended);
    load_all("optimize", s.optimized);
    load_all("relocate", s.relocated);
    if (m.textures.count("const")) s.texture_const = read_pfm(join(dir, m.textures.at("const")));
    if (const StageRecord* r = m.stage("optimize")) {
        const ojson sum = parse_json(r->summary, "manifest");
        for (const ojson& f : sum.at("frames")) {
            OptTrace tr;
            tr.l_app = {f.at("l_app_initial").get<double>(), f.at("l_app_final").get<double>()};
            tr.steps = f.at("steps").get<int>();
            s.traces.push_back(std::move(tr));
        }
    }
    bool renders = true;
    for (const FrameFiles& f : m.frames) renders = renders && !f.render.empty();
    if (renders)
        for (const FrameFiles& f : m.frames) s.renders.push_back(read_pfm(join(dir, f.render)));
    return s;
}

namespace {

ojson stage_on_manifest(const std::string& stage, const std::string& dir, const ojson& root, const StageOptions& opt,
                        int threads, ojson& snap) {
    Manifest m = load_manifest(dir);
    const int n = static_cast<int>(m.frames.size());
    ojson summary;

    if (stage == "corrupt") {
        const CorruptConfig c = corrupt_config(root, snap);
        if (!all_have(m, "frame")) throw ValidationError("stage 'corrupt' needs 'gen' to have run");
        FrameSet set;
        for (int t = 0; t < n; ++t) set.frame_uv.push_back(read_uv(dir, m, t, "frame"));
        set.images.resize(n);  // frames() counts images
        const FrameSet out = corrupt(set, c);
        invalidate(m, stage);
        ojson fg = ojson::array();
        for (int t = 0; t < n; ++t) {
            write_uv(dir, "raw", t, out.raw_uv[t], m.frames[t]);
            std::size_t k = 0;
            for (auto v : out.raw_uv[t].silhouette) k += v != 0;
            fg.push_back(k);
        }
        summary = {{"raw_foreground", fg}};
    } else if (stage == "extend") {
        const RelaxConfig c = extend_config(root, snap);
        if (!all_have(m, "raw")) throw ValidationError("stage 'extend' needs 'gen' or 'corrupt' to have run");
        Sequence s = load_sequence(dir, m);
        run_extend(s, c, threads);
        invalidate(m, stage);
        ojson frames = ojson::array();
        for (int t = 0; t < n; ++t) {
            write_uv(dir, "extend", t, s.extended[t], m.frames[t]);
            const RelaxReport& r = s.relax[t];
            frames.push_back({{"points", r.points},
                              {"springs", r.springs},
                              {"distortion_before", r.distortion_before},
                              {"distortion_after", r.distortion_after},
                              {"max_force", r.max_force},
                              {"converged", r.converged}});
        }
        summary = {{"frames", frames}};
    } else if (stage == "optimize") {
        const OptConfig c = optimize_config(root, snap);
        require_stage(m, "optimize", "extend");
        Sequence s = load_sequence(dir, m);
        run_optimize(s, c, threads);
        invalidate(m, stage);
        ojson frames = ojson::array();
        for (int t = 0; t < n; ++t) {
            write_uv(dir, "optimize", t, s.optimized[t], m.frames[t]);
            const OptTrace& tr = s.traces[t];
            frames.push_back({{"steps", tr.steps},
                              {"rejected", tr.rejected},
                              {"clamped", tr.clamped},
                              {"early_stop", tr.early_stop},
                              {"l_app_initial", tr.l_app.front()},
                              {"l_app_final", tr.l_app.back()},
                              {"loss_final", tr.loss.back()}});
        }
        summary = {{"frames", frames}};
    } else if (stage == "relocate") {
        const RelocateConfig c = relocate_config(root, snap);
        require_stage(m, "relocate", "optimize");
        Sequence s = load_sequence(dir, m);
        std::vector<FlowField> flows;
        if (!opt.flow_dir.empty()) {
            flows.resize(n);
            for (int t = 1; t < n; ++t) {
                flows[t] = read_flo(join(opt.flow_dir, idx(t) + ".flo"));
                if (flows[t].width() != m.tex_width || flows[t].height() != m.tex_height)
                    throw ValidationError("flow " + idx(t) + ".flo: size differs from the texture");
            }
            snap["flow_dir"] = opt.flow_dir;
        }
        run_relocate(s, c, threads, flows.empty() ? nullptr : &flows);
        invalidate(m, stage);
        write_pfm(join(dir, "texture_const.pfm"), s.texture_const);
        m.textures["const"] = "texture_const.pfm";
        for (int t = 0; t < n; ++t) write_uv(dir, "relocate", t, s.relocated[t], m.frames[t]);
        summary = {{"pruned_fraction", s.pruned_fraction}};
    } else if (stage == "synth") {
        const SynthConfig c = synth_config(root, snap);
        require_stage(m, "synth", "relocate");
        Sequence s = load_sequence(dir, m);
        run_synth(s, c, threads);
        invalidate(m, stage);
        for (int t = 0; t < n; ++t) {
            m.frames[t].render = "renders/" + idx(t) + ".pfm";
            write_pfm(join(dir, m.frames[t].render), s.renders[t]);
        }
        summary = {{"frames", n}};
    } else if (stage == "metrics") {
        const FlowConfig c = metrics_config(root, snap);
        require_stage(m, "metrics", "synth");
        Sequence s = load_sequence(dir, m);
        const PipelineMetrics pm = run_metrics(s, c, threads);
        invalidate(m, stage);
        m.metrics = "metrics.json";
        const std::string text = pm.to_json() + "\n";
        write_file(join(dir, m.metrics), text);
        summary = parse_json(text, "metrics");
    } else if (stage == "retexture") {
        require_stage(m, "retexture", "relocate");
        if (opt.texture.empty()) throw ValidationError("retexture needs a texture");
        const Field2 T = read_image(opt.texture);
        const std::string out = opt.out_dir.empty() ? join(dir, "retexture") : opt.out_dir;
        fs::create_directories(out);
        // Lookups only: relocated UVs in, images out.
        std::vector<UVMap> uvs(n);
        for (int t = 0; t < n; ++t) uvs[t] = read_uv(dir, m, t, "relocate");
        std::vector<std::string> bytes(n);
        parallel_for(static_cast<std::size_t>(n), threads,
                     [&](std::size_t t) { bytes[t] = encode_ppm(render_lookup(T, uvs[t])); });
        ojson files = ojson::array();
        for (int t = 0; t < n; ++t) {
            write_file((fs::path(out) / (idx(t) + ".ppm")).string(), bytes[t]);
            files.push_back(idx(t) + ".ppm");
        }
        // the default output directory is recorded relative to the sequence
        snap = {{"texture", opt.texture}, {"out_dir", opt.out_dir.empty() ? std::string("retexture") : opt.out_dir}};
        invalidate(m, stage);
        summary = {{"frames", n}, {"outputs", files}};
    } else {
        throw ValidationError("unknown stage '" + stage + "'");
    }
    record(m, stage, snap, summary);
    save_manifest(dir, m);
    return summary;
}

}  // namespace

std::string run_stage(const std::string& stage, const std::string& dir, const StageOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const ojson root = load_config(opt.config);
    const int threads = resolve_threads(opt.threads);
    ojson snap;
    const ojson summary = stage == "gen" ? stage_gen(dir, root, snap) : stage_on_manifest(stage, dir, root, opt, threads, snap);
    if (opt.log) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "uvweave: " << stage << " took " << s << " s on " << threads << " thread(s)\n";
    }
    return summary.dump(2);
}

std::string run_pipeline(const std::string& dir, const StageOptions& opt) {
    std::string last;
    for (const char* s : {"extend", "optimize", "relocate", "synth", "metrics"}) last = run_stage(s, dir, opt);
    return last;
}

std::string GradCheckSummary::to_json() const {
    ojson j;
    j["scenes"] = scenes;
    j["probes"] = probes;
    j["max_rel_error"] = max_rel_error;
    j["tolerance"] = tolerance;
    j["pass"] = max_rel_error < tolerance;
    return j.dump(2);
}

GradCheckSummary run_grad_check(const std::string& config_json) {
    const ojson root = load_config(config_json);
    GradCheckSummary out;
    int scenes = 0, size = 0;
    const GradCheckConfig c = grad_config(root, scenes, size, out.tolerance);
    for (int k = 0; k < scenes; ++k) {
        const GradCheckScene sc = make_grad_check_scene(c.seed + static_cast<std::uint64_t>(k), size);
        GradCheckConfig ck = c;
        ck.seed = c.seed * 31 + static_cast<std::uint64_t>(k);
        const GradCheckReport r = finite_difference_check(sc.uv, sc.image, ck);
        out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
        out.probes += r.probes;
    }
    out.scenes = scenes;
    return out;
}

}  // namespace uvweave
