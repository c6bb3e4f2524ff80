#include "uvweave/errors.hpp"
#include "uvweave/evalsynth.hpp"
#include "uvweave/extendms.hpp"
#include "uvweave/gradcore.hpp"
#include "uvweave/io.hpp"
#include "uvweave/project.hpp"
#include "uvweave/relocate.hpp"
#include "uvweave/scenegen.hpp"
#include "uvweave/uvopt.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

namespace py = pybind11;
using namespace uvweave;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Fields travel as (height, width, channels) float64 arrays.
py::array_t<double> to_numpy(const Field2& f) {
    py::array_t<double> a({f.height(), f.width(), f.channels()});
    if (!f.empty()) std::memcpy(a.mutable_data(), f.data().data(), f.data().size() * sizeof(double));
    return a;
}

Field2 from_numpy(const DArray& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ValidationError("expected a (h, w) or (h, w, c) array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    return Field2::from_data(w, h, c, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint8_t> mask_to_numpy(const Mask& m, int w, int h) {
    py::array_t<std::uint8_t> a({h, w});
    if (!m.empty()) std::memcpy(a.mutable_data(), m.data(), m.size());
    return a;
}

Mask mask_from_numpy(const BArray& a, std::size_t cells) {
    if (static_cast<std::size_t>(a.size()) != cells) throw ValidationError("mask size does not match the grid");
    Mask m(a.data(), a.data() + a.size());
    for (auto& v : m) v = v != 0;
    return m;
}

std::vector<Field2> fields_from(const std::vector<DArray>& v) {
    std::vector<Field2> out;
    for (const auto& a : v) out.push_back(from_numpy(a));
    return out;
}

py::list fields_to(const std::vector<Field2>& v) {
    py::list out;
    for (const auto& f : v) out.append(to_numpy(f));
    return out;
}

py::dict trace_dict(const OptTrace& t) {
    py::dict d;
    d["loss"] = t.loss;
    d["l_app"] = t.l_app;
    d["lr"] = t.lr;
    d["steps"] = t.steps;
    d["rejected"] = t.rejected;
    d["clamped"] = t.clamped;
    d["early_stop"] = t.early_stop;
    return d;
}

}  // namespace

PYBIND11_MODULE(uvweave, m) {
    m.doc() = "UV map cleanup, temporal relocation and lookup synthesis";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<UVMap>(m, "UVMap")
        .def(py::init<int, int, bool>(), py::arg("width"), py::arg("height"), py::arg("with_parts") = false)
        .def_static(
            "identity",
            [](int w, int h, std::optional<BArray> sil) {
                return UVMap::identity(w, h, sil ? mask_from_numpy(*sil, static_cast<std::size_t>(w) * h)
                                                 : Mask(static_cast<std::size_t>(w) * h, 1));
            },
            py::arg("width"), py::arg("height"), py::arg("silhouette") = py::none())
        .def_property_readonly("width", &UVMap::width)
        .def_property_readonly("height", &UVMap::height)
        .def_property_readonly("has_parts", &UVMap::has_parts)
        .def_property(
            "uv", [](const UVMap& P) { return to_numpy(P.uv); },
            [](UVMap& P, const DArray& a) {
                Field2 f = from_numpy(a);
                if (f.width() != P.width() || f.height() != P.height() || f.channels() != 2)
                    throw ValidationError("uv must be (height, width, 2)");
                P.uv = std::move(f);
            })
        .def_property(
            "silhouette", [](const UVMap& P) { return mask_to_numpy(P.silhouette, P.width(), P.height()); },
            [](UVMap& P, const BArray& a) { P.silhouette = mask_from_numpy(a, P.cells()); })
        .def_property(
            "part",
            [](const UVMap& P) -> py::object {
                if (!P.has_parts()) return py::none();
                return mask_to_numpy(P.part, P.width(), P.height());
            },
            [](UVMap& P, const BArray& a) {
                if (static_cast<std::size_t>(a.size()) != P.cells()) throw ValidationError("part size mismatch");
                P.part.assign(a.data(), a.data() + a.size());
            })
        .def("validate", &UVMap::validate);

    py::enum_<Pattern>(m, "Pattern")
        .value("blobs", Pattern::blobs)
        .value("checker", Pattern::checker)
        .value("grid", Pattern::grid);

    py::class_<SceneConfig>(m, "SceneConfig")
        .def(py::init<>())
        .def_readwrite("width", &SceneConfig::width)
        .def_readwrite("height", &SceneConfig::height)
        .def_readwrite("tex_width", &SceneConfig::tex_width)
        .def_readwrite("tex_height", &SceneConfig::tex_height)
        .def_readwrite("frames", &SceneConfig::frames)
        .def_readwrite("seed", &SceneConfig::seed)
        .def_readwrite("amplitude", &SceneConfig::amplitude)
        .def_readwrite("frequency", &SceneConfig::frequency)
        .def_readwrite("uv_drift", &SceneConfig::uv_drift)
        .def_readwrite("parts", &SceneConfig::parts)
        .def_readwrite("pattern", &SceneConfig::pattern);

    py::class_<CorruptConfig>(m, "CorruptConfig")
        .def(py::init<>())
        .def_readwrite("margin", &CorruptConfig::margin)
        .def_readwrite("duplicate_blocks", &CorruptConfig::duplicate_blocks)
        .def_readwrite("block_size", &CorruptConfig::block_size)
        .def_readwrite("noise", &CorruptConfig::noise)
        .def_readwrite("jitter", &CorruptConfig::jitter)
        .def_readwrite("seed", &CorruptConfig::seed);

    py::class_<FrameSet>(m, "FrameSet")
        .def_property_readonly("frames", &FrameSet::frames)
        .def_property_readonly("texture", [](const FrameSet& f) { return to_numpy(f.texture); })
        .def_property_readonly("images", [](const FrameSet& f) { return fields_to(f.images); })
        .def_property_readonly("masks",
                               [](const FrameSet& f) {
                                   py::list out;
                                   for (std::size_t t = 0; t < f.masks.size(); ++t)
                                       out.append(mask_to_numpy(f.masks[t], f.images[t].width(), f.images[t].height()));
                                   return out;
                               })
        .def_readonly("gt_uv", &FrameSet::gt_uv)
        .def_readonly("frame_uv", &FrameSet::frame_uv)
        .def_readonly("raw_uv", &FrameSet::raw_uv)
        .def_property_readonly("correspondence", [](const FrameSet& f) { return fields_to(f.correspondence); });

    m.def("gen_sequence", &gen_sequence, py::arg("config"));
    m.def("corrupt", &corrupt, py::arg("frames"), py::arg("config"));

    py::class_<OptConfig>(m, "OptConfig")
        .def(py::init<>())
        .def_readwrite("alpha1", &OptConfig::alpha1)
        .def_readwrite("alpha2", &OptConfig::alpha2)
        .def_readwrite("lr", &OptConfig::lr)
        .def_readwrite("max_steps", &OptConfig::max_steps)
        .def_readwrite("rel_tol", &OptConfig::rel_tol)
        .def_readwrite("window", &OptConfig::window)
        .def_readwrite("backtracking", &OptConfig::backtracking);

    m.def(
        "loss_app", [](const UVMap& P, const DArray& I) { return loss_app(P, from_numpy(I)); }, py::arg("uv"),
        py::arg("image"));
    m.def(
        "loss_reg", [](const UVMap& P, double a1, double a2) { return loss_reg(P, a1, a2); }, py::arg("uv"),
        py::arg("alpha1") = 100.0, py::arg("alpha2") = 10.0);
    m.def(
        "grad_total",
        [](const UVMap& P, const DArray& I, double a1, double a2) {
            const LossReport r = grad_total(P, from_numpy(I), a1, a2);
            return py::make_tuple(r.l_app, r.l_reg, to_numpy(r.grad));
        },
        py::arg("uv"), py::arg("image"), py::arg("alpha1") = 100.0, py::arg("alpha2") = 10.0);
    m.def(
        "reconstruct", [](const UVMap& P, const DArray& I) { return to_numpy(reconstruct(P, from_numpy(I))); },
        py::arg("uv"), py::arg("image"));

    m.def(
        "extend_uv",
        [](const UVMap& raw, const BArray& mask) {
            const UVMap labeled = label_fill(raw, mask_from_numpy(mask, raw.cells()));
            const Extrapolation ex = extrapolate_uv(labeled);
            const Relaxation r = relax_springs(ex.uv, ex.new_points, RelaxConfig{});
            py::dict rep;
            rep["distortion_before"] = r.report.distortion_before;
            rep["distortion_after"] = r.report.distortion_after;
            rep["max_force"] = r.report.max_force;
            rep["converged"] = r.report.converged;
            return py::make_tuple(r.uv, rep);
        },
        py::arg("raw"), py::arg("mask"));

    m.def(
        "optimize_uv",
        [](const UVMap& P, const DArray& I, const OptConfig& cfg) {
            OptResult r;
            const Field2 img = from_numpy(I);
            {
                py::gil_scoped_release release;
                r = optimize_uv(P, img, cfg);
            }
            return py::make_tuple(r.uv, trace_dict(r.trace));
        },
        py::arg("uv"), py::arg("image"), py::arg("config") = OptConfig{});

    m.def(
        "unwrap_texture",
        [](const DArray& I, const UVMap& P, int tw, int th) {
            const Field2 T = unwrap_texture(from_numpy(I), P, tw, th);
            return py::make_tuple(to_numpy(T), mask_to_numpy(T.mask(), tw, th));
        },
        py::arg("image"), py::arg("uv"), py::arg("tex_width"), py::arg("tex_height"));

    m.def(
        "render_lookup",
        [](const DArray& T, const UVMap& P) {
            RenderStats s;
            const Field2 out = render_lookup(from_numpy(T), P, &s);
            py::dict d;
            d["pixels"] = s.pixels;
            d["fetches"] = s.fetches;
            d["texel_reads"] = s.texel_reads;
            d["madds"] = s.madds;
            return py::make_tuple(to_numpy(out), d);
        },
        py::arg("texture"), py::arg("uv"));

    m.def(
        "metric_psnr",
        [](const DArray& a, const DArray& b, std::optional<BArray> mask) {
            const Field2 fa = from_numpy(a);
            return metric_psnr(fa, from_numpy(b), mask ? mask_from_numpy(*mask, fa.cells()) : Mask{});
        },
        py::arg("a"), py::arg("b"), py::arg("mask") = py::none());
    m.def(
        "metric_tdiff",
        [](const std::vector<DArray>& frames, const std::vector<UVMap>& uvs, int tw, int th) {
            return metric_tdiff(fields_from(frames), uvs, tw, th);
        },
        py::arg("frames"), py::arg("uvs"), py::arg("tex_width"), py::arg("tex_height"));
    m.def(
        "metric_tof",
        [](const std::vector<DArray>& real, const std::vector<DArray>& gen) {
            return metric_tof(fields_from(real), fields_from(gen));
        },
        py::arg("real"), py::arg("generated"));

    m.def(
        "read_pfm", [](const std::string& p) { return to_numpy(read_pfm(p)); }, py::arg("path"));
    m.def(
        "write_pfm",
        [](const std::string& p, const DArray& a, bool little) { write_pfm(p, from_numpy(a), little); },
        py::arg("path"), py::arg("field"), py::arg("little_endian") = true);

    m.def(
        "run_stage",
        [](const std::string& stage, const std::string& dir, const std::string& config, int threads,
           const std::string& flow_dir, const std::string& texture, const std::string& out_dir) {
            StageOptions o;
            o.config = config;
            o.threads = threads;
            o.flow_dir = flow_dir;
            o.texture = texture;
            o.out_dir = out_dir;
            py::gil_scoped_release release;
            return run_stage(stage, dir, o);
        },
        py::arg("stage"), py::arg("dir"), py::arg("config") = "", py::arg("threads") = 0, py::arg("flow_dir") = "",
        py::arg("texture") = "", py::arg("out_dir") = "",
        "Run one stage on a sequence directory; returns the stage summary as JSON text.");
    m.def(
        "run_pipeline",
        [](const std::string& dir, const std::string& config, int threads) {
            StageOptions o;
            o.config = config;
            o.threads = threads;
            py::gil_scoped_release release;
            return run_pipeline(dir, o);
        },
        py::arg("dir"), py::arg("config") = "", py::arg("threads") = 0);
    m.def(
        "grad_check", [](const std::string& config) { return run_grad_check(config).to_json(); },
        py::arg("config") = "");
}
