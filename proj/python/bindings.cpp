#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "emoseg/gradcheck.hpp"
#include "emoseg/metrics.hpp"
#include "emoseg/model.hpp"
#include "emoseg/ops.hpp"
#include "emoseg/scene.hpp"
#include "emoseg/supervision.hpp"

namespace py = pybind11;
using namespace emoseg;

namespace {

using Arr = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArr = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const Arr& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    Tensor<float> t(shape);
    std::copy(a.data(), a.data() + t.numel(), t.data.begin());
    return t;
}

Arr to_array(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    Arr a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

Mask to_mask(const MaskArr& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be 2-D");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = a.data()[i] ? 1 : 0;
    return m;
}

MaskArr from_mask(const Mask& m) {
    MaskArr a({static_cast<py::ssize_t>(m.h), static_cast<py::ssize_t>(m.w)});
    std::copy(m.v.begin(), m.v.end(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "event-prior moving-object segmentation core";

    m.def("conv1x1", [](const Arr& x, const Arr& w, const Arr& b) {
        return to_array(ops::conv1x1(to_tensor(x), to_tensor(w), to_tensor(b)));
    });
    m.def("depthwise_conv3x3", [](const Arr& x, const Arr& w) {
        return to_array(ops::depthwise_conv3x3(to_tensor(x), to_tensor(w)));
    });
    m.def("softmax_spatial",
          [](const Arr& x) { return to_array(ops::softmax_spatial(to_tensor(x))); });
    m.def("bilinear_resize", [](const Arr& x, int h, int w) {
        return to_array(ops::bilinear_resize(to_tensor(x), h, w));
    });
    m.def("maxpool_to", [](const Arr& x, int h, int w) {
        return to_array(ops::maxpool_to(to_tensor(x), h, w));
    });

    m.def("dilate", [](const MaskArr& m) { return from_mask(dilate(to_mask(m))); });
    m.def("build_st_map", [](const MaskArr& mask, const MaskArr& events) {
        return from_mask(build_st_map(to_mask(mask), to_mask(events)));
    });

    m.def("jaccard",
          [](const MaskArr& p, const MaskArr& g) { return jaccard(to_mask(p), to_mask(g)); });
    m.def("boundary_f",
          [](const MaskArr& p, const MaskArr& g) { return boundary_f(to_mask(p), to_mask(g)); });

    py::class_<SceneConfig>(m, "SceneConfig")
        .def(py::init<>())
        .def_readwrite("h", &SceneConfig::h)
        .def_readwrite("w", &SceneConfig::w)
        .def_readwrite("t_frames", &SceneConfig::t_frames)
        .def_readwrite("n_moving", &SceneConfig::n_moving)
        .def_readwrite("n_static", &SceneConfig::n_static)
        .def_readwrite("theta_e", &SceneConfig::theta_e);
    m.def("generate_scene", [](const SceneConfig& cfg, uint64_t seed) {
        SceneSample s = generate(cfg, seed);
        py::dict d;
        py::list frames, events, masks, flow;
        for (const auto& f : s.frames) frames.append(to_array(f));
        for (const auto& e : s.events) events.append(from_mask(e));
        for (const auto& mk : s.masks) masks.append(from_mask(mk));
        for (const auto& fl : s.flow) flow.append(to_array(fl));
        d["frames"] = frames;
        d["events"] = events;
        d["masks"] = masks;
        d["flow"] = flow;
        d["ego"] = py::make_tuple(s.ego_vx, s.ego_vy);
        return d;
    });

    m.def("infer_checkpoint", [](const std::string& ckpt, const Arr& frame, bool multi_scale) {
        ModelConfig cfg;
        ParamSet<float> params = load_checkpoint(ckpt, cfg);
        std::vector<Mask> out = infer(cfg, params, {to_tensor(frame)}, multi_scale);
        return from_mask(out[0]);
    });
}
