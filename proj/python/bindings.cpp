#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "derain/app.hpp"
#include "derain/checkpoint.hpp"
#include "derain/data.hpp"
#include "derain/image_io.hpp"
#include "derain/loss.hpp"
#include "derain/metrics.hpp"
#include "derain/optim.hpp"

namespace py = pybind11;
using namespace derain;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as float32 arrays shaped (n, c, h, w) or (c, h, w).
Tensor<float> to_tensor(const FloatArray& a) {
    Shape s;
    if (a.ndim() == 4) {
        s = {a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
    } else if (a.ndim() == 3) {
        s = {1, a.shape(0), a.shape(1), a.shape(2)};
    } else {
        throw std::invalid_argument("expected an array shaped (n, c, h, w) or (c, h, w), got " +
                                    std::to_string(a.ndim()) + " dimensions");
    }
    Tensor<float> t(s);
    std::memcpy(t.ptr(), a.data(), sizeof(float) * static_cast<std::size_t>(s.numel()));
    return t;
}

py::array_t<float> to_array(const Tensor<float>& t) {
    const Shape& s = t.shape();
    py::array_t<float> a({s.n, s.c, s.h, s.w});
    std::memcpy(a.mutable_data(), t.ptr(), sizeof(float) * static_cast<std::size_t>(s.numel()));
    return a;
}

py::dict breakdown_dict(const LossBreakdown& bd) {
    py::dict d;
    if (bd.has_guide) d["guide"] = bd.guide;
    if (bd.has_rain) d["rain"] = bd.rain;
    if (bd.has_rain_free) d["rain_free"] = bd.rain_free;
    if (bd.has_physical) d["physical"] = bd.physical;
    d["total"] = bd.total;
    return d;
}

Batch make_batch(const FloatArray& o, const FloatArray& b, const FloatArray& r) {
    Batch batch{to_tensor(o), to_tensor(b), to_tensor(r), {}};
    for (std::int64_t i = 0; i < batch.o.shape().n; ++i) {
        batch.indices.push_back(static_cast<std::size_t>(i));
    }
    return batch;
}

py::tuple pair_tuple(const RainPair& p) {
    return py::make_tuple(to_array(p.o), to_array(p.b), to_array(p.r));
}

}  // namespace

PYBIND11_MODULE(pyderain, m) {
    m.doc() = "Physics-guided single-image deraining: model, training, metrics and data synthesis.";

    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::enum_<Topology>(m, "Topology")
        .value("M1", Topology::M1)
        .value("M2", Topology::M2)
        .value("M3", Topology::M3)
        .value("M4", Topology::M4);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("base_channels", &ModelConfig::base_channels)
        .def_readwrite("encoder_depth", &ModelConfig::encoder_depth)
        .def_readwrite("msrb_per_level", &ModelConfig::msrb_per_level)
        .def_readwrite("use_multiscale", &ModelConfig::use_multiscale)
        .def_readwrite("msrb_scales", &ModelConfig::msrb_scales)
        .def_readwrite("guide_dilations", &ModelConfig::guide_dilations)
        .def_property(
            "topology", [](const ModelConfig& c) { return c.ablation.topology; },
            [](ModelConfig& c, Topology t) { c.ablation.topology = t; })
        .def_property(
            "no_dilated_streams", [](const ModelConfig& c) { return c.ablation.no_dilated_streams; },
            [](ModelConfig& c, bool v) { c.ablation.no_dilated_streams = v; })
        .def_property(
            "no_physical_loss", [](const ModelConfig& c) { return c.ablation.no_physical_loss; },
            [](ModelConfig& c, bool v) { c.ablation.no_physical_loss = v; })
        .def("validate", &ModelConfig::validate)
        .def("spatial_multiple", &ModelConfig::spatial_multiple)
        .def("to_json", [](const ModelConfig& c) { return model_config_json(c); })
        .def(py::self == py::self);

    py::class_<LossWeights>(m, "LossWeights")
        .def(py::init<>())
        .def(py::init([](double alpha, double beta, double gamma) {
                 return LossWeights{alpha, beta, gamma};
             }),
             py::arg("alpha") = 0.5, py::arg("beta") = 0.5, py::arg("gamma") = 0.001)
        .def_readwrite("alpha", &LossWeights::alpha)
        .def_readwrite("beta", &LossWeights::beta)
        .def_readwrite("gamma", &LossWeights::gamma);

    // Trainer owns the network and the ADAM state.
    py::class_<app::Trainer>(m, "Model")
        .def(py::init<ModelConfig, LossWeights, std::uint64_t>(), py::arg("config"),
             py::arg("weights") = LossWeights{}, py::arg("seed") = 7)
        .def_static(
            "load",
            [](const std::filesystem::path& path, const LossWeights& w) {
                return app::Trainer(load_checkpoint(path), w);
            },
            py::arg("path"), py::arg("weights") = LossWeights{})
        .def(
            "save",
            [](const app::Trainer& t, const std::filesystem::path& path, std::int64_t epoch) {
                save_checkpoint(t.checkpoint(epoch), path);
            },
            py::arg("path"), py::arg("epoch") = 0)
        .def_property_readonly("config", [](const app::Trainer& t) { return t.net().config(); })
        .def_property_readonly("parameter_count",
                               [](const app::Trainer& t) { return t.net().parameter_count(); })
        .def_property_readonly("adam_step", [](const app::Trainer& t) { return t.adam().step; })
        .def(
            "step",
            [](app::Trainer& t, const FloatArray& o, const FloatArray& b, const FloatArray& r,
               double lr) {
                const Batch batch = make_batch(o, b, r);
                LossBreakdown bd;
                {
                    py::gil_scoped_release release;
                    bd = t.step(batch, lr);
                }
                return breakdown_dict(bd);
            },
            py::arg("o"), py::arg("b"), py::arg("r"), py::arg("lr") = 5e-4,
            "One ADAM update on a batch; returns the loss terms before the update.")
        .def(
            "losses",
            [](const app::Trainer& t, const FloatArray& o, const FloatArray& b,
               const FloatArray& r) { return breakdown_dict(t.losses(make_batch(o, b, r))); },
            py::arg("o"), py::arg("b"), py::arg("r"))
        .def(
            "derain",
            [](const app::Trainer& t, const FloatArray& o) {
                const Tensor<float> input = to_tensor(o);
                app::InferenceResult res;
                {
                    py::gil_scoped_release release;
                    res = t.infer(input);
                }
                py::dict d;
                d["final"] = to_array(res.final);
                if (res.rain_hat) d["rain"] = to_array(*res.rain_hat);
                if (res.free_hat) d["free"] = to_array(*res.free_hat);
                if (res.guide_hat) d["guide"] = to_array(*res.guide_hat);
                return d;
            },
            py::arg("o"),
            "Runs the network on images of any size; returns unclamped outputs by name.");

    m.def("psnr", [](const FloatArray& a, const FloatArray& b,
                     double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
          py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def("ssim", [](const FloatArray& a, const FloatArray& b,
                     double peak) { return ssim(to_tensor(a), to_tensor(b), peak); },
          py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    m.def("combine_losses", &combine_losses, py::arg("guide"), py::arg("rain"),
          py::arg("rain_free"), py::arg("physical"), py::arg("weights") = LossWeights{});
    m.def(
        "lr_at",
        [](std::int64_t epoch, double initial, std::vector<std::int64_t> milestones, double factor,
           std::int64_t total_epochs) {
            return lr_at(LrSchedule{initial, std::move(milestones), factor, total_epochs}, epoch);
        },
        py::arg("epoch"), py::arg("initial") = 5e-4,
        py::arg("milestones") = std::vector<std::int64_t>{1200, 1600}, py::arg("factor") = 0.1,
        py::arg("total_epochs") = 2000);

    m.def(
        "synthesize_background",
        [](std::int64_t h, std::int64_t w, std::uint64_t seed) {
            return to_array(synthesize_background(h, w, seed));
        },
        py::arg("h"), py::arg("w"), py::arg("seed"));
    m.def(
        "synthesize_rain",
        [](const FloatArray& b, std::uint64_t seed) {
            RainParams p;
            p.seed = seed;
            return pair_tuple(synthesize_rain(to_tensor(b), p));
        },
        py::arg("b"), py::arg("seed"),
        "Returns (o, b, r) with o = clip(b + streaks) and r = o - b.");
    m.def(
        "make_synthetic_set",
        [](std::size_t count, std::int64_t size, std::uint64_t seed) {
            py::list out;
            for (const RainPair& p : make_synthetic_set(count, size, RainParams{}, seed)) {
                out.append(pair_tuple(p));
            }
            return out;
        },
        py::arg("count"), py::arg("size"), py::arg("seed"));

    m.def("load_png", [](const std::filesystem::path& p) { return to_array(load_png(p)); });
    m.def("save_png", [](const FloatArray& img, const std::filesystem::path& p) {
        save_png(to_tensor(img), p);
    });

    // Synthetic training run through the same loop as `derain train --synthetic`.
    m.def(
        "train_synthetic",
        [](const std::filesystem::path& out, const std::string& mode, std::int64_t epochs,
           std::int64_t count, std::int64_t size, std::int64_t base_channels,
           std::int64_t encoder_depth, std::int64_t batch, std::int64_t crop,
           std::uint64_t seed) {
            app::RunConfig cfg;
            cfg.out = out.string();
            cfg.mode = mode;
            cfg.epochs = epochs;
            cfg.synthetic = true;
            cfg.synthetic_count = count;
            cfg.synthetic_size = size;
            cfg.base_channels = base_channels;
            cfg.encoder_depth = encoder_depth;
            cfg.batch = batch;
            cfg.crop = crop;
            cfg.seed = seed;
            app::TrainResult res;
            {
                py::gil_scoped_release release;
                res = app::cmd_train(cfg);
            }
            py::list totals;
            for (const app::EpochLog& e : res.epochs) totals.append(e.loss.total);
            py::dict d;
            d["checkpoint"] = res.checkpoint;
            d["log"] = res.log;
            d["totals"] = totals;
            return d;
        },
        py::arg("out"), py::arg("mode") = "m4", py::arg("epochs") = 10, py::arg("count") = 8,
        py::arg("size") = 32, py::arg("base_channels") = 8, py::arg("encoder_depth") = 2,
        py::arg("batch") = 4, py::arg("crop") = 32, py::arg("seed") = 7);
}
