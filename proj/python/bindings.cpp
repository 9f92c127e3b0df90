#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "petnet/data.hpp"
#include "petnet/gradcheck.hpp"
#include "petnet/network.hpp"
#include "petnet/training.hpp"

namespace py = pybind11;

using namespace petnet;

namespace {

Tensor tensor_from(const std::vector<int64_t>& dims, const std::vector<double>& values) {
    return Tensor::create(Shape{dims}, values);
}

layers::Padding padding_from(const std::string& s) {
    if (s == "same") return layers::Padding::Same;
    if (s == "valid") return layers::Padding::Valid;
    throw ConfigError("padding must be 'same' or 'valid', got '" + s + "'");
}

network::HeadKind head_from(const std::string& s) { return network::head_from_string(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "from-scratch CNN building blocks, training loop and phantom generator";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Tensor>(m, "Tensor")
        .def(py::init(&tensor_from), py::arg("shape"), py::arg("values"))
        .def_property_readonly("shape",
                               [](const Tensor& t) { return t.shape().dims; })
        .def_property_readonly("values",
                               [](const Tensor& t) { return t.values(); })
        .def("reshaped",
             [](const Tensor& t, const std::vector<int64_t>& dims) {
                 return t.reshaped(Shape{dims});
             })
        .def("__len__", &Tensor::size)
        .def("__repr__", [](const Tensor& t) { return "Tensor(" + t.shape().str() + ")"; });

    m.def("flatten", &flatten);
    m.def("concat_channels", &concat_channels);
    m.def("matmul", &matmul);

    m.def(
        "conv2d",
        [](const Tensor& input, const Tensor& weights, const Tensor& bias,
           const std::string& padding) {
            layers::FilterBank bank{weights, bias};
            return layers::conv2d_forward(input, bank, padding_from(padding)).first;
        },
        py::arg("input"), py::arg("weights"), py::arg("bias"), py::arg("padding") = "same");
    m.def("relu", [](const Tensor& x) {
        return layers::activation_forward(layers::ActivationKind::Relu, x).first;
    });
    m.def("sigmoid", [](const Tensor& x) {
        return layers::activation_forward(layers::ActivationKind::Sigmoid, x).first;
    });
    m.def("softmax", [](const Tensor& x) {
        return layers::activation_forward(layers::ActivationKind::Softmax, x).first;
    });
    m.def("maxpool2", [](const Tensor& x) { return layers::maxpool2_forward(x).first; });
    m.def("upsample_nearest",
          [](const Tensor& x) { return layers::upsample_nearest_forward(x).first; });

    py::class_<network::Model>(m, "Model")
        .def_property_readonly("arch_text",
                               [](const network::Model& m_) { return m_.arch_text; })
        .def_property_readonly("input_shape",
                               [](const network::Model& m_) { return m_.input_shape.dims; })
        .def("head", [](const network::Model& m_) { return to_string(m_.head_kind()); })
        .def("parameter_count",
             [](const network::Model& m_) { return network::parameter_count(m_); })
        .def(
            "forward",
            [](network::Model& m_, const Tensor& input, const std::string& mode) {
                auto fr = network::forward(
                    m_, input, mode == "train" ? layers::Mode::Train : layers::Mode::Infer);
                return fr.output;
            },
            py::arg("input"), py::arg("mode") = "infer");

    m.def(
        "build_toy_cnn",
        [](int64_t height, int64_t width, int64_t channels, int64_t fc_width,
           const std::string& head, int64_t classes, uint64_t seed) {
            return network::build_toy_cnn(height, width, channels, fc_width, head_from(head),
                                          classes, seed);
        },
        py::arg("height"), py::arg("width"), py::arg("channels") = 8, py::arg("fc_width") = 32,
        py::arg("head") = "sigmoid", py::arg("classes") = 2, py::arg("seed") = 0);
    m.def(
        "build_unet",
        [](int64_t height, int64_t width, int64_t base_channels, int64_t depth,
           const std::string& head, bool use_bn, const std::string& upsample,
           bool allow_bn_with_linear, uint64_t seed) {
            return network::build_unet(height, width, base_channels, depth, head_from(head),
                                       use_bn,
                                       upsample == "nearest" ? network::UpsampleKind::Nearest
                                                             : network::UpsampleKind::TransposeConv,
                                       allow_bn_with_linear, seed);
        },
        py::arg("height"), py::arg("width"), py::arg("base_channels") = 8, py::arg("depth") = 3,
        py::arg("head") = "sigmoid", py::arg("use_bn") = true, py::arg("upsample") = "transpose",
        py::arg("allow_bn_with_linear") = false, py::arg("seed") = 0);

    m.def("save_model", &network::save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &network::load_model, py::arg("path"));

    py::class_<data::PhantomSample>(m, "PhantomSample")
        .def_readonly("image", &data::PhantomSample::image)
        .def_readonly("mask", &data::PhantomSample::mask)
        .def_readonly("clean", &data::PhantomSample::clean)
        .def_readonly("class_label", &data::PhantomSample::class_label);

    m.def("generate_phantoms", &data::generate_phantoms, py::arg("count"), py::arg("height"),
          py::arg("width"), py::arg("seed"), py::arg("lesion_probability") = 0.5,
          py::arg("noise_level") = 0.2);
    m.def("write_pgm", &data::write_pgm, py::arg("image"), py::arg("path"),
          py::arg("max_value_scale"));
    m.def("read_pgm", &data::read_pgm, py::arg("path"));

    py::class_<training::TrainReport>(m, "TrainReport")
        .def_readonly("train_loss", &training::TrainReport::train_loss)
        .def_readonly("val_loss", &training::TrainReport::val_loss)
        .def_readonly("stopped_epoch", &training::TrainReport::stopped_epoch)
        .def_readonly("best_epoch", &training::TrainReport::best_epoch)
        .def_readonly("best_val_loss", &training::TrainReport::best_val_loss)
        .def("to_csv", &training::TrainReport::to_csv);

    m.def(
        "train",
        [](network::Model& model, const std::vector<data::PhantomSample>& train_set,
           const std::vector<data::PhantomSample>& val_set, const std::string& task,
           const std::string& loss, double learning_rate, int64_t batch_size, int64_t max_epochs,
           int64_t patience, uint64_t seed, int64_t classes) {
            training::TrainConfig cfg;
            cfg.loss = training::loss_from_string(loss);
            cfg.learning_rate = learning_rate;
            cfg.batch_size = batch_size;
            cfg.max_epochs = max_epochs;
            cfg.patience = patience;
            cfg.seed = seed;
            auto t = training::task_from_string(task);
            auto train_samples =
                training::to_samples(train_set, t, model.head_kind(), classes);
            auto val_samples = training::to_samples(val_set, t, model.head_kind(), classes);
            return training::train(model, train_samples, val_samples, cfg);
        },
        py::arg("model"), py::arg("train_set"), py::arg("val_set"), py::arg("task"),
        py::arg("loss"), py::arg("learning_rate") = 0.01, py::arg("batch_size") = 8,
        py::arg("max_epochs") = 50, py::arg("patience") = 5, py::arg("seed") = 0,
        py::arg("classes") = 2);

    m.def(
        "evaluate",
        [](network::Model& model, const std::vector<data::PhantomSample>& dataset,
           const std::string& task) {
            auto record = training::evaluate(model, dataset, training::task_from_string(task));
            py::dict result;
            for (const auto& [name, value] : record.values) result[name.c_str()] = value;
            return result;
        },
        py::arg("model"), py::arg("dataset"), py::arg("task"));

    m.def("gradcheck_run_all", [](uint64_t seed) {
        py::list out;
        for (const auto& report : gradcheck::run_all(seed)) {
            py::dict d;
            d["name"] = report.name;
            d["max_rel_error"] = report.max_rel_error;
            d["tolerance"] = report.tolerance;
            d["pass"] = report.pass;
            out.append(d);
        }
        return out;
    }, py::arg("seed") = 7);
}
