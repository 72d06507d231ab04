#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "microresnet/arch.hpp"
#include "microresnet/checkpoint.hpp"
#include "microresnet/data.hpp"
#include "microresnet/errors.hpp"
#include "microresnet/gradcheck_suite.hpp"
#include "microresnet/ops.hpp"
#include "microresnet/train.hpp"

namespace py = pybind11;
using namespace microresnet;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array<T> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ImageShape image_shape_of(const std::tuple<std::size_t, std::size_t, std::size_t>& s) {
  return {std::get<0>(s), std::get<1>(s), std::get<2>(s)};
}

ByteImage to_image(const Array<std::uint8_t>& a) {
  if (a.ndim() != 3) throw ShapeError("expected a C x H x W uint8 image");
  ByteImage img(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array<std::uint8_t> from_image(const ByteImage& img) {
  Array<std::uint8_t> out({img.channels, img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

std::vector<std::string> layer_strings(const ArchSpec& s) {
  std::vector<std::string> out;
  for (const auto& l : s.layers) out.push_back(to_string(l));
  return out;
}

// Inference wrapper around a built or restored network.
class Model {
 public:
  Model(ArchSpec arch, ImageShape input, Network<float> net, Normalization norm)
      : arch_(std::move(arch)), input_(input), net_(std::move(net)), norm_(std::move(norm)) {}

  Array<float> predict(const Array<float>& x) const { return to_array(net_.predict(to_tensor(x))); }

  py::dict evaluate(const Array<std::uint8_t>& images, const std::vector<int>& labels, std::size_t batch) const {
    Dataset ds;
    if (images.ndim() != 4) throw ShapeError("expected N x C x H x W uint8 images");
    ds.channels = images.shape(1);
    ds.height = images.shape(2);
    ds.width = images.shape(3);
    ds.pixels.assign(images.data(), images.data() + images.size());
    for (int l : labels) ds.labels.push_back(static_cast<std::uint16_t>(l));
    ds.class_count = arch_.layers.back().value;
    const EpochStats s = microresnet::evaluate(net_, ds, batch, norm_);
    py::dict out;
    out["loss"] = s.loss;
    out["accuracy"] = s.accuracy;
    return out;
  }

  std::string arch_text() const { return render_arch(arch_); }
  std::tuple<std::size_t, std::size_t, std::size_t> input() const {
    return {input_.channels, input_.height, input_.width};
  }
  std::size_t parameter_count() const { return net_.parameter_count(); }
  std::size_t layer_count() const { return net_.parameterized_layer_count(); }

  std::vector<std::pair<std::string, Array<float>>> parameters() const {
    std::vector<std::pair<std::string, Array<float>>> out;
    const auto names = net_.parameter_names();
    const auto params = net_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back(names[i], to_array(*params[i]));
    return out;
  }

 private:
  ArchSpec arch_;
  ImageShape input_;
  Network<float> net_;
  Normalization norm_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Small residual networks on a tape-based autodiff core";

  // Translators are tried newest first, so the base class goes first.
  const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValueError>(m, "ValueError", base.ptr());
  py::register_exception<TapeError>(m, "TapeError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  // Architectures.
  py::class_<ArchSpec>(m, "ArchSpec")
      .def_readonly("name", &ArchSpec::name)
      .def_property_readonly("layers", &layer_strings)
      .def("render", &render_arch)
      .def("__eq__", [](const ArchSpec& a, const ArchSpec& b) { return a == b; })
      .def("__len__", [](const ArchSpec& a) { return a.layers.size(); })
      .def("__repr__", [](const ArchSpec& a) { return "<ArchSpec " + a.name + ": " + std::to_string(a.layers.size()) + " entries>"; });

  m.def("parse_arch", &parse_arch, py::arg("text"), py::arg("name") = "");
  m.def("load_arch", &load_arch, py::arg("preset_or_path"), "Preset name (net1..net6) or architecture file");
  m.def("preset_names", &preset_names);
  m.def("count_layers", &count_layers, "Parameterized layers: Conv 1, BB 2, FC 1");
  m.def("count_params",
        [](const ArchSpec& s, std::tuple<std::size_t, std::size_t, std::size_t> input) {
          return count_params(s, image_shape_of(input));
        },
        py::arg("spec"), py::arg("input") = std::make_tuple(3, 64, 64));
  m.def("infer_shapes",
        [](const ArchSpec& s, std::tuple<std::size_t, std::size_t, std::size_t> input) {
          std::vector<std::vector<std::size_t>> out;
          for (const auto& shape : infer_shapes(s, image_shape_of(input))) out.emplace_back(shape);
          return out;
        },
        py::arg("spec"), py::arg("input") = std::make_tuple(3, 64, 64));
  m.def("to_plain_convnet", &to_plain_convnet);
  m.def("published_layer_count_mismatch", &published_layer_count_mismatch, py::arg("name"));

  // Ops, evaluated in double precision without recording.
  m.def("conv2d",
        [](const Array<double>& x, const Array<double>& w, const Array<double>& b, std::size_t stride,
           std::size_t pad) { return to_array(conv2d(to_tensor(x), to_tensor(w), to_tensor(b), stride, pad)); },
        py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride") = 1, py::arg("pad") = 0);
  m.def("relu", [](const Array<double>& x) { return to_array(relu(to_tensor(x))); });
  m.def("avg_pool2d", [](const Array<double>& x, std::size_t k) { return to_array(avg_pool2d(to_tensor(x), k)); });
  m.def("max_pool2d", [](const Array<double>& x, std::size_t k) { return to_array(max_pool2d(to_tensor(x), k)); });
  m.def("zero_pad_channels",
        [](const Array<double>& x, std::size_t c) { return to_array(zero_pad_channels(to_tensor(x), c)); });
  m.def("linear", [](const Array<double>& x, const Array<double>& w, const Array<double>& b) {
    return to_array(linear(to_tensor(x), to_tensor(w), to_tensor(b)));
  });
  m.def("softmax_cross_entropy", [](const Array<double>& logits, const std::vector<int>& labels) {
    return softmax_cross_entropy(to_tensor(logits), std::span<const int>(labels)).item();
  });
  m.def("gradcheck",
        [](const std::string& op, std::uint64_t seed, double eps, std::size_t cases) {
          const OpCheckReport r = run_op_gradcheck(op, seed, eps, cases);
          py::dict out;
          out["op"] = r.op;
          out["cases"] = r.cases;
          out["elements"] = r.elements;
          out["max_rel_error"] = r.max_rel_error;
          out["passed"] = r.passed;
          return out;
        },
        py::arg("op"), py::arg("seed") = 0, py::arg("eps") = 1e-5, py::arg("cases") = 20);
  m.def("gradcheck_op_names", &gradcheck_op_names);

  // Data.
  m.def("augment",
        [](const Array<std::uint8_t>& image, double flip_prob, double crop_prob, std::size_t crop_size,
           std::size_t out_size, std::uint64_t seed) {
          Rng rng(seed);
          return from_image(augment(to_image(image), AugmentConfig{flip_prob, crop_prob, crop_size, out_size}, rng));
        },
        py::arg("image"), py::arg("flip_prob") = 0.5, py::arg("crop_prob") = 0.7, py::arg("crop_size") = 56,
        py::arg("out_size") = 64, py::arg("seed") = 0);
  m.def("rescale_bilinear", [](const Array<std::uint8_t>& image, std::size_t h, std::size_t w) {
    return from_image(rescale_bilinear(to_image(image), h, w));
  });
  m.def("synth_dataset",
        [](std::size_t n, std::size_t classes, std::size_t side, std::uint64_t seed) {
          const Dataset ds = synth_dataset(n, classes, side, seed);
          Array<std::uint8_t> images({ds.size(), ds.channels, ds.height, ds.width});
          std::copy(ds.pixels.begin(), ds.pixels.end(), images.mutable_data());
          std::vector<int> labels(ds.labels.begin(), ds.labels.end());
          return py::make_tuple(images, labels);
        },
        py::arg("n"), py::arg("classes"), py::arg("side") = 32, py::arg("seed") = 0);

  // Models.
  py::class_<Model>(m, "Model")
      .def("predict", &Model::predict, py::arg("x"), "Eval-mode logits for a float32 N x C x H x W batch")
      .def("evaluate", &Model::evaluate, py::arg("images"), py::arg("labels"), py::arg("batch") = 128)
      .def_property_readonly("arch_text", &Model::arch_text)
      .def_property_readonly("input", &Model::input)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("layer_count", &Model::layer_count)
      .def("parameters", &Model::parameters);
  m.def("build_model",
        [](const ArchSpec& spec, std::tuple<std::size_t, std::size_t, std::size_t> input, std::uint64_t seed) {
          Rng rng(seed);
          const ImageShape shape = image_shape_of(input);
          return Model(spec, shape, build_network<float>(spec, shape, rng), Normalization::identity(shape.channels));
        },
        py::arg("spec"), py::arg("input") = std::make_tuple(3, 64, 64), py::arg("seed") = 0);
  m.def("load_model", [](const std::filesystem::path& path) {
    TrainingState s = restore_training(load_checkpoint(path));
    return Model(s.arch, s.input, std::move(s.network), s.normalization);
  });

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a command line in-process; returns (exit_code, stdout, stderr)");

  m.attr("__version__") = "0.1.0";
}
