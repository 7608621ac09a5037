// pybind11 bindings: numpy-facing wrappers over the survival head math,
// the metrics and checkpointed model inference.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <vector>

#include "phos/data.hpp"
#include "phos/metrics.hpp"
#include "phos/network.hpp"
#include "phos/survival.hpp"
#include "phos/training.hpp"

namespace py = pybind11;
using namespace phos;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DArray& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape.push_back(static_cast<std::size_t>(a.shape(i)));
  }
  std::vector<double> values(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::array_t<double> array_from_volume(const Volume& v) {
  std::vector<py::ssize_t> shape(v.dims.begin(), v.dims.end());
  py::array_t<double> out(shape);
  std::copy(v.values.begin(), v.values.end(), out.mutable_data());
  return out;
}

std::vector<double> flat(const DArray& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

/// Eval-mode inference over a checkpoint, with the stored preprocessing.
class Model {
 public:
  explicit Model(const std::string& path)
      : checkpoint_(load_checkpoint(path)) {}

  py::array_t<double> predict(const DArray& image, const DArray& age) {
    Tensor img = tensor_from_array(image);
    Tensor a = tensor_from_array(age);
    if (checkpoint_.model.config().head == HeadKind::posthoc) {
      HeadOutput out = checkpoint_.model.forward(img, a, RunMode::eval);
      return array_from_tensor(out.y_hat);
    }
    return array_from_tensor(
        checkpoint_.model.forward_regression(img, a, RunMode::eval));
  }

  py::tuple explain(const DArray& image, const DArray& age) {
    Explanation e = checkpoint_.model.explain(tensor_from_array(image),
                                              tensor_from_array(age));
    const std::size_t v = checkpoint_.model.config().output_edge();
    py::array_t<std::uint8_t> mask(
        {py::ssize_t(v), py::ssize_t(v), py::ssize_t(v)});
    std::copy(e.mask.begin(), e.mask.end(), mask.mutable_data());
    return py::make_tuple(e.n_star, array_from_tensor(e.map), mask);
  }

  std::size_t parameter_count() const {
    return checkpoint_.model.parameter_count();
  }
  std::size_t n_bins() const { return checkpoint_.model.config().n_bins; }
  std::string head() const {
    return head_to_string(checkpoint_.model.config().head);
  }

 private:
  Checkpoint checkpoint_;
};

}  // namespace

PYBIND11_MODULE(_phos, m) {
  m.doc() = "survival-bin prediction core";

  m.def("bin_widths", [](std::size_t n, double upper) {
    return make_bins(n, upper).widths;
  });
  m.def("bin_probabilities", [](const DArray& saliency) {
    return array_from_tensor(bin_probabilities(tensor_from_array(saliency)));
  });
  m.def("weighted_bin_predictions",
        [](const DArray& p, std::size_t n, double upper) {
          return array_from_tensor(
              weighted_bin_predictions(tensor_from_array(p),
                                       make_bins(n, upper)));
        });
  m.def("os_prediction", [](const DArray& p_weighted, double upper) {
    return array_from_tensor(
        os_prediction(tensor_from_array(p_weighted), upper));
  });
  m.def("monotonic_penalty", [](const DArray& p) {
    return monotonic_penalty(tensor_from_array(p)).item();
  });
  m.def("total_loss",
        [](const DArray& y_hat, const DArray& y, const DArray& p,
           double alpha) {
          return total_loss(tensor_from_array(y_hat), flat(y),
                            tensor_from_array(p), alpha)
              .item();
        });
  m.def("transition_bin", [](const DArray& p) {
    const auto v = flat(p);
    return transition_bin(v);
  });
  m.def("saliency_mask", [](const DArray& map, double fraction) {
    const auto v = flat(map);
    const auto mask = saliency_mask(v, fraction);
    py::array_t<std::uint8_t> out(map.ndim() == 0
                                      ? std::vector<py::ssize_t>{1}
                                      : std::vector<py::ssize_t>(
                                            map.shape(),
                                            map.shape() + map.ndim()));
    std::copy(mask.begin(), mask.end(), out.mutable_data());
    return out;
  });

  m.def("dice", [](const py::array_t<std::uint8_t>& a,
                   const py::array_t<std::uint8_t>& b) {
    std::vector<std::uint8_t> va(a.data(), a.data() + a.size());
    std::vector<std::uint8_t> vb(b.data(), b.data() + b.size());
    return dice(va, vb);
  });
  m.def("spearman_r", [](const DArray& pred, const DArray& truth)
            -> py::object {
    const auto r = spearman_r(flat(pred), flat(truth));
    if (!r) return py::none();
    return py::float_(*r);
  });
  m.def("squared_error_stats", [](const DArray& pred, const DArray& truth) {
    const auto s = squared_error_stats(flat(pred), flat(truth));
    return py::make_tuple(s.mse, s.median_se, s.std_se);
  });
  m.def("classification_accuracy",
        [](const DArray& pred, const DArray& truth, double short_upper,
           double long_lower) {
          ClassThresholds t{short_upper, long_lower};
          t.validate();
          return classification_accuracy(flat(pred), flat(truth), t);
        },
        py::arg("pred"), py::arg("truth"), py::arg("short_upper") = 304.375,
        py::arg("long_lower") = 456.5625);

  m.def("load_volume", [](const std::string& path) {
    return array_from_volume(load_volume(path));
  });
  m.def("save_volume", [](const DArray& values, const std::string& path) {
    Volume v;
    for (py::ssize_t i = 0; i < values.ndim(); ++i) {
      v.dims.push_back(static_cast<std::size_t>(values.shape(i)));
    }
    v.values.assign(values.data(), values.data() + values.size());
    save_volume(v, path);
  });

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>())
      .def("predict", &Model::predict)
      .def("explain", &Model::explain)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("n_bins", &Model::n_bins)
      .def_property_readonly("head", &Model::head);

  py::register_exception<DataError>(m, "DataError");
}
