#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fairvit/checkpoint.hpp"
#include "fairvit/cli.hpp"
#include "fairvit/data.hpp"
#include "fairvit/distance_loss.hpp"
#include "fairvit/metrics.hpp"
#include "fairvit/rollout.hpp"

namespace py = pybind11;
using namespace fairvit;

namespace {

std::vector<EvalRecord> make_records(const std::vector<int>& y_pred, const std::vector<int>& y_true,
                                     const std::vector<int>& s) {
  if (y_pred.size() != y_true.size() || y_pred.size() != s.size()) {
    throw ShapeError("y_pred, y_true and s must have equal length");
  }
  std::vector<EvalRecord> out(y_pred.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {y_pred[i], y_true[i], s[i]};
  return out;
}

Hyperplane plane_of(double omega, double beta) { return Hyperplane{omega, beta, true}; }

// Accepts H x W (single channel) or C x H x W arrays with values in [0, 1].
Image image_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  Image img;
  if (a.ndim() == 2) {
    img.channels = 1;
    img.height = a.shape(0);
    img.width = a.shape(1);
  } else if (a.ndim() == 3) {
    img.channels = a.shape(0);
    img.height = a.shape(1);
    img.width = a.shape(2);
  } else {
    throw ShapeError("image array must be 2-D or 3-D");
  }
  img.pixels.assign(a.data(), a.data() + a.size());
  return img;
}

class PyModel {
 public:
  explicit PyModel(const std::string& checkpoint) : loaded_(load_model<float>(read_checkpoint(checkpoint))) {}

  std::vector<float> scores(py::array_t<float, py::array::c_style | py::array::forcecast> image) const {
    NoGradGuard no_grad;
    const auto out = loaded_.model.forward(image_from_array(image), &loaded_.bank);
    return {out.data().begin(), out.data().end()};
  }

  int predict(py::array_t<float, py::array::c_style | py::array::forcecast> image) const {
    const auto s = scores(image);
    return static_cast<int>(argmax_label<float>(s));
  }

  std::vector<double> rollout(py::array_t<float, py::array::c_style | py::array::forcecast> image,
                              std::size_t label) const {
    return gradient_attention_rollout(loaded_.model, loaded_.bank, image_from_array(image), label).heat;
  }

  std::size_t groups() const { return loaded_.bank.groups(); }
  std::size_t num_classes() const { return loaded_.model.config().num_classes; }
  std::size_t image_size() const { return loaded_.model.config().image_size; }

 private:
  LoadedModel<float> loaded_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fairness-aware vision transformer toolkit (C++ core)";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<Error>(m, "FairvitError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a fairvit command; returns (exit_code, stdout, stderr).");

  m.def(
      "fairness_report",
      [](const std::vector<int>& y_pred, const std::vector<int>& y_true, const std::vector<int>& s) {
        const auto r = FairnessReport::from_records(make_records(y_pred, y_true, s));
        py::dict d;
        d["acc"] = r.accuracy;
        d["ba"] = r.ba;
        d["dp"] = r.dp;
        d["eo"] = r.eo;
        for (int si = 0; si < 2; ++si)
          for (int y = 0; y < 2; ++y)
            for (int p = 0; p < 2; ++p)
              d[py::str("n_s{}_y{}_p{}").format(si, y, p)] = r.counts[si][y][p];
        return d;
      },
      py::arg("y_pred"), py::arg("y_true"), py::arg("s"));
  m.def(
      "balanced_accuracy",
      [](const std::vector<int>& p, const std::vector<int>& y, const std::vector<int>& s) {
        return balanced_accuracy(make_records(p, y, s));
      },
      py::arg("y_pred"), py::arg("y_true"), py::arg("s"));
  m.def(
      "demographic_parity",
      [](const std::vector<int>& p, const std::vector<int>& y, const std::vector<int>& s) {
        return demographic_parity(make_records(p, y, s));
      },
      py::arg("y_pred"), py::arg("y_true"), py::arg("s"));
  m.def(
      "equalized_opportunity",
      [](const std::vector<int>& p, const std::vector<int>& y, const std::vector<int>& s) {
        return equalized_opportunity(make_records(p, y, s));
      },
      py::arg("y_pred"), py::arg("y_true"), py::arg("s"));

  m.def(
      "distance", [](double y_hat, double y_hat_k, double omega, double beta) {
        return distance(y_hat, y_hat_k, plane_of(omega, beta));
      },
      py::arg("y_hat"), py::arg("y_hat_k"), py::arg("omega"), py::arg("beta"));
  m.def(
      "distance_loss",
      [](double y_hat, double y_hat_k, double omega, double beta, double gamma) {
        return distance_loss(y_hat, y_hat_k, plane_of(omega, beta), gamma);
      },
      py::arg("y_hat"), py::arg("y_hat_k"), py::arg("omega"), py::arg("beta"), py::arg("gamma") = 0.5);
  m.def(
      "fit_hyperplane",
      [](const std::vector<std::tuple<double, double, int>>& pts) {
        std::vector<ScorePoint> points;
        for (const auto& [a, b, z] : pts) points.push_back({a, b, z});
        const auto plane = fit_hyperplane(points);
        return py::make_tuple(plane.omega, plane.beta, plane.fitted);
      },
      py::arg("points"), "Fit (omega, beta) on (y_hat, y_hat_k, z) triples; returns (omega, beta, fitted).");

  m.def(
      "split_groups",
      [](const std::vector<int>& s, std::size_t groups, std::uint64_t seed) {
        std::vector<SampleRecord> records(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) records[i] = {std::to_string(i), 0, s[i], std::nullopt};
        const auto a = split_groups(records, groups, seed);
        std::vector<std::size_t> parts;
        for (const auto& p : a.parts) parts.push_back(p.value);
        return parts;
      },
      py::arg("s"), py::arg("groups"), py::arg("seed"), "Part index (1-based) per sample.");

  m.def(
      "synth_dataset",
      [](std::size_t n, double correlation, std::size_t image_size, std::uint64_t seed) {
        const auto samples = synth_biased_dataset(n, correlation, image_size, seed);
        py::list out;
        for (const auto& smp : samples) {
          py::array_t<std::uint8_t> img({smp.raster.height, smp.raster.width});
          std::copy(smp.raster.bytes.begin(), smp.raster.bytes.end(), img.mutable_data());
          out.append(py::make_tuple(img, smp.y, smp.s));
        }
        return out;
      },
      py::arg("n"), py::arg("correlation") = 0.8, py::arg("image_size") = 32, py::arg("seed") = 0,
      "List of (uint8 image, y, s).");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("scores", &PyModel::scores, py::arg("image"))
      .def("predict", &PyModel::predict, py::arg("image"))
      .def("rollout", &PyModel::rollout, py::arg("image"), py::arg("label"))
      .def_property_readonly("groups", &PyModel::groups)
      .def_property_readonly("num_classes", &PyModel::num_classes)
      .def_property_readonly("image_size", &PyModel::image_size);
}
