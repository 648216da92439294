#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "deforma/checkpoint.hpp"
#include "deforma/facemodel.hpp"
#include "deforma/fitkit.hpp"
#include "deforma/gradcheck.hpp"
#include "deforma/losses.hpp"
#include "deforma/optim.hpp"
#include "deforma/renderer.hpp"

namespace py = pybind11;
using namespace deforma;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("expected an (n, 3) array");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  std::memcpy(out.data(), a.data(), out.size() * sizeof(Vec3));
  return out;
}

Array from_points(const std::vector<Vec3>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  std::memcpy(out.mutable_data(), pts.data(), pts.size() * sizeof(Vec3));
  return out;
}

py::dict report_dict(const FitReport& r) {
  py::dict d;
  d["steps"] = r.steps;
  d["heldout_psnr"] = r.heldout_psnr;
  d["deformation_error"] = r.deformation_error;
  d["neutral_residual"] = r.neutral_residual;
  d["seconds"] = r.seconds;
  d["finite"] = r.finite;
  py::dict initial, final;
  for (const auto& [k, v] : r.initial.terms) initial[py::str(k)] = v;
  for (const auto& [k, v] : r.final.terms) final[py::str(k)] = v;
  d["initial"] = initial;
  d["final"] = final;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Radiance-manifold rendering and deformation engine";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  py::class_<FaceBasis>(m, "FaceBasis")
      .def_property_readonly("mean_shape", [](const FaceBasis& b) { return from_points(b.mean_shape); })
      .def_readonly("landmark_indices", &FaceBasis::landmark_indices)
      .def_readonly("id_dims", &FaceBasis::id_dims)
      .def_readonly("exp_dims", &FaceBasis::exp_dims)
      .def("reconstruct",
           [](const FaceBasis& b, std::vector<double> beta, std::vector<double> gamma) {
             return from_points(reconstruct_shape(b, {std::move(beta), std::move(gamma)}).vertices);
           },
           py::arg("beta"), py::arg("gamma"))
      .def("reference_deformation",
           [](const FaceBasis& b, const std::vector<double>& gamma, std::size_t vertex) {
             const Vec3 d = reference_deformation(b, gamma, vertex);
             return std::vector<double>{d.x, d.y, d.z};
           },
           py::arg("gamma"), py::arg("vertex"))
      .def("save", [](const FaceBasis& b, const std::string& path) { save_basis(b, path); })
      .def_static("load", [](const std::string& path) { return load_basis(path); });

  m.def(
      "synth_basis",
      [](std::uint64_t seed, int vertices, int id_dims, int exp_dims, int landmarks) {
        return synth_basis(seed, vertices, id_dims, exp_dims, landmarks);
      },
      py::arg("seed"), py::arg("vertices") = 512, py::arg("id_dims") = 8, py::arg("exp_dims") = 4,
      py::arg("landmarks") = 16);

  m.def(
      "composite",
      [](const std::vector<double>& occupancy) {
        std::vector<RadianceSample> s(occupancy.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i].occupancy = occupancy[i];
        const Composite c = composite(s, {0, 0, 0});
        return py::make_tuple(c.weights, c.residual);
      },
      py::arg("occupancy"), "Compositing weights and residual transmittance of an occupancy sequence.");

  m.def(
      "chamfer",
      [](const Array& source, const Array& target) {
        const auto s = to_points(source), t = to_points(target);
        return chamfer_directed<double>(std::span<const Vec3>(s), std::span<const Vec3>(t));
      },
      py::arg("source"), py::arg("target"), "Directed chamfer distance: mean squared nearest-neighbour distance.");

  m.def(
      "init_checkpoint",
      [](const std::string& path, std::uint64_t seed, bool zero_output) {
        const FieldModel model(FitConfig::default_fields());
        InitOptions o;
        o.zero_template_output = zero_output;
        save_checkpoint(path, model.config(), model.init(seed, o));
      },
      py::arg("path"), py::arg("seed") = 1, py::arg("zero_output") = false);

  m.def(
      "render",
      [](const std::string& checkpoint, std::vector<double> pose, int width, int height, std::vector<double> z_exp,
         int samples) {
        FieldConfig config;
        FieldParams params;
        load_checkpoint(checkpoint, config, params);
        const FieldModel model(config);
        if (pose.size() != 3) throw InvalidArgument("pose is (pitch, yaw, radius)");
        LatentCodes z;
        z.z_id.assign(static_cast<std::size_t>(config.dims.id), 0.0);
        z.eps.assign(static_cast<std::size_t>(config.dims.eps), 0.0);
        z.z_exp = z_exp.empty() ? std::vector<double>(static_cast<std::size_t>(config.dims.exp), 0.0) : z_exp;
        z.validate(config.dims);
        Camera cam;
        cam.pose = {pose[0], pose[1], pose[2]};
        cam.width = width;
        cam.height = height;
        RenderOptions opt;
        opt.samples = samples;
        const ImageBuffer img = render_image(model.bind(params), z, cam, opt);
        Array rgb({py::ssize_t{height}, py::ssize_t{width}, py::ssize_t{3}});
        std::memcpy(rgb.mutable_data(), img.rgb.data(), img.rgb.size() * sizeof(Vec3));
        Array depth({py::ssize_t{height}, py::ssize_t{width}});
        std::memcpy(depth.mutable_data(), img.depth.data(), img.depth.size() * sizeof(double));
        return py::make_tuple(rgb, depth);
      },
      py::arg("checkpoint"), py::arg("pose") = std::vector<double>{0.0, 0.0, 3.0}, py::arg("width") = 64,
      py::arg("height") = 64, py::arg("z_exp") = std::vector<double>{}, py::arg("samples") = 64,
      "Renders a checkpoint; returns (rgb[h, w, 3], depth[h, w]) with NaN where no surface was hit.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int params) {
        GradCheckOptions o;
        o.seed = seed;
        o.params = params;
        py::list out;
        for (const GradCheckCase& c : run_gradcheck(o)) {
          py::dict d;
          d["name"] = c.name;
          d["checked"] = c.checked;
          d["skipped"] = c.skipped;
          d["max_error"] = c.max_error;
          d["passed"] = c.passed();
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 3, py::arg("params") = 100);

  m.def(
      "fit_synthetic",
      [](const std::map<std::string, std::string>& options, const std::string& checkpoint) {
        FitConfig config;
        for (const auto& [k, v] : options) set_fit_option(config, k, v);
        config.validate();
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_synthetic(config);
        }
        if (!checkpoint.empty()) save_checkpoint(checkpoint, r.config, r.params);
        return report_dict(r.report);
      },
      py::arg("options") = std::map<std::string, std::string>{}, py::arg("checkpoint") = "",
      "Trains the fields on the synthetic scene; options use the fit config keys.");

  m.def("fit_config_keys", [] {
    std::vector<std::string> keys;
    std::istringstream in(describe_fit_config(FitConfig{}));
    std::string line;
    while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(' ')));
    return keys;
  });

  m.def("training_hyperparams", [] {
    const TrainingHyperparams h;
    py::dict d;
    d["field_lr"] = h.field_lr;
    d["discriminator_lr"] = h.discriminator_lr;
    d["beta1"] = h.adam.beta1;
    d["beta2"] = h.adam.beta2;
    d["eps"] = h.adam.eps;
    d["batch_size"] = h.batch_size;
    d["resolution"] = h.resolution;
    d["r1_weight"] = h.r1_weight;
    return d;
  });
}
