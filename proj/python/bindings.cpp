#include "thzdiff/beamspace.hpp"
#include "thzdiff/channel.hpp"
#include "thzdiff/cli.hpp"
#include "thzdiff/dataset.hpp"
#include "thzdiff/diffusion.hpp"
#include "thzdiff/errors.hpp"
#include "thzdiff/evaluation.hpp"
#include "thzdiff/geometry.hpp"
#include "thzdiff/gscm.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>

namespace py = pybind11;
using namespace thz;

namespace {

ArrayGeometry make_geometry(double carrier_frequency, int n_tx, int n_rx, int k_tx, int k_rx,
                            double intra_spacing, double inter_spacing, std::array<double, 3> rx_origin) {
    ArrayLayout l;
    l.carrier_frequency = carrier_frequency;
    l.n_tx = n_tx;
    l.n_rx = n_rx;
    l.k_tx = k_tx;
    l.k_rx = k_rx;
    l.intra_spacing = intra_spacing;
    l.inter_spacing = inter_spacing;
    l.rx_origin = Vec3(rx_origin[0], rx_origin[1], rx_origin[2]);
    return ArrayGeometry(l);
}

// (conditions N x 8, tensors N x size, normalization scalar)
py::tuple dataset_arrays(const Dataset& d) {
    const Eigen::Index n = static_cast<Eigen::Index>(d.samples.size());
    Eigen::MatrixXd cond(n, kConditionDim), tens(n, static_cast<Eigen::Index>(d.header.tensor_size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < kConditionDim; ++k) cond(i, k) = d.samples[i].condition.p[k];
        tens.row(i) = d.samples[i].tensor.transpose();
    }
    return py::make_tuple(cond, tens, d.header.normalization_scalar);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "THz channel generation: channel models, beamspace, diffusion sampling and metrics";

    py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);

    py::class_<ArrayGeometry>(m, "ArrayGeometry")
        .def(py::init(&make_geometry), py::arg("carrier_frequency") = 300e9, py::arg("n_tx") = 256,
             py::arg("n_rx") = 64, py::arg("k_tx") = 2, py::arg("k_rx") = 2, py::arg("intra_spacing") = 0.0,
             py::arg("inter_spacing") = 0.0, py::arg("rx_origin") = std::array<double, 3>{5.0, 0.0, 0.0})
        .def_property_readonly("wavelength", &ArrayGeometry::wavelength)
        .def("aperture", [](const ArrayGeometry& g, bool tx) { return g.aperture(tx ? Side::tx : Side::rx); },
             py::arg("tx") = true);

    m.def("rayleigh_distance", &rayleigh_distance, py::arg("aperture"), py::arg("wavelength"));
    m.def("condition_vector",
          [](std::array<double, 3> tx, std::array<double, 3> rx) {
              return condition_vector(Vec3(tx[0], tx[1], tx[2]), Vec3(rx[0], rx[1], rx[2])).p;
          },
          py::arg("tx_origin"), py::arg("rx_origin"));

    m.def("dft_dictionary", [](int n) { return dft_dictionary(n).matrix; }, py::arg("n"));
    m.def("to_beamspace",
          [](const CMatrix& h, const ArrayGeometry& g) {
              return to_beamspace({h, Domain::spatial}, rx_dictionary(g), tx_dictionary(g)).entries;
          },
          py::arg("h"), py::arg("geometry"));
    m.def("from_beamspace",
          [](const CMatrix& hb, const ArrayGeometry& g) {
              return from_beamspace({hb, Domain::beamspace}, rx_dictionary(g), tx_dictionary(g)).entries;
          },
          py::arg("hb"), py::arg("geometry"));

    m.def("gscm_channels",
          [](const ArrayGeometry& g, std::uint64_t seed) {
              Rng rng = stream_rng(seed, 0);
              PathSet paths = draw_paths(rng, GscmConfig{}, g);
              return py::make_tuple(pwm_channel(paths, g).entries, swm_channel(paths, g).entries,
                                    hpsm_channel(paths, g).entries);
          },
          py::arg("geometry"), py::arg("seed"), "(PWM, SWM, HPSM) spatial channels of one GSCM-lite scene");

    m.def("ssim", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int window) {
              SsimParams p;
              p.window = window;
              return ssim(a, b, p);
          },
          py::arg("a"), py::arg("b"), py::arg("window") = 11);
    m.def("nmse", &nmse, py::arg("a"), py::arg("b"));

    m.def("stack_channel", &stack_channel, py::arg("h"));
    m.def("unstack_channel", &unstack_channel, py::arg("tensor"), py::arg("n_rx"), py::arg("n_tx"));

    m.def("gaussian_euler_samples",
          [](double mu, double sigma_d, int n_steps, std::size_t count, std::uint64_t seed) {
              AnalyticGaussianDenoiser den(Eigen::VectorXd::Constant(1, mu), sigma_d);
              DiffusionSchedule s;
              s.n_steps = n_steps;
              Eigen::VectorXd out(static_cast<Eigen::Index>(count));
              for (std::size_t i = 0; i < count; ++i) {
                  Rng rng = stream_rng(seed, i);
                  out[static_cast<Eigen::Index>(i)] = euler_sample(den, GeometryCondition{}, s, rng, 1)[0];
              }
              return out;
          },
          py::arg("mu"), py::arg("sigma_d"), py::arg("n_steps"), py::arg("count"), py::arg("seed"),
          "Scalar Euler samples under the analytic Gaussian denoiser");

    m.def("read_dataset", [](const std::string& path) { return dataset_arrays(read_dataset(path)); },
          py::arg("path"), "(conditions, tensors, normalization_scalar) of a THZC file");

    m.def("run_cli",
          [](std::vector<std::string> args) {
              args.insert(args.begin(), "thzgen");
              std::vector<char*> argv;
              for (auto& a : args) argv.push_back(a.data());
              py::gil_scoped_release release;
              return run_cli(static_cast<int>(argv.size()), argv.data());
          },
          py::arg("args"), "Run a thzgen subcommand; returns the exit code");
}
