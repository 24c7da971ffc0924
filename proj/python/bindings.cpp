#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvl/dynamics.hpp"
#include "mvl/harness.hpp"
#include "mvl/measures.hpp"
#include "mvl/theory.hpp"

namespace py = pybind11;
using namespace mvl;

namespace {

ExperimentConfig config_from(const std::string& text) {
  ExperimentConfig c = text.empty() ? ExperimentConfig{} : parse_config(text);
  validate(c);
  return c;
}

py::dict fit_dict(const RateFit& f) {
  py::dict d;
  d["rate"] = f.rate;
  d["intercept"] = f.intercept;
  d["r_squared"] = f.r_squared;
  d["stderr"] = f.stderr_bootstrap;
  d["points"] = f.points;
  d["valid"] = f.valid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kinetic Langevin McKean-Vlasov experiments";

  py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config", [] { return serialize_config(ExperimentConfig{}); });
  m.def("normalize_config", [](const std::string& text) { return serialize_config(config_from(text)); });

  m.def("constants", [](double k) {
    py::dict d;
    for (const auto& [name, value] : constants_as_pairs(build_theory(ModelParams::sec5(k)).constants)) d[name.c_str()] = value;
    return d;
  }, py::arg("k") = 0.0, "Theory constants of the linear example with interaction strength k.");

  m.def("admissibility_report", [](const std::string& text) {
    std::ostringstream out;
    const int code = run_admissibility_report(config_from(text), out);
    return py::make_tuple(out.str(), code);
  }, py::arg("config") = "");

  m.def("noise_report", [] {
    const NoiseCovarianceReport r = sec5_noise_covariance_report();
    py::dict d;
    d["exact"] = Eigen::Matrix2d(r.exact);
    d["printed"] = Eigen::Matrix2d(r.printed);
    d["discrepancy"] = Eigen::Matrix2d(r.discrepancy);
    d["exact_stationary"] = Eigen::Matrix2d(r.exact_stationary);
    d["printed_stationary"] = Eigen::Matrix2d(r.printed_stationary);
    d["printed_reproduces_exact"] = r.printed_reproduces_exact;
    return d;
  });

  m.def("w1_1d", [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return w1_exact_1d(EmpiricalMeasure(Matrix(a.transpose())), EmpiricalMeasure(Matrix(b.transpose())));
  }, "Exact W1 between two uniform samples on the line.");

  m.def("w1_exact", [](const Matrix& a, const Matrix& b) {
    return w1_exact_small(EmpiricalMeasure(a), EmpiricalMeasure(b));
  }, "Exact W1 between uniform point clouds given as (dim, n) arrays.");

  m.def("sec5_figure", [](const std::string& text, bool write_files) {
    const ExperimentConfig c = config_from(text);
    std::vector<Sec5Curve> curves;
    {
      py::gil_scoped_release release;
      curves = run_sec5_figure(c, write_files);
    }
    py::list out;
    for (const auto& cv : curves) {
      py::dict d;
      d["k"] = cv.k;
      d["j"] = cv.steps;
      d["mean_abs_m"] = cv.mean_abs_m;
      d["stderr"] = cv.stderr_abs_m;
      out.append(d);
    }
    return out;
  }, py::arg("config") = "", py::arg("write_files") = false);

  m.def("converge", [](const std::string& text, bool write_files) {
    const ExperimentConfig c = config_from(text);
    ConvergenceResult r;
    {
      py::gil_scoped_release release;
      r = run_empirical_convergence(c, write_files);
    }
    py::dict d;
    d["step"] = r.steps;
    d["t"] = r.times;
    d["mean_w1"] = r.mean_w1;
    d["stderr"] = r.stderr_w1;
    d["slope"] = r.slope;
    d["admissible"] = r.admissible;
    d["eps_max_meanfield"] = r.eps_max_meanfield;
    d["eps_max_selfinteracting"] = r.eps_max_selfinteracting;
    d["var_x"] = r.var_x;
    d["var_v"] = r.var_v;
    return d;
  }, py::arg("config") = "", py::arg("write_files") = false);

  m.def("contract", [](const std::string& text, bool write_files) {
    const ExperimentConfig c = config_from(text);
    ContractionReport r;
    {
      py::gil_scoped_release release;
      r = run_contraction(c, write_files);
    }
    py::dict d;
    d["t"] = r.times;
    d["mean_rho"] = r.mean_rho;
    d["stderr"] = r.stderr_rho;
    d["fit"] = fit_dict(r.fit);
    d["half_delta_fit"] = r.half_delta_fit ? py::object(fit_dict(*r.half_delta_fit)) : py::none();
    d["c3"] = r.c3_reference;
    d["admissible"] = r.admissible;
    d["meeting_fraction"] = r.meeting_fraction;
    return d;
  }, py::arg("config") = "", py::arg("write_files") = false);

  m.def("moments", [](const std::string& text, bool write_files) {
    const ExperimentConfig c = config_from(text);
    MomentReport r;
    {
      py::gil_scoped_release release;
      r = run_moments(c, write_files);
    }
    py::dict d;
    d["t"] = r.times;
    d["second_moment"] = r.second_moment;
    d["stderr"] = r.stderr_moment;
    d["running_sup"] = r.running_sup;
    d["sup_first_quarter"] = r.sup_first_quarter;
    d["sup_final_quarter"] = r.sup_final_quarter;
    d["growth_flag"] = r.growth_flag;
    return d;
  }, py::arg("config") = "", py::arg("write_files") = false);
}
