#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sdb/cli.hpp"
#include "sdb/config.hpp"
#include "sdb/errors.hpp"
#include "sdb/oracle.hpp"
#include "sdb/sampler.hpp"
#include "sdb/schedule.hpp"
#include "sdb/tasks.hpp"
#include "sdb/verify.hpp"

namespace py = pybind11;
using namespace sdb;

namespace {

ScheduleSpec make_schedule(const std::string& variant, double b0, double b1, double sigma_max, double eps1,
                           double eps2) {
    switch (parse_variant(variant)) {
        case Variant::SB:
            return ScheduleSpec::sb(b0, b1, eps1, eps2);
        case Variant::VP:
            return ScheduleSpec::vp(eps1, eps2);
        case Variant::VE:
            return ScheduleSpec::ve(sigma_max, eps1, eps2);
    }
    throw UnsupportedVariant("unknown variant");
}

py::dict coeffs_dict(const ScheduleCoeffs& c) {
    py::dict d;
    d["t"] = c.t;
    d["alpha"] = c.alpha;
    d["beta"] = c.beta;
    d["gamma"] = c.gamma;
    d["dalpha_dt"] = c.dalpha_dt;
    d["dbeta_dt"] = c.dbeta_dt;
    d["dgamma_dt"] = c.dgamma_dt;
    d["dlog_alpha_dt"] = c.dlog_alpha_dt;
    d["gnull_sq"] = c.gnull_sq;
    d["f_range"] = c.f_range;
    d["f_null"] = c.f_null;
    return d;
}

NoiseFactor noise_of(double sigma) { return sigma > 0.0 ? NoiseFactor::isotropic(sigma) : NoiseFactor::none(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "System-embedded diffusion bridge core";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

    py::class_<ScheduleSpec>(m, "Schedule")
        .def(py::init(&make_schedule), py::arg("variant") = "SB", py::arg("b0") = 0.1, py::arg("b1") = 0.3,
             py::arg("sigma_max") = 10.0, py::arg("eps1") = 1e-3, py::arg("eps2") = 1e-3)
        .def("coeffs", [](const ScheduleSpec& s, double t) { return coeffs_dict(eval(s, t)); }, py::arg("t"))
        .def_property_readonly("t_start", &ScheduleSpec::t_start)
        .def_property_readonly("t_end", &ScheduleSpec::t_end)
        .def("__repr__", [](const ScheduleSpec& s) { return "Schedule(" + canonical_string(s) + ")"; });

    py::class_<LinearSystem>(m, "LinearSystem")
        .def_property_readonly("m", &LinearSystem::m)
        .def_property_readonly("d", &LinearSystem::d)
        .def_property_readonly("kind", [](const LinearSystem& s) { return std::string(to_string(s.kind())); })
        .def("apply", &LinearSystem::apply_cols, py::arg("x"))
        .def("apply_pinv", &LinearSystem::apply_pinv_cols, py::arg("y"))
        .def("project_range", &LinearSystem::project_range_cols, py::arg("x"))
        .def("project_null", &LinearSystem::project_null_cols, py::arg("x"))
        .def("matrix", [](const LinearSystem& s) { return materialize_matrix(s); })
        .def("pinv", [](const LinearSystem& s) { return materialize_pinv(s); })
        .def("noise_covariance", [](const LinearSystem& s) { return s.noise().covariance(s.m()); });

    m.def("dense_system", [](const Matrix& a, double sigma) { return build_dense_system(a, noise_of(sigma)); },
          py::arg("a"), py::arg("sigma") = 0.0);
    m.def(
        "task_system",
        [](const std::string& config_text) { return build_system(parse_config(config_text).task); },
        py::arg("config_text"), "Measurement system of the [task] section of an INI config.");
    m.def("pseudoinverse", &pseudoinverse, py::arg("a"), py::arg("cutoff") = kDefaultPinvCutoff);

    m.def(
        "gaussian_posterior",
        [](const Vector& mean, const Matrix& cov, const LinearSystem& sys, const Vector& y) {
            const GaussianBelief post = gaussian_posterior({mean, cov}, sys, y);
            return py::make_tuple(post.mean, post.cov);
        },
        py::arg("mean"), py::arg("cov"), py::arg("system"), py::arg("y"));

    m.def(
        "sample_oracle",
        [](const LinearSystem& sys, const ScheduleSpec& spec, const Vector& mean, const Matrix& cov, const Matrix& ys,
           int n_steps, std::uint64_t seed, const std::string& grid) {
            SamplerConfig cfg;
            cfg.spec = spec;
            cfg.n_steps = n_steps;
            cfg.seed = seed;
            cfg.grid = parse_time_grid(grid);
            const Denoiser den = oracle_denoiser({mean, cov}, sys, spec);
            py::gil_scoped_release release;
            return sample_batch(sys, cfg, ys, den);
        },
        py::arg("system"), py::arg("schedule"), py::arg("mean"), py::arg("cov"), py::arg("ys"),
        py::arg("n_steps") = 100, py::arg("seed") = 0, py::arg("grid") = "uniform",
        "Reverse-SDE samples with the exact Gaussian denoiser; one chain per column of ys.");

    m.def("psnr", &psnr, py::arg("x"), py::arg("ref"));
    m.def(
        "ssim", [](const Vector& x, const Vector& ref, int side) { return ssim(x, ref, side); }, py::arg("x"),
        py::arg("ref"), py::arg("side"));

    m.def("suite_names", &suite_names);
    m.def(
        "verify",
        [](const std::string& suite) {
            py::list rows;
            for (const CheckRow& r : run_suite(suite)) {
                py::dict d;
                d["suite"] = r.suite;
                d["check"] = r.check;
                d["pass"] = r.pass;
                d["value"] = r.value;
                d["tolerance"] = r.tolerance;
                rows.append(d);
            }
            return rows;
        },
        py::arg("suite"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the sdb command line in-process; returns (exit_code, stdout, stderr).");
}
