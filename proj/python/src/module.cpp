// Python bindings. JSON results cross the boundary as dicts.

#include <filesystem>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vectorplus/chem.hpp"
#include "vectorplus/encoder.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/eval.hpp"
#include "vectorplus/latent.hpp"
#include "vectorplus/pipeline.hpp"

namespace py = pybind11;
using namespace vectorplus;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// A config is either a path to a JSON file or a dict. Relative dataset paths
// in a dict resolve against the working directory.
pipeline::PipelineConfig config_arg(const py::object& cfg, const std::string& output) {
  pipeline::PipelineConfig c;
  if (py::isinstance<py::str>(cfg))
    c = pipeline::load_config(cfg.cast<std::string>());
  else
    c = pipeline::config_from_json(from_py(cfg), std::filesystem::current_path().string());
  if (!output.empty()) c.output = output;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "vectorplus core: chemistry, latent mixtures, metrics and the training pipeline";

  static py::exception<Error> error(m, "VectorplusError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("kind") = e.kind();
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  m.def("canonical_smiles", [](const std::string& s) { return chem::canonical_smiles(s); },
        "Canonical form, or None when the string does not parse.");
  m.def("is_valid", [](const std::string& s) { return chem::is_valid(s); });
  m.def("properties", [](const std::string& s) {
    const auto p = chem::properties(chem::parse_smiles(s));
    py::dict d;
    d["mw"] = p.mw;
    d["logp"] = p.logp;
    d["hbd"] = p.hbd;
    d["hba"] = p.hba;
    return d;
  });
  m.def(
      "tanimoto",
      [](const std::string& a, const std::string& b, int radius, std::size_t width) {
        return chem::tanimoto(chem::fingerprint(chem::parse_smiles(a), radius, width),
                              chem::fingerprint(chem::parse_smiles(b), radius, width));
      },
      py::arg("a"), py::arg("b"), py::arg("radius") = 2, py::arg("width") = 2048);

  m.def(
      "featurize",
      [](const std::vector<std::string>& smiles, std::size_t width, int radius) {
        return encoder::featurize_all(smiles, {width, radius});
      },
      py::arg("smiles"), py::arg("width") = 2048, py::arg("radius") = 2);

  m.def(
      "gmm_fit",
      [](const Eigen::MatrixXd& Z, Eigen::Index K, std::uint64_t seed, double reg_scale, double tol, int max_iter) {
        latent::FitConfig c;
        c.K = K;
        c.seed = seed;
        c.reg_scale = reg_scale;
        c.tol = tol;
        c.max_iter = max_iter;
        const auto r = latent::fit(Z, c);
        py::list covs;
        for (const auto& S : r.params.covariances) covs.append(S);
        py::dict d;
        d["weights"] = r.params.weights;
        d["means"] = r.params.means;
        d["covariances"] = covs;
        d["trace"] = r.trace;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        d["lambda"] = r.lambda;
        return d;
      },
      py::arg("Z"), py::arg("K"), py::arg("seed") = 0, py::arg("reg_scale") = 1e-6, py::arg("tol") = 1e-6,
      py::arg("max_iter") = 500);
  m.def("assign", &latent::assign, py::arg("phi"),
        "Maximum-weight matching; entry k is the column matched to row k.");
  m.def("silhouette", &eval::silhouette, py::arg("Z"), py::arg("labels"));

  m.def(
      "metrics",
      [](const std::vector<std::string>& generated, const std::vector<std::string>& training, int bins) {
        return to_py(eval::to_json(eval::metrics(generated, training, bins)));
      },
      py::arg("generated"), py::arg("training"), py::arg("bins") = 20);
  m.def(
      "verify",
      [](Eigen::Index samples, std::uint64_t seed, bool grad_check_only) {
        eval::VerifyConfig c;
        c.samples = samples;
        c.seed = seed;
        const auto out = pipeline::verify(c, grad_check_only);
        py::dict d;
        d["passed"] = out.passed;
        d["report"] = to_py(out.report);
        return d;
      },
      py::arg("samples") = 100000, py::arg("seed") = 0, py::arg("grad_check_only") = false);

  m.def(
      "preprocess",
      [](const py::object& cfg, const std::string& output) {
        return pipeline::cmd_preprocess(config_arg(cfg, output));
      },
      py::arg("config"), py::arg("output") = "", "Writes the processed dataset; returns its path.");
  m.def(
      "train",
      [](const py::object& cfg, const std::string& output, const std::string& dataset) {
        return pipeline::cmd_train(config_arg(cfg, output), dataset);
      },
      py::arg("config"), py::arg("output") = "", py::arg("dataset") = "", "Trains and writes bundle.json; returns its path.");
  m.def(
      "generate",
      [](const py::object& cfg, const std::string& bundle, int cls, int count, const std::string& output) {
        auto c = config_arg(cfg, output);
        if (cls < 1) throw ConfigError("class is 1-based");
        c.generation.target_class = cls - 1;
        if (count > 0) c.generation.samples = count;
        c.validate();
        const auto path = bundle.empty() ? c.output + "/bundle.json" : bundle;
        const auto report = pipeline::cmd_generate(c, path);
        auto d = to_py(generate::summary_json(report, c.generation));
        d["accepted"] = report.accepted();
        return d;
      },
      py::arg("config"), py::arg("bundle") = "", py::arg("cls") = 1, py::arg("count") = 0, py::arg("output") = "");
  m.def(
      "evaluate",
      [](const std::string& generated, const std::string& training, const std::string& output,
         const std::string& name) {
        return to_py(eval::to_json(pipeline::cmd_evaluate(generated, training, output, name)));
      },
      py::arg("generated"), py::arg("training"), py::arg("output"), py::arg("name") = "metrics");
  m.def(
      "run_all",
      [](const py::object& cfg, const std::string& output) {
        return to_py(pipeline::cmd_run_all(config_arg(cfg, output)));
      },
      py::arg("config"), py::arg("output") = "");
}
