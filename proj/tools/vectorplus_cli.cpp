// vectorplus command-line tool.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vectorplus/errors.hpp"
#include "vectorplus/pipeline.hpp"

using namespace vectorplus;
using nlohmann::json;

namespace {

// Flags shared by the pipeline subcommands. Unset flags leave the config alone.
struct Overrides {
  std::string config;
  std::string input;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string smiles_col, value_col, label_col;
  bool per_class_gmm = false;

  std::optional<int> cls;
  std::optional<int> count;
  std::string reward;
  std::optional<int> hill_steps;
  std::optional<int> knn;
  std::optional<double> alpha;
  std::optional<double> temperature;

  void add_common(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON configuration file");
    cmd->add_option("--input", input, "input CSV (overrides the config's dataset)");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--output", output, "output directory");
    cmd->add_option("--smiles-col", smiles_col, "SMILES column name");
    cmd->add_option("--value-col", value_col, "IC50 column name (activity tables)");
    cmd->add_option("--label-col", label_col, "class label column name");
    cmd->add_flag("--per-class-gmm", per_class_gmm, "fit one mixture per class");
  }

  void add_generation(CLI::App* cmd) {
    cmd->add_option("--class", cls, "target class, 1-based");
    cmd->add_option("--count", count, "number of molecules T");
    cmd->add_option("--reward", reward, "none | lipinski")->check(CLI::IsMember({"none", "lipinski"}));
    cmd->add_option("--hill-steps", hill_steps, "hill-climbing steps H");
    cmd->add_option("--knn", knn, "neighbours for the local variance");
    cmd->add_option("--alpha", alpha, "hill-climbing step scale");
    cmd->add_option("--temperature", temperature, "sampling temperature");
  }

  pipeline::PipelineConfig resolve() const {
    pipeline::PipelineConfig c;
    if (!config.empty()) c = pipeline::load_config(config);
    if (!input.empty()) c.dataset = input;
    if (!output.empty()) c.output = output;
    if (!smiles_col.empty()) c.schema.smiles_col = smiles_col;
    if (!value_col.empty()) {
      c.schema.value_col = value_col;
      c.schema.label_col.clear();
    }
    if (!label_col.empty()) {
      c.schema.label_col = label_col;
      c.schema.value_col.clear();
    }
    if (per_class_gmm) c.gmm.per_class = true;
    if (seed) c.set_seed(*seed);
    auto& g = c.generation;
    if (cls) {
      if (*cls < 1) throw ConfigError("--class is 1-based");
      g.target_class = *cls - 1;
    }
    if (count) g.samples = *count;
    if (!reward.empty()) g.reward = generate::parse_reward(reward);
    if (hill_steps) g.hill_steps = *hill_steps;
    if (knn) g.knn = *knn;
    if (alpha) g.alpha = *alpha;
    if (temperature) g.temperature = *temperature;
    c.validate();
    return c;
  }
};

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int usage_code(const Error& e) {
  const auto& k = e.kind();
  return (k == "IoError" || k == "SchemaError" || k == "ConfigError") ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vectorplus: class-conditional molecule generation"};
  app.require_subcommand(1);

  Overrides o;

  auto* pre = app.add_subcommand("preprocess", "load, filter and label a dataset");
  o.add_common(pre);

  auto* train = app.add_subcommand("train", "train encoder, mixture and decoder");
  o.add_common(train);
  std::string dataset_path;
  train->add_option("--dataset", dataset_path, "preprocessed dataset CSV (default: preprocess the input)");

  auto* gen = app.add_subcommand("generate", "sample molecules for one class");
  o.add_common(gen);
  o.add_generation(gen);
  std::string bundle_path;
  gen->add_option("--bundle", bundle_path, "model bundle (default: <output>/bundle.json)");

  auto* ev = app.add_subcommand("evaluate", "validity, uniqueness, novelty and similarity");
  std::string generated, training, eval_out = "vectorplus_out", stem = "metrics";
  ev->add_option("--generated", generated, "generated SMILES, one per line")->required();
  ev->add_option("--training", training, "training SMILES file or processed dataset CSV")->required();
  ev->add_option("--output", eval_out, "output directory");
  ev->add_option("--name", stem, "report file stem");

  auto* ver = app.add_subcommand("verify", "numeric check of the Gaussian cross-entropy minimizer");
  eval::VerifyConfig vc;
  bool grad_only = false;
  std::string verify_out = "vectorplus_out";
  ver->add_option("--samples", vc.samples, "draws per source");
  ver->add_option("--seed", vc.seed, "seed");
  ver->add_option("--max-iter", vc.max_iter, "gradient descent budget");
  ver->add_flag("--grad-check-only", grad_only, "only check gradient formulas");
  ver->add_option("--output", verify_out, "output directory");

  auto* all = app.add_subcommand("run-all", "preprocess, train, generate every class and evaluate");
  o.add_common(all);
  o.add_generation(all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*pre) {
      const auto cfg = o.resolve();
      const auto path = pipeline::cmd_preprocess(cfg);
      std::cout << "dataset: " << path << "\n";
      print(json::parse(std::ifstream(cfg.output + "/preprocess.json")));
    } else if (*train) {
      const auto cfg = o.resolve();
      const auto path = pipeline::cmd_train(cfg, dataset_path);
      const auto report = json::parse(std::ifstream(cfg.output + "/train_report.json"));
      const auto& enc = report["encoder"]["loss"];
      if (!enc.empty())
        std::cout << "encoder loss: " << fmt(enc.front()) << " -> " << fmt(enc.back()) << "\n";
      if (report["gmm"].contains("trace")) {
        const auto& t = report["gmm"]["trace"];
        std::cout << "gmm log-likelihood: " << fmt(t.front()) << " -> " << fmt(t.back()) << " ("
                  << report["gmm"]["iterations"] << " iterations)\n";
      }
      if (report.contains("alignment")) {
        std::cout << "alignment:";
        const auto& a = report["alignment"]["class_to_component"];
        for (std::size_t c = 0; c < a.size(); ++c) std::cout << " class " << c + 1 << "->component " << a[c];
        std::cout << "\npurity: " << fmt(report["purity"]) << "\n";
      }
      const auto& dec = report["decoder"]["loss"];
      if (!dec.empty())
        std::cout << "decoder loss: " << fmt(dec.front()) << " -> " << fmt(dec.back()) << "\n";
      std::cout << "bundle: " << path << "\n";
    } else if (*gen) {
      const auto cfg = o.resolve();
      const auto path = bundle_path.empty() ? cfg.output + "/bundle.json" : bundle_path;
      const auto report = pipeline::cmd_generate(cfg, path);
      print(generate::summary_json(report, cfg.generation));
      if (report.shortfall() > 0)
        std::cerr << "shortfall: " << report.shortfall() << " of " << report.requested << " molecules\n";
    } else if (*ev) {
      print(eval::to_json(pipeline::cmd_evaluate(generated, training, eval_out, stem)));
    } else if (*ver) {
      const auto out = pipeline::cmd_verify(vc, grad_only, verify_out);
      for (const auto& g : out.report["gradient_checks"])
        std::cout << (g["passed"].get<bool>() ? "PASS" : "FAIL") << " gradient " << g["name"].get<std::string>()
                  << " rel_error " << fmt(g["rel_error"]) << "\n";
      if (out.report.contains("sources")) {
        for (const auto& s : out.report["sources"]) {
          std::cout << (s["passed"].get<bool>() ? "PASS" : "FAIL") << " source " << s["source"].get<std::string>();
          if (s.contains("error")) {
            std::cout << " " << s["error"].get<std::string>() << "\n";
            continue;
          }
          std::cout << " mean_error " << fmt(s["mean_error"]) << " cov_error " << fmt(s["cov_error"])
                    << " analytic_mean_error " << fmt(s["analytic_mean_error"]) << " analytic_cov_error "
                    << fmt(s["analytic_cov_error"]) << " tolerance " << fmt(vc.tolerance) << "\n";
        }
      }
      return out.passed ? 0 : 1;
    } else if (*all) {
      const auto cfg = o.resolve();
      const auto summary = pipeline::cmd_run_all(cfg);
      for (const auto& c : summary["classes"]) {
        const auto& m = c["metrics"];
        std::cout << "class " << c["class"] << ": validity " << fmt(m["validity"]) << " uniqueness "
                  << fmt(m["uniqueness"]) << " novelty " << fmt(m["novelty"]) << "\n";
      }
      if (summary.contains("purity")) std::cout << "purity " << fmt(summary["purity"]) << "\n";
      std::cout << "output: " << cfg.output << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
