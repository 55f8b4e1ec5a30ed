#pragma once

// End-to-end orchestration: configuration, the persisted model bundle and the
// preprocess / train / generate / evaluate / verify commands.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectorplus/data.hpp"
#include "vectorplus/decoder.hpp"
#include "vectorplus/encoder.hpp"
#include "vectorplus/eval.hpp"
#include "vectorplus/generate.hpp"
#include "vectorplus/latent.hpp"

namespace vectorplus::pipeline {

using Eigen::MatrixXd;

inline constexpr int kBundleVersion = 1;

struct PreprocessConfig {
  double z_threshold = 3.0;
  data::FilterScale scale = data::FilterScale::kLog;
  bool dedup = true;
  // Labelled tables: class order. Empty means order of first appearance.
  std::vector<std::string> class_names;
};

struct GmmConfig {
  latent::FitConfig fit;  // K is set from the class count
  bool per_class = false;
  int per_class_components = 1;
};

struct PipelineConfig {
  std::string dataset;  // CSV path
  data::CsvSchema schema;
  PreprocessConfig preprocess;
  encoder::FeaturizerConfig featurizer;
  encoder::ContrastiveConfig encoder;
  GmmConfig gmm;
  decoder::DecoderConfig decoder;
  generate::GenerationConfig generation;
  std::uint64_t seed = 0;
  std::string output = "vectorplus_out";

  // Sets the master seed and every stage seed.
  void set_seed(std::uint64_t value);
  void validate() const;
};

// Unknown keys are rejected. A relative dataset path is resolved against
// `base_dir` when that is non-empty.
PipelineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::string& path);

struct ModelBundle {
  int version = kBundleVersion;
  encoder::FeaturizerConfig featurizer;
  bool l2_normalize = false;
  encoder::EncoderParams encoder;
  decoder::Vocabulary vocab;
  decoder::DecoderParams decoder;
  bool per_class = false;
  latent::GmmParams gmm;                      // joint mode
  latent::Alignment alignment;                // joint mode
  std::vector<latent::GmmParams> class_gmms;  // per-class mode, index = class - 1
  data::LabeledDataset training;
  nlohmann::json config;  // echo of the training configuration

  int num_classes() const { return training.num_classes; }
  Eigen::Index latent_dim() const { return encoder.d(); }
  // Cross-part consistency; throws ModelMismatch.
  void validate() const;
};

nlohmann::json to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
// One compact JSON document followed by a newline.
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

// Embeddings of the bundle's training molecules, recomputed from the encoder.
MatrixXd training_embeddings(const ModelBundle& bundle);

// ---------------------------------------------------------------------------
// Commands as library calls

struct PreprocessResult {
  data::LabeledDataset dataset;
  nlohmann::json report;
};
PreprocessResult preprocess(const PipelineConfig& config);

struct TrainOutput {
  ModelBundle bundle;
  MatrixXd embeddings;
  nlohmann::json report;
};
// Encoder, mixture, alignment and decoder in that order. Errors are wrapped
// in StageError naming the stage.
TrainOutput train(const PipelineConfig& config, const data::LabeledDataset& dataset);

// Generation for config.target_class (0-based) from a trained bundle.
generate::GenerationReport generate_for_class(const ModelBundle& bundle,
                                              const generate::GenerationConfig& config);

struct VerifyOutcome {
  nlohmann::json report;
  bool passed = false;
};
VerifyOutcome verify(const eval::VerifyConfig& config, bool grad_check_only);

// ---------------------------------------------------------------------------
// Commands with file output under config.output

void write_json(const nlohmann::json& j, const std::string& path);
std::vector<std::string> read_smiles_file(const std::string& path);

std::string cmd_preprocess(const PipelineConfig& config);  // returns the dataset path
// Reads the preprocessed dataset (running preprocessing first when
// `dataset_path` is empty) and returns the bundle path.
std::string cmd_train(const PipelineConfig& config, const std::string& dataset_path = "");
generate::GenerationReport cmd_generate(const PipelineConfig& config, const std::string& bundle_path);
eval::MetricsSummary cmd_evaluate(const std::string& generated_path, const std::string& training_path,
                                  const std::string& output_dir, const std::string& stem = "metrics");
VerifyOutcome cmd_verify(const eval::VerifyConfig& config, bool grad_check_only,
                         const std::string& output_dir);
// preprocess, train, generate for every class, evaluate raw decodes.
nlohmann::json cmd_run_all(const PipelineConfig& config);

}  // namespace vectorplus::pipeline
