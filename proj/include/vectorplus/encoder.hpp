#pragma once

// Molecule encoder: a fixed fingerprint/descriptor featurizer followed by a
// trainable two-layer projection head with ELU, trained with a pairwise
// contrastive loss.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectorplus/chem.hpp"

namespace vectorplus::encoder {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FeaturizerConfig {
  std::size_t fp_width = 2048;
  int fp_radius = 2;

  std::size_t dim() const { return fp_width + 4; }
};

// Fingerprint bits followed by mw/500, logp/5, hbd/5, hba/10.
VectorXd featurize(const chem::Molecule& molecule, const FeaturizerConfig& config = {},
                   const chem::LogPTable& table = chem::LogPTable::builtin());
// One row per SMILES string. Throws chem errors for unparseable input.
MatrixXd featurize_all(const std::vector<std::string>& smiles, const FeaturizerConfig& config = {},
                       const chem::LogPTable& table = chem::LogPTable::builtin());

struct EncoderParams {
  MatrixXd W1;  // d_h x d_in
  VectorXd b1;
  MatrixXd W2;  // d x d_h
  VectorXd b2;

  Eigen::Index d_in() const { return W1.cols(); }
  Eigen::Index d_h() const { return W1.rows(); }
  Eigen::Index d() const { return W2.rows(); }
};

// Glorot-uniform weights, zero biases.
EncoderParams init_params(Eigen::Index d_in, Eigen::Index d_h, Eigen::Index d, std::uint64_t seed);

double elu(double u);

VectorXd embed(const EncoderParams& params, const VectorXd& x);
// Rows of `X` are inputs; rows of the result are embeddings.
MatrixXd embed_all(const EncoderParams& params, const MatrixXd& X, bool l2_normalize = false);

struct ContrastiveConfig {
  double margin = 1.0;
  int p = 1;
  std::size_t batch_size = 32;
  int epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Eigen::Index hidden_dim = 64;
  Eigen::Index latent_dim = 64;
  bool class_balanced = false;
  bool l2_normalize = false;

  void validate() const;
};

// Mean over ordered pairs i != j of the positive/negative pair terms.
double contrastive_loss(const MatrixXd& Z, const std::vector<int>& labels,
                        const ContrastiveConfig& config);

struct LossAndGrad {
  double loss = 0.0;
  MatrixXd grad;  // same shape as Z
};
LossAndGrad contrastive_loss_grad(const MatrixXd& Z, const std::vector<int>& labels,
                                  const ContrastiveConfig& config);

struct ParamGrads {
  MatrixXd W1;
  VectorXd b1;
  MatrixXd W2;
  VectorXd b2;
};
// Chain rule from dL/dZ (rows aligned with X) back to the head parameters.
ParamGrads backprop(const EncoderParams& params, const MatrixXd& X, const MatrixXd& dZ,
                    bool l2_normalize = false);

// Loss of the head applied to X; used by training and by gradient checks.
LossAndGrad batch_objective(const EncoderParams& params, const MatrixXd& X,
                            const std::vector<int>& labels, const ContrastiveConfig& config,
                            ParamGrads* grads);

struct EmbeddingSet {
  MatrixXd vectors;  // n x d
  std::vector<int> labels;
  std::vector<std::string> source_smiles;
};

struct TrainResult {
  EncoderParams params;
  EmbeddingSet embeddings;
  std::vector<double> loss_trajectory;  // mean minibatch loss per epoch
};

TrainResult train_encoder(const MatrixXd& features, const std::vector<int>& labels,
                          const std::vector<std::string>& smiles, const ContrastiveConfig& config);

// Minibatch index lists for one epoch. A trailing singleton batch is merged
// into its predecessor so every batch has at least two members.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<int>& labels,
                                                   std::size_t batch_size, bool class_balanced,
                                                   std::mt19937_64& rng);

nlohmann::json to_json(const EncoderParams& params);
EncoderParams params_from_json(const nlohmann::json& j);

void write_embeddings_csv(const EmbeddingSet& set, const std::string& path);

}  // namespace vectorplus::encoder
