#pragma once

// GRU decoder from latent vectors to SMILES. The latent only enters through
// the initial hidden state.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectorplus/optim.hpp"

namespace vectorplus::decoder {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Character tokens, with Cl, Br and %nn kept whole.
std::vector<std::string> split_tokens(std::string_view smiles);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  Vocabulary();
  // Specials followed by the corpus tokens in sorted order.
  static Vocabulary build(const std::vector<std::string>& corpus);
  // Full ordered token list, specials included.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::vector<int> encode(std::string_view smiles) const;  // no BOS/EOS; throws UnknownToken
  // Concatenates tokens up to the first EOS, skipping PAD/BOS.
  std::string decode(const std::vector<int>& ids) const;

  int index(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

struct DecoderConfig {
  int layers = 3;
  int hidden = 128;
  int embed_dim = 32;
  double dropout = 0.2;
  int epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;  // 0 disables clipping
  std::uint64_t seed = 0;
  int max_len = 150;

  void validate() const;
};

// Gate rows are stacked reset, update, candidate.
struct GruLayer {
  MatrixXd W_ih;  // 3H x in
  MatrixXd W_hh;  // 3H x H
  VectorXd b_ih;
  VectorXd b_hh;
};

struct DecoderParams {
  MatrixXd W_init;  // (L*H) x d
  VectorXd b_init;
  MatrixXd embedding;  // |V| x e
  std::vector<GruLayer> layers;
  MatrixXd W_out;  // |V| x H
  VectorXd b_out;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int hidden() const { return static_cast<int>(W_hh_rows() / 3); }
  int latent_dim() const { return static_cast<int>(W_init.cols()); }
  int vocab_size() const { return static_cast<int>(W_out.rows()); }

  // Every parameter as a flat view, in a fixed order.
  std::vector<optim::Block> blocks();
  // Same shapes, all zero.
  DecoderParams zeros_like() const;

 private:
  Eigen::Index W_hh_rows() const { return layers.empty() ? 0 : layers.front().W_hh.rows(); }
};

DecoderParams init_decoder(int latent_dim, int vocab_size, const DecoderConfig& config,
                           std::uint64_t seed);

// One hidden vector per layer: tanh(W_init z + b_init) split into blocks.
std::vector<VectorXd> init_hidden(const DecoderParams& params, const VectorXd& z);

struct StepResult {
  VectorXd logits;
  VectorXd probs;
  std::vector<VectorXd> hidden;
};
// One evaluation-mode step (no dropout).
StepResult decode_step(const DecoderParams& params, const std::vector<VectorXd>& hidden, int token);

// Mean next-token cross-entropy under teacher forcing. Row i of Z pairs with
// sequences[i] (token ids without BOS/EOS). With `grads` set, gradients of the
// mean loss are written there. Dropout is used when `rng` is given.
struct LossStats {
  double loss = 0.0;  // mean per target token
  double total_nll = 0.0;
  long tokens = 0;
};
LossStats teacher_forced_loss(const DecoderParams& params, const MatrixXd& Z,
                              const std::vector<std::vector<int>>& sequences, double dropout,
                              std::mt19937_64* rng, DecoderParams* grads);

struct DecoderTrainResult {
  DecoderParams params;
  std::vector<double> loss_trace;  // per epoch, mean per target token
};

DecoderTrainResult train_decoder(DecoderParams params, const Vocabulary& vocab, const MatrixXd& Z,
                                 const std::vector<std::string>& smiles,
                                 const DecoderConfig& config);

struct Sample {
  std::string smiles;
  bool truncated = false;  // no EOS within max_len steps
};

// Temperature sampling from softmax(logits / temperature); `greedy` takes the
// argmax instead and ignores the seed. PAD and BOS are never emitted.
Sample sample_smiles(const DecoderParams& params, const Vocabulary& vocab, const VectorXd& z,
                     double temperature, int max_len, std::uint64_t seed, bool greedy = false);
Sample greedy_decode(const DecoderParams& params, const Vocabulary& vocab, const VectorXd& z,
                     int max_len);

nlohmann::json to_json(const DecoderParams& params);
DecoderParams decoder_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

}  // namespace vectorplus::decoder
