#pragma once

// Class-conditional sampling from the aligned mixture, optional reward-guided
// hill-climbing in latent space, and validity/novelty/duplicate filtering.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectorplus/decoder.hpp"
#include "vectorplus/latent.hpp"

namespace vectorplus::generate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kVarianceFloor = 1e-8;

enum class Reward { kNone, kLipinski };
Reward parse_reward(std::string_view name);  // "none" | "lipinski"; throws ConfigError
std::string to_string(Reward reward);

struct GenerationConfig {
  int target_class = 0;  // 0-based
  int samples = 100;     // T
  int hill_steps = 10;   // H
  int knn = 5;           // k
  double alpha = 0.1;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  Reward reward = Reward::kNone;
  int max_len = 150;
  int retry_factor = 5;  // at most retry_factor * T raw attempts

  void validate() const;
};

// Number of satisfied rules among mw <= 500, logp <= 5, hbd <= 5, hba <= 10.
int lipinski_reward(std::string_view smiles);

// Mean squared distance from z to its k nearest rows of `references`,
// floored at kVarianceFloor.
double knn_local_variance(const VectorXd& z, const MatrixXd& references, int k);

// Deterministic latent -> SMILES map used during one attempt.
using DecodeFn = std::function<decoder::Sample(const VectorXd&)>;
// Reward of a valid SMILES.
using RewardFn = std::function<double(const std::string&)>;

struct HillClimbResult {
  VectorXd z;                  // last accepted latent (z0 if nothing was accepted)
  bool initial_valid = false;  // false: z0 decoded invalid and was returned as is
  std::vector<double> rewards;  // reward of z0 followed by each accepted reward
  std::vector<VectorXd> accepted;
  std::vector<std::string> accepted_smiles;
  int steps = 0;
};

HillClimbResult hill_climb(const VectorXd& z0, const DecodeFn& decode, const RewardFn& reward,
                           const MatrixXd& references, int steps, int k, double alpha,
                           std::uint64_t seed);

// Everything generation needs from a trained pipeline.
struct GenerationModels {
  const decoder::DecoderParams* decoder = nullptr;
  const decoder::Vocabulary* vocab = nullptr;
  const latent::GmmParams* gmm = nullptr;
  // Training embeddings of the cluster being sampled (KNN reference set).
  MatrixXd references;
  // Canonical forms of the training molecules.
  std::set<std::string> training_canonical;
};

// Rows of Z whose most responsible component is k. When fewer than `min_rows`
// rows qualify, all of Z is returned.
MatrixXd cluster_members(const latent::GmmParams& gmm, const MatrixXd& Z, Eigen::Index k,
                         Eigen::Index min_rows);

enum class Status { kAccepted, kTruncated, kInvalid, kNonNovel, kDuplicate };
std::string to_string(Status status);

struct AttemptRecord {
  int attempt = 0;
  std::string smiles;
  std::string canonical;  // empty unless valid
  std::optional<int> reward;  // valid molecules only
  Status status = Status::kInvalid;
  int hill_accepts = 0;
  VectorXd latent;  // latent that produced `smiles`
};

struct GenerationReport {
  int requested = 0;
  int attempts = 0;
  int produced = 0;
  int invalid = 0;
  int duplicate = 0;
  int non_novel = 0;
  int truncated = 0;
  std::vector<AttemptRecord> records;  // every raw attempt, in order

  int shortfall() const { return requested - produced; }
  std::vector<std::string> accepted() const;
  std::vector<std::string> raw() const;
};

// Samples from component `component` of the mixture (or from the whole mixture
// when component < 0) until T molecules are accepted or the retry budget runs
// out.
GenerationReport generate_class(const GenerationModels& models, int component,
                                const GenerationConfig& config);

// Seed for attempt t, derived from the master seed.
std::uint64_t attempt_seed(std::uint64_t master, std::uint64_t t, std::uint64_t stream);

nlohmann::json to_json(const GenerationConfig& config);
nlohmann::json summary_json(const GenerationReport& report, const GenerationConfig& config);
void write_report_csv(const GenerationReport& report, const std::string& path);
void write_smiles(const std::vector<std::string>& smiles, const std::string& path);

}  // namespace vectorplus::generate
