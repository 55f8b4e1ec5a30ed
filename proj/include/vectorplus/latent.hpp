#pragma once

// Full-covariance Gaussian mixture fitted by EM, class-conditional sampling,
// and the component-to-class alignment.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace vectorplus::latent {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GmmParams {
  VectorXd weights;                   // K
  MatrixXd means;                     // K x d
  std::vector<MatrixXd> covariances;  // K of d x d

  Eigen::Index K() const { return weights.size(); }
  Eigen::Index d() const { return means.cols(); }
  // Shapes, simplex weights and symmetric positive-definite covariances.
  void validate() const;
};

// n x K matrix of log pi_k + log N(z_i; mu_k, Sigma_k).
MatrixXd weighted_log_densities(const GmmParams& params, const MatrixXd& Z);
double log_density(const GmmParams& params, const VectorXd& z);
double log_likelihood(const GmmParams& params, const MatrixXd& Z);

// Row-stochastic n x K responsibilities.
MatrixXd e_step(const GmmParams& params, const MatrixXd& Z);
// Weighted moments, with `lambda` added to every covariance diagonal.
GmmParams m_step(const MatrixXd& Z, const MatrixXd& R, double lambda);

// lambda = scale * trace(global covariance) / d.
double regularization(const MatrixXd& Z, double scale);

struct FitConfig {
  Eigen::Index K = 2;
  double tol = 1e-6;
  int max_iter = 500;
  std::uint64_t seed = 0;
  double reg_scale = 1e-6;
  double empty_threshold = 1e-8;  // effective count below which a component is empty
  int max_reseeds = 5;
};

struct FitResult {
  GmmParams params;
  std::vector<double> trace;  // log-likelihood of the initial and every updated model
  std::vector<int> reseed_iterations;
  int iterations = 0;
  bool converged = false;
  double lambda = 0.0;
};

// EM from k-means++ means. A component keeps its previous covariance when the
// regularized update would score lower on the expected complete-data
// log-likelihood, so the trace never decreases.
FitResult fit(const MatrixXd& Z, const FitConfig& config);

// k-means++ seeding of K rows of Z.
MatrixXd kmeans_pp(const MatrixXd& Z, Eigen::Index K, std::mt19937_64& rng);

// count x d draws from component k, or from the whole mixture.
MatrixXd sample(const GmmParams& params, Eigen::Index k, Eigen::Index count, std::uint64_t seed);
MatrixXd sample_mixture(const GmmParams& params, Eigen::Index count, std::uint64_t seed);

// K x C, entry (k, c) sums r_ik over points of class c + 1. Labels are 1..C.
MatrixXd affinity(const MatrixXd& R, const std::vector<int>& labels, Eigen::Index num_classes);

// Maximum-weight perfect matching on a square matrix. Entry k of the result is
// the column matched to row k. Among optimal matchings the lexicographically
// smallest is returned.
std::vector<int> assign(const MatrixXd& phi);

struct Alignment {
  MatrixXd affinity;
  std::vector<int> component_to_class;  // 0-based class index per component
  std::vector<int> class_to_component;  // 0-based component index per class
  double total = 0.0;
};
Alignment align(const MatrixXd& R, const std::vector<int>& labels, Eigen::Index num_classes);

// One mixture per class, fitted on that class's rows.
std::vector<FitResult> fit_per_class(const MatrixXd& Z, const std::vector<int>& labels,
                                     Eigen::Index num_classes, const FitConfig& config);

nlohmann::json to_json(const GmmParams& params);
GmmParams gmm_from_json(const nlohmann::json& j);

}  // namespace vectorplus::latent
