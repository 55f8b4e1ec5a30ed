#pragma once

// Generation metrics, the Gaussian cross-entropy minimization harness,
// clustering quality and the downstream regression study.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace vectorplus::eval {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Generation metrics

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<int> counts;
};

// Equal-width bins over [min, max] of the values (width 1 around a single value).
Histogram histogram(const std::vector<double>& values, int bins);

struct MetricsSummary {
  int total = 0;
  int valid = 0;
  int unique = 0;  // distinct canonical forms among valid
  int novel = 0;   // unique forms absent from the training set
  double validity = 0.0;    // valid / total
  double uniqueness = 0.0;  // unique / valid
  double novelty = 0.0;     // novel / unique
  // Per unique molecule: max Tanimoto over the training set.
  double mean_max_tanimoto = 0.0;
  double max_tanimoto = 0.0;
  Histogram mw;
  Histogram logp;
};

// Throws InsufficientData when the training set is empty.
MetricsSummary metrics(const std::vector<std::string>& generated,
                       const std::vector<std::string>& training, int bins = 20);

nlohmann::json to_json(const MetricsSummary& m);
void write_histograms_csv(const MetricsSummary& m, const std::string& path);

// ---------------------------------------------------------------------------
// Gaussian cross-entropy

// CE(P || N(nu, Lambda)) for P with mean mu and covariance Sigma. Throws NotPD.
double gaussian_cross_entropy(const VectorXd& mu, const MatrixXd& Sigma, const VectorXd& nu,
                              const MatrixXd& Lambda);

// -(1/n) sum log N(x_i; nu, L L^T) over the rows of X, with gradients with
// respect to nu and the lower triangle of L.
struct EmpiricalCe {
  double value = 0.0;
  VectorXd grad_nu;
  MatrixXd grad_L;  // lower triangular
};
EmpiricalCe empirical_cross_entropy(const MatrixXd& X, const VectorXd& nu, const MatrixXd& L);

// g(A) = 1/2 tr(A Sigma) - 1/2 log det A and its gradient 1/2 Sigma - 1/2 A^-1.
double precision_objective(const MatrixXd& A, const MatrixXd& Sigma);
MatrixXd precision_objective_grad(const MatrixXd& A, const MatrixXd& Sigma);

enum class Source { kUniformSquare, kTwoModeMixture, kExponential };
std::string to_string(Source source);
std::vector<Source> all_sources();
// n x d draws. Uniform[0,1]^2, 1/2 N(-3,1) + 1/2 N(3,1), Exp(1).
MatrixXd draw(Source source, Eigen::Index n, std::uint64_t seed);
// Analytic mean and covariance of the source.
std::pair<VectorXd, MatrixXd> source_moments(Source source);

struct VerifyConfig {
  Eigen::Index samples = 100000;
  int max_iter = 5000;
  double grad_tol = 1e-7;
  double tolerance = 0.02;  // relative
  std::uint64_t seed = 0;
};

struct VerifyReport {
  Source source = Source::kUniformSquare;
  VectorXd nu, sample_mean, analytic_mean;
  MatrixXd Lambda, sample_cov, analytic_cov;
  // Mean errors are scaled by the source's spread, sqrt(tr(cov)/d), so that
  // zero-mean sources are handled; covariance errors use the Frobenius norm.
  double mean_error = 0.0;
  double cov_error = 0.0;
  double analytic_mean_error = 0.0;
  double analytic_cov_error = 0.0;
  int iterations = 0;
  bool converged = false;
  bool passed = false;
  std::vector<double> trajectory;  // objective per iteration
};

// Minimizes the empirical cross-entropy over (nu, L) by gradient descent with
// Armijo backtracking. Throws NonConvergence when the budget runs out; the
// exception message carries the tail of the trajectory.
VerifyReport verify_theorem1(Source source, const VerifyConfig& config);

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
  bool passed = false;
};
// Finite-difference checks of the precision-form gradient and of the
// empirical cross-entropy gradients, on seeded random instances.
std::vector<GradCheck> gradient_checks(std::uint64_t seed, double tolerance = 1e-5);

nlohmann::json to_json(const VerifyReport& r);

// ---------------------------------------------------------------------------
// Clustering quality

// Mean silhouette with Euclidean distance. Labels are arbitrary integers.
// Needs >= 2 classes, each with >= 2 points (DegenerateClass).
double silhouette(const MatrixXd& Z, const std::vector<int>& labels);

// Fraction of points whose most responsible component maps to their class.
// Labels are 1..C; component_to_class is 0-based.
double cluster_purity(const MatrixXd& R, const std::vector<int>& labels,
                      const std::vector<int>& component_to_class);

// ---------------------------------------------------------------------------
// Statistics

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-tailed
};
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct EffectSize {
  double d = 0.0;  // mean(a-b)/sd(a-b); +-inf when flagged
  bool zero_variance = false;
};
EffectSize cohens_d(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Downstream regression

struct RegressionConfig {
  std::vector<std::uint64_t> seeds;  // S >= 2
  double train_fraction = 0.8;
  double ridge_lambda = 1.0;
  int knn = 5;
};

// Fitted on the training rows and evaluated on the test rows.
VectorXd ridge_predict(const MatrixXd& Xtrain, const VectorXd& ytrain, const MatrixXd& Xtest,
                       double lambda);
VectorXd knn_predict(const MatrixXd& Xtrain, const VectorXd& ytrain, const MatrixXd& Xtest, int k);
double mean_absolute_error(const VectorXd& y, const VectorXd& pred);
double r_squared(const VectorXd& y, const VectorXd& pred);

struct ModelComparison {
  std::string model;
  std::vector<double> mae_base, mae_contrastive, r2_base, r2_contrastive;
  double mean_mae_base = 0.0;
  double mean_mae_contrastive = 0.0;
  double delta_r2 = 0.0;  // mean over seeds of r2_contrastive - r2_base
  TTest test;             // paired on (mae_base, mae_contrastive)
  EffectSize effect;      // on mae_base - mae_contrastive
};

struct RegressionStudyResult {
  std::vector<ModelComparison> models;  // ridge, knn
};

// Throws InsufficientData (< 10 rows), LengthMismatch, ConfigError (< 2 seeds).
RegressionStudyResult regression_study(const MatrixXd& base, const MatrixXd& contrastive,
                                       const VectorXd& targets, const RegressionConfig& config);

nlohmann::json to_json(const RegressionStudyResult& r);

}  // namespace vectorplus::eval
