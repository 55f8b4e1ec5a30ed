#include "vectorplus/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vectorplus/errors.hpp"
#include "vectorplus/json_io.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::latent {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

VectorXd row_logsumexp(const MatrixXd& W) {
  VectorXd out(W.rows());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double m = W.row(i).maxCoeff();
    out(i) = m == kNegInf ? kNegInf : m + std::log((W.row(i).array() - m).exp().sum());
  }
  return out;
}

MatrixXd responsibilities_from(const MatrixXd& W, const VectorXd& lse) {
  MatrixXd R = (W.colwise() - lse).array().exp().matrix();
  for (Eigen::Index i = 0; i < R.rows(); ++i) R.row(i) /= R.row(i).sum();
  return R;
}

MatrixXd global_covariance(const MatrixXd& Z) {
  const Eigen::RowVectorXd mean = Z.colwise().mean();
  const MatrixXd centered = Z.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(Z.rows());
}

void check_data(const MatrixXd& Z) {
  if (Z.rows() == 0 || Z.cols() == 0) throw InsufficientData("empty embedding matrix");
  if (!Z.allFinite()) throw DegenerateData("embedding matrix has non-finite entries");
}

}  // namespace

void GmmParams::validate() const {
  const auto k = K();
  if (k == 0) throw DimensionMismatch("mixture has no components");
  if (means.rows() != k || static_cast<Eigen::Index>(covariances.size()) != k)
    throw DimensionMismatch("mixture weights, means and covariances disagree on K");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
    throw DimensionMismatch("mixture weights are not on the simplex");
  for (const auto& S : covariances) {
    if (S.rows() != d() || S.cols() != d()) throw DimensionMismatch("covariance shape mismatch");
    if ((S - S.transpose()).norm() > 1e-12 * std::max(1.0, S.norm()))
      throw NotPD("covariance is not symmetric");
    if (Eigen::LLT<MatrixXd>(S).info() != Eigen::Success)
      throw NotPD("covariance is not positive definite");
  }
}

MatrixXd weighted_log_densities(const GmmParams& params, const MatrixXd& Z) {
  if (Z.cols() != params.d())
    throw DimensionMismatch("points have dimension " + std::to_string(Z.cols()) +
                            ", mixture has " + std::to_string(params.d()));
  const double d = static_cast<double>(params.d());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  MatrixXd W(Z.rows(), params.K());
  for (Eigen::Index k = 0; k < params.K(); ++k) {
    const Eigen::LLT<MatrixXd> llt(params.covariances[static_cast<std::size_t>(k)]);
    if (llt.info() != Eigen::Success)
      throw SingularCovariance("covariance of component " + std::to_string(k) +
                               " is not positive definite");
    const MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const MatrixXd diff = (Z.rowwise() - params.means.row(k)).transpose();
    const MatrixXd y = llt.matrixL().solve(diff);
    const VectorXd maha = y.colwise().squaredNorm().transpose();
    const double log_pi = params.weights(k) > 0.0 ? std::log(params.weights(k)) : kNegInf;
    W.col(k) = (log_pi - 0.5 * (d * log_2pi + logdet + maha.array())).matrix();
  }
  return W;
}

double log_density(const GmmParams& params, const VectorXd& z) {
  return row_logsumexp(weighted_log_densities(params, z.transpose()))(0);
}

double log_likelihood(const GmmParams& params, const MatrixXd& Z) {
  return row_logsumexp(weighted_log_densities(params, Z)).sum();
}

MatrixXd e_step(const GmmParams& params, const MatrixXd& Z) {
  const MatrixXd W = weighted_log_densities(params, Z);
  return responsibilities_from(W, row_logsumexp(W));
}

GmmParams m_step(const MatrixXd& Z, const MatrixXd& R, double lambda) {
  if (R.rows() != Z.rows()) throw DimensionMismatch("responsibilities and points differ in count");
  const Eigen::Index K = R.cols(), d = Z.cols();
  const VectorXd N = R.colwise().sum().transpose();
  GmmParams p;
  p.weights = N / static_cast<double>(Z.rows());
  p.means.resize(K, d);
  p.covariances.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(N(k) > 0.0)) throw EmptyComponent("component " + std::to_string(k) + " has no mass");
    p.means.row(k) = R.col(k).transpose() * Z / N(k);
    const MatrixXd centered = (Z.rowwise() - p.means.row(k)).array().colwise() *
                              R.col(k).array().sqrt();
    MatrixXd S = centered.transpose() * centered / N(k);
    S = 0.5 * (S + S.transpose());
    S.diagonal().array() += lambda;
    p.covariances[static_cast<std::size_t>(k)] = std::move(S);
  }
  return p;
}

double regularization(const MatrixXd& Z, double scale) {
  const double tr = global_covariance(Z).trace();
  return tr > 0.0 ? scale * tr / static_cast<double>(Z.cols()) : scale;
}

MatrixXd kmeans_pp(const MatrixXd& Z, Eigen::Index K, std::mt19937_64& rng) {
  const Eigen::Index n = Z.rows();
  MatrixXd centers(K, Z.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  centers.row(0) = Z.row(pick(rng));
  VectorXd d2 = (Z.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < K; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = Z.row(chosen);
    d2 = d2.cwiseMin((Z.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

namespace {

// Covariance part of the expected complete-data log-likelihood of one
// component: -N/2 log|S| - 1/2 tr(S^-1 scatter).
double covariance_score(const MatrixXd& S, const MatrixXd& scatter, double N) {
  const Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * N * logdet - 0.5 * llt.solve(scatter).trace();
}

}  // namespace

FitResult fit(const MatrixXd& Z, const FitConfig& config) {
  check_data(Z);
  const Eigen::Index K = config.K, n = Z.rows();
  if (K < 1) throw ConfigError("mixture needs at least one component");
  if (n < K) throw InsufficientData("need at least K = " + std::to_string(K) + " points, got " +
                                    std::to_string(n));
  FitResult result;
  result.lambda = regularization(Z, config.reg_scale);
  std::mt19937_64 rng(config.seed);

  MatrixXd base_cov = global_covariance(Z);
  base_cov.diagonal().array() += result.lambda;
  GmmParams& params = result.params;
  params.weights = VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  params.means = kmeans_pp(Z, K, rng);
  params.covariances.assign(static_cast<std::size_t>(K), base_cov);

  int reseeds = 0;
  for (;;) {
    const MatrixXd W = weighted_log_densities(params, Z);
    const VectorXd lse = row_logsumexp(W);
    const double ll = lse.sum();
    if (!std::isfinite(ll)) throw NonFiniteLoss("mixture log-likelihood is not finite");
    // A re-seed resets the reference point for the convergence test.
    const bool has_prev = !result.trace.empty() &&
                          (result.reseed_iterations.empty() ||
                           result.reseed_iterations.back() != static_cast<int>(result.trace.size()));
    const double prev = has_prev ? result.trace.back() : 0.0;
    result.trace.push_back(ll);
    if (has_prev && std::abs(ll - prev) <= config.tol * std::abs(prev)) {
      result.converged = true;
      break;
    }
    if (result.iterations >= config.max_iter) break;

    const MatrixXd R = responsibilities_from(W, lse);
    const VectorXd N = R.colwise().sum().transpose();
    bool reseeded = false;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (N(k) >= config.empty_threshold) continue;
      if (reseeds >= config.max_reseeds)
        throw EmptyComponent("component " + std::to_string(k) + " stayed empty after " +
                             std::to_string(reseeds) + " re-seeds");
      // Point least claimed by any component.
      Eigen::Index worst = 0;
      R.rowwise().maxCoeff().minCoeff(&worst);
      params.means.row(k) = Z.row(worst);
      params.covariances[static_cast<std::size_t>(k)] = base_cov;
      params.weights(k) = 1.0 / static_cast<double>(K);
      params.weights /= params.weights.sum();
      ++reseeds;
      reseeded = true;
      log::info("re-seeded empty mixture component " + std::to_string(k));
    }
    if (reseeded) {
      result.reseed_iterations.push_back(static_cast<int>(result.trace.size()));
      continue;
    }
    GmmParams next = m_step(Z, R, result.lambda);
    // S/N + lambda*I does not maximize the expected complete-data
    // log-likelihood, so it can lower the likelihood for a collapsing
    // component. Keeping the previous covariance whenever it scores higher
    // makes this a generalized EM step, which is monotone.
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      MatrixXd scatter = next.covariances[ks];
      scatter.diagonal().array() -= result.lambda;
      scatter *= N(k);
      if (covariance_score(params.covariances[ks], scatter, N(k)) >
          covariance_score(next.covariances[ks], scatter, N(k)))
        next.covariances[ks] = params.covariances[ks];
    }
    params = std::move(next);
    ++result.iterations;
  }
  return result;
}

namespace {

MatrixXd draw(const VectorXd& mean, const MatrixXd& cov, Eigen::Index count, std::mt19937_64& rng) {
  const Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("covariance has no Cholesky factor");
  std::normal_distribution<double> normal;
  MatrixXd xi(count, mean.size());
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = 0; j < mean.size(); ++j) xi(i, j) = normal(rng);
  const MatrixXd L = llt.matrixL();
  return (xi * L.transpose()).rowwise() + mean.transpose();
}

}  // namespace

MatrixXd sample(const GmmParams& params, Eigen::Index k, Eigen::Index count, std::uint64_t seed) {
  if (k < 0 || k >= params.K()) throw DimensionMismatch("component index out of range");
  if (count < 0) throw ConfigError("sample count must be non-negative");
  std::mt19937_64 rng(seed);
  return draw(params.means.row(k).transpose(), params.covariances[static_cast<std::size_t>(k)],
              count, rng);
}

MatrixXd sample_mixture(const GmmParams& params, Eigen::Index count, std::uint64_t seed) {
  if (count < 0) throw ConfigError("sample count must be non-negative");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<Eigen::Index> component(params.weights.data(),
                                                     params.weights.data() + params.K());
  MatrixXd out(count, params.d());
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto k = component(rng);
    out.row(i) = draw(params.means.row(k).transpose(),
                      params.covariances[static_cast<std::size_t>(k)], 1, rng);
  }
  return out;
}

MatrixXd affinity(const MatrixXd& R, const std::vector<int>& labels, Eigen::Index num_classes) {
  if (static_cast<std::size_t>(R.rows()) != labels.size())
    throw DimensionMismatch("responsibilities and labels differ in length");
  MatrixXd phi = MatrixXd::Zero(R.cols(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > num_classes)
      throw UnknownLabel("label " + std::to_string(labels[i]) + " outside 1.." +
                         std::to_string(num_classes));
    phi.col(labels[i] - 1) += R.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return phi;
}

namespace {

// Minimum-cost assignment on a square cost matrix (shortest augmenting path
// with potentials). Returns column per row.
std::vector<int> hungarian_min(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

double best_total(const MatrixXd& phi, const std::vector<int>& rows, const std::vector<int>& cols) {
  if (rows.empty()) return 0.0;
  MatrixXd sub(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b)
      sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -phi(rows[a], cols[b]);
  const auto match = hungarian_min(sub);
  double total = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) total += phi(rows[a], cols[static_cast<std::size_t>(match[a])]);
  return total;
}

}  // namespace

std::vector<int> assign(const MatrixXd& phi) {
  if (phi.rows() != phi.cols())
    throw NonSquare("affinity matrix is " + std::to_string(phi.rows()) + "x" +
                    std::to_string(phi.cols()) + "; components must equal classes");
  if (!phi.allFinite()) throw DegenerateData("affinity matrix has non-finite entries");
  const int n = static_cast<int>(phi.rows());
  std::vector<int> rows(n), cols(n);
  for (int i = 0; i < n; ++i) rows[i] = cols[i] = i;
  const double optimum = best_total(phi, rows, cols);
  const double tol = 1e-9 * std::max(1.0, std::abs(optimum));
  // Fix rows in order, each to the smallest column that still admits an
  // optimal completion.
  std::vector<int> result(n, -1);
  double fixed = 0.0;
  for (int r = 0; r < n; ++r) {
    std::vector<int> rest_rows(rows.begin() + r + 1, rows.end());
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      const int c = cols[ci];
      std::vector<int> rest_cols(cols);
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
      const double total = fixed + phi(r, c) + best_total(phi, rest_rows, rest_cols);
      if (total >= optimum - tol || ci + 1 == cols.size()) {
        result[r] = c;
        fixed += phi(r, c);
        cols = std::move(rest_cols);
        break;
      }
    }
  }
  return result;
}

Alignment align(const MatrixXd& R, const std::vector<int>& labels, Eigen::Index num_classes) {
  Alignment a;
  a.affinity = affinity(R, labels, num_classes);
  a.component_to_class = assign(a.affinity);
  a.class_to_component.assign(a.component_to_class.size(), -1);
  for (std::size_t k = 0; k < a.component_to_class.size(); ++k) {
    a.class_to_component[static_cast<std::size_t>(a.component_to_class[k])] = static_cast<int>(k);
    a.total += a.affinity(static_cast<Eigen::Index>(k), a.component_to_class[k]);
  }
  return a;
}

std::vector<FitResult> fit_per_class(const MatrixXd& Z, const std::vector<int>& labels,
                                     Eigen::Index num_classes, const FitConfig& config) {
  if (static_cast<std::size_t>(Z.rows()) != labels.size())
    throw DimensionMismatch("embeddings and labels differ in length");
  std::vector<FitResult> out;
  for (Eigen::Index c = 1; c <= num_classes; ++c) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
    if (static_cast<Eigen::Index>(rows.size()) < config.K)
      throw DegenerateClass("class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                            " points, fewer than the " + std::to_string(config.K) + " components");
    FitConfig c_config = config;
    c_config.seed = config.seed + static_cast<std::uint64_t>(c);
    out.push_back(fit(Z(rows, Eigen::all), c_config));
  }
  return out;
}

nlohmann::json to_json(const GmmParams& params) {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& S : params.covariances) covs.push_back(json_io::from_matrix(S));
  return {{"K", params.K()},
          {"d", params.d()},
          {"weights", json_io::from_vector(params.weights)},
          {"means", json_io::from_matrix(params.means)},
          {"covariances", std::move(covs)}};
}

GmmParams gmm_from_json(const nlohmann::json& j) {
  GmmParams p;
  try {
    p.weights = json_io::to_vector(j.at("weights"));
    p.means = json_io::to_matrix(j.at("means"));
    for (const auto& c : j.at("covariances")) p.covariances.push_back(json_io::to_matrix(c));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad mixture record: ") + e.what());
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw SchemaError(std::string("invalid mixture parameters: ") + e.what());
  }
  return p;
}

}  // namespace vectorplus::latent
