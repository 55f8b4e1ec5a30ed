#include "vectorplus/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "vectorplus/chem.hpp"
#include "vectorplus/data.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/json_io.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::eval {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

double safe_ratio(int num, int den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

}  // namespace

Histogram histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  if (values.empty()) return h;
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + b * width);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<int>((v - lo) / width);
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

MetricsSummary metrics(const std::vector<std::string>& generated,
                       const std::vector<std::string>& training, int bins) {
  if (training.empty()) throw InsufficientData("training set is empty");
  std::set<std::string> train_canonical;
  std::vector<chem::Fingerprint> train_fps;
  for (const auto& s : training) {
    if (!chem::is_valid(s)) continue;
    const auto mol = chem::parse_smiles(s);
    train_canonical.insert(chem::canonical(mol));
    train_fps.push_back(chem::fingerprint(mol));
  }

  MetricsSummary m;
  m.total = static_cast<int>(generated.size());
  std::set<std::string> unique;
  std::vector<std::string> unique_order;
  for (const auto& s : generated) {
    if (s.empty()) continue;
    const auto canon = chem::canonical_smiles(s);
    if (!canon) continue;
    ++m.valid;
    if (unique.insert(*canon).second) unique_order.push_back(*canon);
  }
  m.unique = static_cast<int>(unique_order.size());

  std::vector<double> mw, logp;
  double sum_max = 0.0;
  for (const auto& canon : unique_order) {
    if (!train_canonical.count(canon)) ++m.novel;
    const auto mol = chem::parse_smiles(canon);
    const auto fp = chem::fingerprint(mol);
    double best = 0.0;
    for (const auto& t : train_fps) best = std::max(best, chem::tanimoto(fp, t));
    sum_max += best;
    m.max_tanimoto = std::max(m.max_tanimoto, best);
    const auto p = chem::properties(mol);
    mw.push_back(p.mw);
    logp.push_back(p.logp);
  }
  m.validity = safe_ratio(m.valid, m.total);
  m.uniqueness = safe_ratio(m.unique, m.valid);
  m.novelty = safe_ratio(m.novel, m.unique);
  m.mean_max_tanimoto = m.unique == 0 ? 0.0 : sum_max / m.unique;
  m.mw = histogram(mw, bins);
  m.logp = histogram(logp, bins);
  return m;
}

namespace {

nlohmann::json to_json(const Histogram& h) { return {{"edges", h.edges}, {"counts", h.counts}}; }

}  // namespace

nlohmann::json to_json(const MetricsSummary& m) {
  return {{"total", m.total},
          {"valid", m.valid},
          {"unique", m.unique},
          {"novel", m.novel},
          {"validity", m.validity},
          {"uniqueness", m.uniqueness},
          {"novelty", m.novelty},
          {"mean_max_tanimoto", m.mean_max_tanimoto},
          {"max_tanimoto", m.max_tanimoto},
          {"histograms", {{"mw", to_json(m.mw)}, {"logp", to_json(m.logp)}}}};
}

void write_histograms_csv(const MetricsSummary& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "property,bin_lo,bin_hi,count\n";
  auto emit = [&](const char* name, const Histogram& h) {
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      out << name << ',' << data::format_double(h.edges[b]) << ',' << data::format_double(h.edges[b + 1])
          << ',' << h.counts[b] << '\n';
  };
  emit("mw", m.mw);
  emit("logp", m.logp);
}

// ---------------------------------------------------------------------------

double gaussian_cross_entropy(const VectorXd& mu, const MatrixXd& Sigma, const VectorXd& nu,
                              const MatrixXd& Lambda) {
  const auto d = mu.size();
  if (Sigma.rows() != d || Sigma.cols() != d || nu.size() != d || Lambda.rows() != d || Lambda.cols() != d)
    throw DimensionMismatch("cross-entropy arguments disagree in dimension");
  Eigen::LLT<MatrixXd> llt_sigma(Sigma);
  if (llt_sigma.info() != Eigen::Success) throw NotPD("Sigma is not positive definite");
  Eigen::LLT<MatrixXd> llt(Lambda);
  if (llt.info() != Eigen::Success) throw NotPD("Lambda is not positive definite");
  const MatrixXd LinvSigma = llt.solve(Sigma);
  const VectorXd diff = mu - nu;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * LinvSigma.trace() + 0.5 * diff.dot(llt.solve(diff)) + 0.5 * logdet +
         0.5 * static_cast<double>(d) * kLog2Pi;
}

EmpiricalCe empirical_cross_entropy(const MatrixXd& X, const VectorXd& nu, const MatrixXd& L) {
  const auto d = X.cols();
  const auto n = X.rows();
  if (nu.size() != d || L.rows() != d || L.cols() != d) throw DimensionMismatch("empirical CE shapes");
  if (n == 0) throw InsufficientData("no samples");
  const auto Ltri = L.triangularView<Eigen::Lower>();
  const MatrixXd R = X.rowwise() - nu.transpose();
  const double quad = Ltri.solve(R.transpose()).squaredNorm();
  const VectorXd mean_r = R.colwise().mean().transpose();
  const MatrixXd C = R.transpose() * R / static_cast<double>(n);

  EmpiricalCe out;
  double logdet = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) logdet += 2.0 * std::log(std::abs(L(j, j)));
  out.value = 0.5 * static_cast<double>(d) * kLog2Pi + 0.5 * logdet + 0.5 * quad / static_cast<double>(n);

  const MatrixXd Lfull = Ltri.toDenseMatrix();
  const MatrixXd Lambda = Lfull * Lfull.transpose();
  const MatrixXd P = Lambda.inverse();
  out.grad_nu = -P * mean_r;
  const MatrixXd G = 0.5 * P - 0.5 * P * C * P;
  out.grad_L = (2.0 * G * Lfull).triangularView<Eigen::Lower>();
  return out;
}

double precision_objective(const MatrixXd& A, const MatrixXd& Sigma) {
  const double det = A.partialPivLu().determinant();
  if (!(det > 0.0)) throw NotPD("precision matrix has non-positive determinant");
  return 0.5 * (A * Sigma).trace() - 0.5 * std::log(det);
}

MatrixXd precision_objective_grad(const MatrixXd& A, const MatrixXd& Sigma) {
  return 0.5 * Sigma - 0.5 * A.inverse();
}

std::string to_string(Source source) {
  switch (source) {
    case Source::kUniformSquare: return "uniform_square";
    case Source::kTwoModeMixture: return "two_mode_mixture";
    case Source::kExponential: return "exponential";
  }
  return "unknown";
}

std::vector<Source> all_sources() {
  return {Source::kUniformSquare, Source::kTwoModeMixture, Source::kExponential};
}

MatrixXd draw(Source source, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (source) {
    case Source::kUniformSquare: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      MatrixXd X(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = u(rng);
        X(i, 1) = u(rng);
      }
      return X;
    }
    case Source::kTwoModeMixture: {
      std::bernoulli_distribution coin(0.5);
      std::normal_distribution<double> normal;
      MatrixXd X(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double centre = coin(rng) ? 3.0 : -3.0;
        X(i, 0) = centre + normal(rng);
      }
      return X;
    }
    case Source::kExponential: {
      std::exponential_distribution<double> e(1.0);
      MatrixXd X(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) X(i, 0) = e(rng);
      return X;
    }
  }
  throw ConfigError("unknown source");
}

std::pair<VectorXd, MatrixXd> source_moments(Source source) {
  switch (source) {
    case Source::kUniformSquare:
      return {VectorXd::Constant(2, 0.5), MatrixXd::Identity(2, 2) / 12.0};
    case Source::kTwoModeMixture:
      return {VectorXd::Zero(1), MatrixXd::Constant(1, 1, 10.0)};
    case Source::kExponential:
      return {VectorXd::Ones(1), MatrixXd::Ones(1, 1)};
  }
  throw ConfigError("unknown source");
}

namespace {

double mean_error(const VectorXd& got, const VectorXd& ref, const MatrixXd& cov) {
  const double spread = std::sqrt(cov.trace() / static_cast<double>(cov.rows()));
  return (got - ref).norm() / std::max(ref.norm(), spread);
}

double cov_error(const MatrixXd& got, const MatrixXd& ref) { return (got - ref).norm() / ref.norm(); }

}  // namespace

VerifyReport verify_theorem1(Source source, const VerifyConfig& config) {
  if (config.samples < 2) throw ConfigError("need at least two samples");
  const MatrixXd X = draw(source, config.samples, config.seed);
  const auto d = X.cols();

  VerifyReport rep;
  rep.source = source;
  rep.sample_mean = X.colwise().mean().transpose();
  const MatrixXd centred = X.rowwise() - rep.sample_mean.transpose();
  rep.sample_cov = centred.transpose() * centred / static_cast<double>(X.rows());
  std::tie(rep.analytic_mean, rep.analytic_cov) = source_moments(source);

  VectorXd nu = VectorXd::Zero(d);
  MatrixXd L = MatrixXd::Identity(d, d);
  auto cur = empirical_cross_entropy(X, nu, L);
  double step = 1.0;
  bool stalled = false;
  for (int it = 0; it < config.max_iter; ++it) {
    rep.trajectory.push_back(cur.value);
    const double g2 = cur.grad_nu.squaredNorm() + cur.grad_L.squaredNorm();
    if (std::sqrt(g2) <= config.grad_tol) {
      rep.converged = true;
      break;
    }
    // Armijo backtracking along the negative gradient.
    step = std::min(step * 2.0, 1e3);
    bool moved = false;
    while (step > 1e-20) {
      const VectorXd nu_new = nu - step * cur.grad_nu;
      const MatrixXd L_new = L - step * cur.grad_L;
      bool finite_factor = true;
      for (Eigen::Index j = 0; j < d; ++j) finite_factor &= L_new(j, j) != 0.0;
      if (finite_factor) {
        auto next = empirical_cross_entropy(X, nu_new, L_new);
        if (std::isfinite(next.value) && next.value < cur.value &&
            next.value <= cur.value - 1e-4 * step * g2) {
          nu = nu_new;
          L = L_new;
          cur = std::move(next);
          moved = true;
          break;
        }
      }
      step *= 0.5;
    }
    ++rep.iterations;
    if (!moved) {
      // No representable decrease left; accept if the gradient is already tiny.
      stalled = true;
      rep.converged = std::sqrt(g2) <= 1e3 * config.grad_tol;
      break;
    }
  }
  if (!rep.converged) {
    std::ostringstream msg;
    msg << "cross-entropy minimization for " << to_string(source) << " did not converge after "
        << rep.iterations << " iterations" << (stalled ? " (line search stalled)" : "") << "; objective tail:";
    const std::size_t from = rep.trajectory.size() > 10 ? rep.trajectory.size() - 10 : 0;
    for (std::size_t i = from; i < rep.trajectory.size(); ++i) msg << ' ' << data::format_double(rep.trajectory[i]);
    throw NonConvergence(msg.str());
  }

  const MatrixXd Lfull = L.triangularView<Eigen::Lower>().toDenseMatrix();
  rep.nu = nu;
  rep.Lambda = Lfull * Lfull.transpose();
  rep.mean_error = mean_error(rep.nu, rep.sample_mean, rep.sample_cov);
  rep.cov_error = cov_error(rep.Lambda, rep.sample_cov);
  rep.analytic_mean_error = mean_error(rep.nu, rep.analytic_mean, rep.analytic_cov);
  rep.analytic_cov_error = cov_error(rep.Lambda, rep.analytic_cov);
  rep.passed = rep.mean_error <= config.tolerance && rep.cov_error <= config.tolerance &&
               rep.analytic_mean_error <= config.tolerance && rep.analytic_cov_error <= config.tolerance;
  return rep;
}

namespace {

MatrixXd random_spd(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  MatrixXd B(d, d);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = normal(rng);
  return B * B.transpose() + 0.5 * MatrixXd::Identity(d, d);
}

double rel_error(const MatrixXd& numeric, const MatrixXd& analytic) {
  return (numeric - analytic).norm() / std::max(analytic.norm(), 1e-12);
}

}  // namespace

std::vector<GradCheck> gradient_checks(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheck> out;
  const double h = 1e-6;

  for (Eigen::Index d : {1, 2, 3}) {
    const MatrixXd A = random_spd(d, rng);
    const MatrixXd Sigma = random_spd(d, rng);
    MatrixXd numeric(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) {
        MatrixXd up = A, down = A;
        up(i, j) += h;
        down(i, j) -= h;
        numeric(i, j) = (precision_objective(up, Sigma) - precision_objective(down, Sigma)) / (2 * h);
      }
    GradCheck c{"precision_objective d=" + std::to_string(d), rel_error(numeric, precision_objective_grad(A, Sigma))};
    c.passed = c.rel_error < tolerance;
    out.push_back(c);
  }

  std::normal_distribution<double> normal;
  for (Eigen::Index d : {1, 2}) {
    MatrixXd X(200, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
    VectorXd nu(d);
    for (Eigen::Index i = 0; i < d; ++i) nu(i) = normal(rng);
    MatrixXd L = random_spd(d, rng).llt().matrixL();
    const auto ana = empirical_cross_entropy(X, nu, L);

    VectorXd num_nu(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      VectorXd up = nu, down = nu;
      up(i) += h;
      down(i) -= h;
      num_nu(i) = (empirical_cross_entropy(X, up, L).value - empirical_cross_entropy(X, down, L).value) / (2 * h);
    }
    MatrixXd num_L = MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        MatrixXd up = L, down = L;
        up(i, j) += h;
        down(i, j) -= h;
        num_L(i, j) = (empirical_cross_entropy(X, nu, up).value - empirical_cross_entropy(X, nu, down).value) / (2 * h);
      }
    GradCheck cn{"empirical_ce nu d=" + std::to_string(d), rel_error(num_nu, ana.grad_nu)};
    cn.passed = cn.rel_error < tolerance;
    GradCheck cl{"empirical_ce L d=" + std::to_string(d), rel_error(num_L, ana.grad_L)};
    cl.passed = cl.rel_error < tolerance;
    out.push_back(cn);
    out.push_back(cl);
  }
  return out;
}

nlohmann::json to_json(const VerifyReport& r) {
  return {{"source", to_string(r.source)},
          {"nu", json_io::from_vector(r.nu)},
          {"Lambda", json_io::from_matrix(r.Lambda)},
          {"sample_mean", json_io::from_vector(r.sample_mean)},
          {"sample_cov", json_io::from_matrix(r.sample_cov)},
          {"analytic_mean", json_io::from_vector(r.analytic_mean)},
          {"analytic_cov", json_io::from_matrix(r.analytic_cov)},
          {"mean_error", r.mean_error},
          {"cov_error", r.cov_error},
          {"analytic_mean_error", r.analytic_mean_error},
          {"analytic_cov_error", r.analytic_cov_error},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"passed", r.passed}};
}

// ---------------------------------------------------------------------------

double silhouette(const MatrixXd& Z, const std::vector<int>& labels) {
  const auto n = Z.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw LengthMismatch("labels and embeddings differ in length");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) groups[labels[static_cast<std::size_t>(i)]].push_back(i);
  if (groups.size() < 2) throw DegenerateClass("silhouette needs at least two classes");
  for (const auto& [label, members] : groups)
    if (members.size() < 2) throw DegenerateClass("class " + std::to_string(label) + " has fewer than two points");

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : groups) {
      double sum = 0.0;
      for (auto j : members) sum += (Z.row(i) - Z.row(j)).norm();
      if (label == own)
        a = sum / static_cast<double>(members.size() - 1);
      else
        b = std::min(b, sum / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    total += denom == 0.0 ? 0.0 : (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double cluster_purity(const MatrixXd& R, const std::vector<int>& labels,
                      const std::vector<int>& component_to_class) {
  if (static_cast<Eigen::Index>(labels.size()) != R.rows()) throw LengthMismatch("labels and responsibilities differ");
  if (static_cast<Eigen::Index>(component_to_class.size()) != R.cols())
    throw DimensionMismatch("alignment size differs from component count");
  if (R.rows() == 0) return 0.0;
  int hits = 0;
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    Eigen::Index k = 0;
    R.row(i).maxCoeff(&k);
    hits += component_to_class[static_cast<std::size_t>(k)] + 1 == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(R.rows());
}

// ---------------------------------------------------------------------------

namespace {

struct DiffStats {
  double mean = 0.0;
  double sd = 0.0;
  bool zero_variance = false;
  std::size_t n = 0;
};

DiffStats paired_differences(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LengthMismatch("paired samples differ in length");
  if (a.size() < 2) throw InsufficientData("paired statistics need at least two pairs");
  DiffStats s;
  s.n = a.size();
  std::vector<double> d(a.size());
  double max_abs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    max_abs = std::max(max_abs, std::abs(d[i]));
  }
  s.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : d) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  // Equal differences can leave rounding residue in the sd.
  s.zero_variance = s.sd <= 1e-14 * max_abs || max_abs == 0.0;
  if (max_abs == 0.0) s.mean = 0.0;
  return s;
}

}  // namespace

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  const auto s = paired_differences(a, b);
  if (s.zero_variance) {
    if (s.mean == 0.0) return {0.0, 1.0};
    return {std::copysign(std::numeric_limits<double>::infinity(), s.mean), 0.0};
  }
  TTest out;
  out.t = s.mean / (s.sd / std::sqrt(static_cast<double>(s.n)));
  const boost::math::students_t dist(static_cast<double>(s.n - 1));
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  return out;
}

EffectSize cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  const auto s = paired_differences(a, b);
  if (s.zero_variance) {
    if (s.mean == 0.0) return {0.0, false};
    return {std::copysign(std::numeric_limits<double>::infinity(), s.mean), true};
  }
  return {s.mean / s.sd, false};
}

// ---------------------------------------------------------------------------

VectorXd ridge_predict(const MatrixXd& Xtrain, const VectorXd& ytrain, const MatrixXd& Xtest,
                       double lambda) {
  if (Xtrain.rows() != ytrain.size()) throw LengthMismatch("ridge training rows differ from targets");
  if (Xtrain.cols() != Xtest.cols()) throw DimensionMismatch("ridge train/test widths differ");
  const VectorXd x_mean = Xtrain.colwise().mean().transpose();
  const double y_mean = ytrain.mean();
  const MatrixXd Xc = Xtrain.rowwise() - x_mean.transpose();
  const VectorXd yc = ytrain.array() - y_mean;
  VectorXd w;
  if (Xc.cols() <= Xc.rows()) {
    MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += lambda;
    w = A.ldlt().solve(Xc.transpose() * yc);
  } else {
    // Dual form: cheaper when features outnumber rows.
    MatrixXd K = Xc * Xc.transpose();
    K.diagonal().array() += lambda;
    w = Xc.transpose() * K.ldlt().solve(yc);
  }
  return ((Xtest.rowwise() - x_mean.transpose()) * w).array() + y_mean;
}

VectorXd knn_predict(const MatrixXd& Xtrain, const VectorXd& ytrain, const MatrixXd& Xtest, int k) {
  if (k < 1 || Xtrain.rows() < k) throw InsufficientNeighbors("k-NN regression needs at least k training rows");
  if (Xtrain.cols() != Xtest.cols()) throw DimensionMismatch("k-NN train/test widths differ");
  VectorXd pred(Xtest.rows());
  std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(Xtrain.rows()));
  for (Eigen::Index i = 0; i < Xtest.rows(); ++i) {
    for (Eigen::Index j = 0; j < Xtrain.rows(); ++j)
      d[static_cast<std::size_t>(j)] = {(Xtrain.row(j) - Xtest.row(i)).squaredNorm(), j};
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    double sum = 0.0;
    for (int m = 0; m < k; ++m) sum += ytrain(d[static_cast<std::size_t>(m)].second);
    pred(i) = sum / k;
  }
  return pred;
}

double mean_absolute_error(const VectorXd& y, const VectorXd& pred) {
  if (y.size() != pred.size()) throw LengthMismatch("prediction length differs");
  return (y - pred).cwiseAbs().mean();
}

double r_squared(const VectorXd& y, const VectorXd& pred) {
  if (y.size() != pred.size()) throw LengthMismatch("prediction length differs");
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - (y - pred).squaredNorm() / ss_tot;
}

namespace {

MatrixXd take_rows(const MatrixXd& X, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

VectorXd take(const VectorXd& v, const std::vector<Eigen::Index>& rows) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

RegressionStudyResult regression_study(const MatrixXd& base, const MatrixXd& contrastive,
                                       const VectorXd& targets, const RegressionConfig& config) {
  const auto n = targets.size();
  if (base.rows() != n || contrastive.rows() != n) throw LengthMismatch("representations and targets differ in rows");
  if (n < 10) throw InsufficientData("regression study needs at least 10 rows");
  if (config.seeds.size() < 2) throw ConfigError("regression study needs at least two seeds");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
    throw ConfigError("train fraction must be in (0, 1)");
  const auto n_train = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(config.train_fraction * static_cast<double>(n))), 1, n - 1);
  if (n_train < config.knn) throw ConfigError("training split smaller than k");

  RegressionStudyResult result;
  result.models.resize(2);
  result.models[0].model = "ridge";
  result.models[1].model = "knn";
  for (auto seed : config.seeds) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::vector<Eigen::Index> train(perm.begin(), perm.begin() + n_train);
    const std::vector<Eigen::Index> test(perm.begin() + n_train, perm.end());
    const VectorXd ytr = take(targets, train), yte = take(targets, test);
    for (int which = 0; which < 2; ++which) {
      const MatrixXd& X = which == 0 ? base : contrastive;
      const MatrixXd Xtr = take_rows(X, train), Xte = take_rows(X, test);
      const VectorXd ridge = ridge_predict(Xtr, ytr, Xte, config.ridge_lambda);
      const VectorXd knn = knn_predict(Xtr, ytr, Xte, config.knn);
      for (int m = 0; m < 2; ++m) {
        const VectorXd& pred = m == 0 ? ridge : knn;
        auto& cmp = result.models[static_cast<std::size_t>(m)];
        (which == 0 ? cmp.mae_base : cmp.mae_contrastive).push_back(mean_absolute_error(yte, pred));
        (which == 0 ? cmp.r2_base : cmp.r2_contrastive).push_back(r_squared(yte, pred));
      }
    }
  }
  for (auto& cmp : result.models) {
    cmp.mean_mae_base = mean_of(cmp.mae_base);
    cmp.mean_mae_contrastive = mean_of(cmp.mae_contrastive);
    double dr2 = 0.0;
    for (std::size_t i = 0; i < cmp.r2_base.size(); ++i) dr2 += cmp.r2_contrastive[i] - cmp.r2_base[i];
    cmp.delta_r2 = dr2 / static_cast<double>(cmp.r2_base.size());
    cmp.test = paired_t_test(cmp.mae_base, cmp.mae_contrastive);
    cmp.effect = cohens_d(cmp.mae_base, cmp.mae_contrastive);
  }
  return result;
}

nlohmann::json to_json(const RegressionStudyResult& r) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    models.push_back({{"model", m.model},
                      {"mae_base", m.mae_base},
                      {"mae_contrastive", m.mae_contrastive},
                      {"r2_base", m.r2_base},
                      {"r2_contrastive", m.r2_contrastive},
                      {"mean_mae_base", m.mean_mae_base},
                      {"mean_mae_contrastive", m.mean_mae_contrastive},
                      {"delta_r2", m.delta_r2},
                      {"t", m.test.t},
                      {"p_value", m.test.p},
                      {"cohens_d", m.effect.d},
                      {"zero_variance", m.effect.zero_variance}});
  }
  return {{"models", models}};
}

}  // namespace vectorplus::eval
