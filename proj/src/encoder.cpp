#include "vectorplus/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "vectorplus/errors.hpp"
#include "vectorplus/json_io.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::encoder {

VectorXd featurize(const chem::Molecule& molecule, const FeaturizerConfig& config,
                   const chem::LogPTable& table) {
  const auto fp = chem::fingerprint(molecule, config.fp_radius, config.fp_width);
  VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(config.dim()));
  for (std::size_t bit : fp.on_bits()) x(static_cast<Eigen::Index>(bit)) = 1.0;
  const auto props = chem::properties(molecule, table);
  const auto base = static_cast<Eigen::Index>(config.fp_width);
  x(base) = props.mw / 500.0;
  x(base + 1) = props.logp / 5.0;
  x(base + 2) = props.hbd / 5.0;
  x(base + 3) = props.hba / 10.0;
  return x;
}

MatrixXd featurize_all(const std::vector<std::string>& smiles, const FeaturizerConfig& config,
                       const chem::LogPTable& table) {
  MatrixXd X(static_cast<Eigen::Index>(smiles.size()), static_cast<Eigen::Index>(config.dim()));
  for (std::size_t i = 0; i < smiles.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) =
        featurize(chem::parse_smiles(smiles[i]), config, table).transpose();
  return X;
}

EncoderParams init_params(Eigen::Index d_in, Eigen::Index d_h, Eigen::Index d,
                          std::uint64_t seed) {
  if (d_in <= 0 || d_h <= 0 || d <= 0) throw DimensionMismatch("encoder dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
  };
  EncoderParams p;
  p.W1 = glorot(d_h, d_in);
  p.b1 = VectorXd::Zero(d_h);
  p.W2 = glorot(d, d_h);
  p.b2 = VectorXd::Zero(d);
  return p;
}

double elu(double u) { return u > 0.0 ? u : std::expm1(u); }

namespace {

double elu_grad(double u) { return u > 0.0 ? 1.0 : std::exp(u); }

void check_dims(const EncoderParams& params, Eigen::Index d_in) {
  if (params.W1.cols() != d_in)
    throw DimensionMismatch("input has " + std::to_string(d_in) + " features, encoder expects " +
                            std::to_string(params.W1.cols()));
  if (params.b1.size() != params.W1.rows() || params.W2.cols() != params.W1.rows() ||
      params.b2.size() != params.W2.rows())
    throw DimensionMismatch("inconsistent encoder parameter shapes");
}

struct Forward {
  MatrixXd pre;  // n x d_h
  MatrixXd hidden;
  MatrixXd z;    // n x d, before optional normalization
  MatrixXd out;
};

Forward forward(const EncoderParams& params, const MatrixXd& X, bool l2_normalize) {
  check_dims(params, X.cols());
  Forward f;
  f.pre = (X * params.W1.transpose()).rowwise() + params.b1.transpose();
  f.hidden = f.pre.unaryExpr([](double u) { return elu(u); });
  f.z = (f.hidden * params.W2.transpose()).rowwise() + params.b2.transpose();
  f.out = f.z;
  if (l2_normalize) {
    for (Eigen::Index i = 0; i < f.out.rows(); ++i) {
      const double n = f.z.row(i).norm();
      if (n > 0.0) f.out.row(i) /= n;
    }
  }
  return f;
}

ParamGrads backward(const EncoderParams& params, const MatrixXd& X, const Forward& f,
                    const MatrixXd& dOut, bool l2_normalize) {
  MatrixXd dZ = dOut;
  if (l2_normalize) {
    for (Eigen::Index i = 0; i < dZ.rows(); ++i) {
      const double n = f.z.row(i).norm();
      if (n > 0.0) {
        const auto u = f.out.row(i);
        dZ.row(i) = (dOut.row(i) - u * u.dot(dOut.row(i))) / n;
      }
    }
  }
  ParamGrads g;
  g.W2 = dZ.transpose() * f.hidden;
  g.b2 = dZ.colwise().sum().transpose();
  const MatrixXd dA = (dZ * params.W2).cwiseProduct(f.pre.unaryExpr(&elu_grad));
  g.W1 = dA.transpose() * X;
  g.b1 = dA.colwise().sum().transpose();
  return g;
}

// Distance under the configured norm and its gradient with respect to the
// difference vector. Coordinates at exactly zero get subgradient 0, as does
// the zero vector under p = 2.
double pair_distance(const Eigen::RowVectorXd& diff, int p, Eigen::RowVectorXd* grad) {
  if (p == 1) {
    if (grad) *grad = diff.unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
    return diff.cwiseAbs().sum();
  }
  const double d = diff.norm();
  if (grad) *grad = d > 0.0 ? Eigen::RowVectorXd(diff / d) : Eigen::RowVectorXd::Zero(diff.size());
  return d;
}

void check_batch(const MatrixXd& Z, const std::vector<int>& labels, const ContrastiveConfig& config) {
  config.validate();
  if (Z.rows() < 2) throw BatchTooSmall("contrastive loss needs a batch of at least 2");
  if (static_cast<std::size_t>(Z.rows()) != labels.size())
    throw DimensionMismatch("embedding rows and labels differ in length");
}

}  // namespace

void ContrastiveConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  if (p != 1 && p != 2) throw ConfigError("norm order must be 1 or 2");
  if (batch_size < 2) throw BatchTooSmall("batch size must be at least 2");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (hidden_dim <= 0 || latent_dim <= 0) throw ConfigError("encoder dimensions must be positive");
}

VectorXd embed(const EncoderParams& params, const VectorXd& x) {
  return embed_all(params, x.transpose()).row(0).transpose();
}

MatrixXd embed_all(const EncoderParams& params, const MatrixXd& X, bool l2_normalize) {
  return forward(params, X, l2_normalize).out;
}

double contrastive_loss(const MatrixXd& Z, const std::vector<int>& labels,
                        const ContrastiveConfig& config) {
  check_batch(Z, labels, config);
  const Eigen::Index B = Z.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = 0; j < B; ++j) {
      if (i == j) continue;
      const double d = pair_distance(Z.row(i) - Z.row(j), config.p, nullptr);
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        total += d * d;
      } else {
        const double h = std::max(0.0, config.margin - d);
        total += h * h;
      }
    }
  }
  return total / static_cast<double>(B * (B - 1));
}

LossAndGrad contrastive_loss_grad(const MatrixXd& Z, const std::vector<int>& labels,
                                  const ContrastiveConfig& config) {
  check_batch(Z, labels, config);
  const Eigen::Index B = Z.rows();
  const double scale = 1.0 / static_cast<double>(B * (B - 1));
  LossAndGrad out;
  out.grad = MatrixXd::Zero(Z.rows(), Z.cols());
  Eigen::RowVectorXd ddist;
  // Ordered pairs (i, j) and (j, i) contribute identical terms, so each
  // unordered pair is visited once and counted twice.
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = i + 1; j < B; ++j) {
      const Eigen::RowVectorXd diff = Z.row(i) - Z.row(j);
      const double d = pair_distance(diff, config.p, &ddist);
      double coeff = 0.0;  // d(term)/d(distance)
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        out.loss += 2.0 * d * d;
        coeff = 2.0 * d;
      } else if (d < config.margin) {
        const double h = config.margin - d;
        out.loss += 2.0 * h * h;
        coeff = -2.0 * h;
      }
      if (coeff != 0.0) {
        const Eigen::RowVectorXd g = (2.0 * scale * coeff) * ddist;
        out.grad.row(i) += g;
        out.grad.row(j) -= g;
      }
    }
  }
  out.loss *= scale;
  return out;
}

ParamGrads backprop(const EncoderParams& params, const MatrixXd& X, const MatrixXd& dZ,
                    bool l2_normalize) {
  const auto f = forward(params, X, l2_normalize);
  if (dZ.rows() != f.out.rows() || dZ.cols() != f.out.cols())
    throw DimensionMismatch("gradient shape does not match embeddings");
  return backward(params, X, f, dZ, l2_normalize);
}

LossAndGrad batch_objective(const EncoderParams& params, const MatrixXd& X,
                            const std::vector<int>& labels, const ContrastiveConfig& config,
                            ParamGrads* grads) {
  const auto f = forward(params, X, config.l2_normalize);
  auto lg = contrastive_loss_grad(f.out, labels, config);
  if (grads) *grads = backward(params, X, f, lg.grad, config.l2_normalize);
  return lg;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<int>& labels,
                                                   std::size_t batch_size, bool class_balanced,
                                                   std::mt19937_64& rng) {
  const std::size_t n = labels.size();
  if (n < 2) throw BatchTooSmall("need at least 2 samples to form a batch");
  if (batch_size < 2) throw BatchTooSmall("batch size must be at least 2");
  std::vector<std::size_t> order;
  order.reserve(n);
  if (class_balanced) {
    // Shuffle within each class, then interleave classes round-robin so that
    // consecutive chunks carry near-equal class counts.
    std::vector<int> classes(labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::vector<std::vector<std::size_t>> members(classes.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin();
      members[static_cast<std::size_t>(c)].push_back(i);
    }
    for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);
    for (std::size_t k = 0; order.size() < n; ++k)
      for (const auto& m : members)
        if (k < m.size()) order.push_back(m[k]);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

namespace {

struct AdamState {
  ParamGrads m, v;
  long step = 0;
};

void zero_like(ParamGrads& g, const EncoderParams& p) {
  g.W1 = MatrixXd::Zero(p.W1.rows(), p.W1.cols());
  g.b1 = VectorXd::Zero(p.b1.size());
  g.W2 = MatrixXd::Zero(p.W2.rows(), p.W2.cols());
  g.b2 = VectorXd::Zero(p.b2.size());
}

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, double lr, double c1, double c2) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
}

bool all_finite(const ParamGrads& g) {
  return g.W1.allFinite() && g.b1.allFinite() && g.W2.allFinite() && g.b2.allFinite();
}

}  // namespace

TrainResult train_encoder(const MatrixXd& features, const std::vector<int>& labels,
                          const std::vector<std::string>& smiles, const ContrastiveConfig& config) {
  config.validate();
  if (features.rows() == 0) throw InsufficientData("empty training set");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw DimensionMismatch("feature rows and labels differ in length");
  if (!smiles.empty() && smiles.size() != labels.size())
    throw DimensionMismatch("SMILES and labels differ in length");
  {
    std::vector<int> distinct(labels);
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2)
      throw InvalidClassCount("encoder training needs at least 2 classes");
  }

  TrainResult result;
  result.params = init_params(features.cols(), config.hidden_dim, config.latent_dim, config.seed);
  auto& params = result.params;
  // Separate stream for batching so that initialization does not depend on
  // how many batches were drawn.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  zero_like(adam.m, params);
  zero_like(adam.v, params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(labels, config.batch_size, config.class_balanced, rng);
    double epoch_loss = 0.0;
    for (const auto& batch : batches) {
      const std::vector<Eigen::Index> rows(batch.begin(), batch.end());
      const MatrixXd X = features(rows, Eigen::all);
      std::vector<int> y;
      y.reserve(batch.size());
      for (std::size_t i : batch) y.push_back(labels[i]);
      ParamGrads g;
      const auto lg = batch_objective(params, X, y, config, &g);
      if (!std::isfinite(lg.loss) || !all_finite(g))
        throw NonFiniteLoss("contrastive loss became non-finite at epoch " +
                            std::to_string(epoch) + " (loss " + std::to_string(lg.loss) + ")");
      ++adam.step;
      const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam.step));
      const double lr = config.learning_rate;
      adam_update(params.W1, g.W1, adam.m.W1, adam.v.W1, lr, c1, c2);
      adam_update(params.b1, g.b1, adam.m.b1, adam.v.b1, lr, c1, c2);
      adam_update(params.W2, g.W2, adam.m.W2, adam.v.W2, lr, c1, c2);
      adam_update(params.b2, g.b2, adam.m.b2, adam.v.b2, lr, c1, c2);
      epoch_loss += lg.loss;
    }
    epoch_loss /= static_cast<double>(batches.size());
    result.loss_trajectory.push_back(epoch_loss);
    log::debug("encoder epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss));
  }

  result.embeddings.vectors = embed_all(params, features, config.l2_normalize);
  result.embeddings.labels = labels;
  result.embeddings.source_smiles = smiles;
  return result;
}

nlohmann::json to_json(const EncoderParams& params) {
  return {{"d_in", params.d_in()},
          {"d_h", params.d_h()},
          {"d", params.d()},
          {"W1", json_io::from_matrix(params.W1)},
          {"b1", json_io::from_vector(params.b1)},
          {"W2", json_io::from_matrix(params.W2)},
          {"b2", json_io::from_vector(params.b2)}};
}

EncoderParams params_from_json(const nlohmann::json& j) {
  EncoderParams p;
  p.W1 = json_io::to_matrix(j.at("W1"));
  p.b1 = json_io::to_vector(j.at("b1"));
  p.W2 = json_io::to_matrix(j.at("W2"));
  p.b2 = json_io::to_vector(j.at("b2"));
  check_dims(p, p.W1.cols());
  if (j.value("d_in", p.d_in()) != p.d_in() || j.value("d_h", p.d_h()) != p.d_h() ||
      j.value("d", p.d()) != p.d())
    throw SchemaError("encoder header dimensions disagree with stored weights");
  return p;
}

void write_embeddings_csv(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "smiles,label";
  for (Eigen::Index c = 0; c < set.vectors.cols(); ++c) out << ",z_" << (c + 1);
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < set.vectors.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    out << (i < set.source_smiles.size() ? set.source_smiles[i] : std::string()) << ','
        << (i < set.labels.size() ? set.labels[i] : 0);
    for (Eigen::Index c = 0; c < set.vectors.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", set.vectors(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace vectorplus::encoder
