#include "vectorplus/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "vectorplus/errors.hpp"
#include "vectorplus/json_io.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::decoder {

namespace {

const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>"};

}  // namespace

std::vector<std::string> split_tokens(std::string_view smiles) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < smiles.size();) {
    std::size_t len = 1;
    const auto rest = smiles.substr(i);
    if (rest.starts_with("Cl") || rest.starts_with("Br")) {
      len = 2;
    } else if (rest[0] == '%' && rest.size() >= 3 && std::isdigit(static_cast<unsigned char>(rest[1])) &&
               std::isdigit(static_cast<unsigned char>(rest[2]))) {
      len = 3;
    }
    out.emplace_back(rest.substr(0, len));
    i += len;
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials.size() ||
      !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin()))
    throw SchemaError("vocabulary must start with <pad>, <bos>, <eos>");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw SchemaError("duplicate vocabulary token '" + tokens_[i] + "'");
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
  std::set<std::string> seen;
  for (const auto& s : corpus)
    for (auto& t : split_tokens(s)) seen.insert(std::move(t));
  std::vector<std::string> tokens = kSpecials;
  tokens.insert(tokens.end(), seen.begin(), seen.end());
  return from_tokens(tokens);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  return Vocabulary(tokens);
}

int Vocabulary::index(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end()) throw UnknownToken("token '" + token + "' is not in the vocabulary");
  return it->second;
}

std::vector<int> Vocabulary::encode(std::string_view smiles) const {
  std::vector<int> ids;
  for (const auto& t : split_tokens(smiles)) ids.push_back(index(t));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out += token(id);
  }
  return out;
}

void DecoderConfig::validate() const {
  if (layers < 1 || hidden < 1 || embed_dim < 1) throw ConfigError("decoder sizes must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (max_len < 1) throw ConfigError("max length must be at least 1");
}

std::vector<optim::Block> DecoderParams::blocks() {
  std::vector<optim::Block> out;
  auto add = [&out](auto& m) { out.emplace_back(m.data(), m.size()); };
  add(W_init);
  add(b_init);
  add(embedding);
  for (auto& l : layers) {
    add(l.W_ih);
    add(l.W_hh);
    add(l.b_ih);
    add(l.b_hh);
  }
  add(W_out);
  add(b_out);
  return out;
}

DecoderParams DecoderParams::zeros_like() const {
  DecoderParams z;
  z.W_init = MatrixXd::Zero(W_init.rows(), W_init.cols());
  z.b_init = VectorXd::Zero(b_init.size());
  z.embedding = MatrixXd::Zero(embedding.rows(), embedding.cols());
  for (const auto& l : layers)
    z.layers.push_back({MatrixXd::Zero(l.W_ih.rows(), l.W_ih.cols()),
                        MatrixXd::Zero(l.W_hh.rows(), l.W_hh.cols()), VectorXd::Zero(l.b_ih.size()),
                        VectorXd::Zero(l.b_hh.size())});
  z.W_out = MatrixXd::Zero(W_out.rows(), W_out.cols());
  z.b_out = VectorXd::Zero(b_out.size());
  return z;
}

DecoderParams init_decoder(int latent_dim, int vocab_size, const DecoderConfig& config,
                           std::uint64_t seed) {
  config.validate();
  if (latent_dim < 1 || vocab_size < 1) throw ConfigError("decoder dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols, double a) {
    std::uniform_real_distribution<double> u(-a, a);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  const int H = config.hidden, L = config.layers;
  // Linear/GRU weights uniform in +-1/sqrt(fan_in); embeddings standard normal.
  DecoderParams p;
  const double a_init = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  p.W_init = uniform(L * H, latent_dim, a_init);
  p.b_init = uniform(L * H, 1, a_init);
  std::normal_distribution<double> normal;
  p.embedding.resize(vocab_size, config.embed_dim);
  for (Eigen::Index i = 0; i < p.embedding.size(); ++i) p.embedding.data()[i] = normal(rng);
  const double a_h = 1.0 / std::sqrt(static_cast<double>(H));
  for (int l = 0; l < L; ++l) {
    const int in = l == 0 ? config.embed_dim : H;
    GruLayer g;
    g.W_ih = uniform(3 * H, in, a_h);
    g.W_hh = uniform(3 * H, H, a_h);
    g.b_ih = uniform(3 * H, 1, a_h);
    g.b_hh = uniform(3 * H, 1, a_h);
    p.layers.push_back(std::move(g));
  }
  p.W_out = uniform(vocab_size, H, a_h);
  p.b_out = uniform(vocab_size, 1, a_h);
  return p;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct CellCache {
  MatrixXd x, hprev, r, z, n, hn;
};

// Batched GRU cell; rows are sequences.
MatrixXd cell_forward(const GruLayer& g, const MatrixXd& x, const MatrixXd& hprev, CellCache* cache) {
  const Eigen::Index H = hprev.cols();
  const MatrixXd gi = (x * g.W_ih.transpose()).rowwise() + g.b_ih.transpose();
  const MatrixXd gh = (hprev * g.W_hh.transpose()).rowwise() + g.b_hh.transpose();
  MatrixXd r = (gi.leftCols(H) + gh.leftCols(H)).unaryExpr(&sigmoid);
  MatrixXd z = (gi.middleCols(H, H) + gh.middleCols(H, H)).unaryExpr(&sigmoid);
  MatrixXd hn = gh.rightCols(H);
  MatrixXd n = (gi.rightCols(H) + r.cwiseProduct(hn)).array().tanh().matrix();
  MatrixXd h = (1.0 - z.array()) * n.array() + z.array() * hprev.array();
  if (cache) {
    cache->x = x;
    cache->hprev = hprev;
    cache->r = std::move(r);
    cache->z = std::move(z);
    cache->n = std::move(n);
    cache->hn = std::move(hn);
  }
  return h;
}

// Accumulates parameter gradients; returns (dx, dhprev).
std::pair<MatrixXd, MatrixXd> cell_backward(const GruLayer& g, const CellCache& c, const MatrixXd& dh,
                                            GruLayer& grad) {
  const Eigen::Index H = c.hprev.cols(), B = c.hprev.rows();
  const auto z = c.z.array(), r = c.r.array(), n = c.n.array();
  const Eigen::ArrayXXd dn = dh.array() * (1.0 - z);
  const Eigen::ArrayXXd dz = dh.array() * (c.hprev.array() - n);
  const Eigen::ArrayXXd da_n = dn * (1.0 - n * n);
  const Eigen::ArrayXXd da_r = da_n * c.hn.array() * r * (1.0 - r);
  const Eigen::ArrayXXd da_z = dz * z * (1.0 - z);
  MatrixXd dgi(B, 3 * H), dgh(B, 3 * H);
  dgi << da_r.matrix(), da_z.matrix(), da_n.matrix();
  dgh << da_r.matrix(), da_z.matrix(), (da_n * r).matrix();
  grad.W_ih.noalias() += dgi.transpose() * c.x;
  grad.b_ih += dgi.colwise().sum().transpose();
  grad.W_hh.noalias() += dgh.transpose() * c.hprev;
  grad.b_hh += dgh.colwise().sum().transpose();
  MatrixXd dx = dgi * g.W_ih;
  MatrixXd dhprev = dgh * g.W_hh;
  dhprev.array() += dh.array() * z;
  return {std::move(dx), std::move(dhprev)};
}

void check_params(const DecoderParams& p) {
  if (p.layers.empty()) throw DimensionMismatch("decoder has no layers");
  const Eigen::Index H = p.hidden();
  if (p.W_init.rows() != H * p.num_layers() || p.b_init.size() != p.W_init.rows() ||
      p.W_out.cols() != H || p.b_out.size() != p.W_out.rows() ||
      p.embedding.rows() != p.W_out.rows())
    throw DimensionMismatch("inconsistent decoder parameter shapes");
  for (int l = 0; l < p.num_layers(); ++l) {
    const auto& g = p.layers[static_cast<std::size_t>(l)];
    const Eigen::Index in = l == 0 ? p.embedding.cols() : H;
    if (g.W_ih.rows() != 3 * H || g.W_ih.cols() != in || g.W_hh.rows() != 3 * H ||
        g.W_hh.cols() != H || g.b_ih.size() != 3 * H || g.b_hh.size() != 3 * H)
      throw DimensionMismatch("inconsistent GRU layer shapes");
  }
}

}  // namespace

std::vector<VectorXd> init_hidden(const DecoderParams& params, const VectorXd& z) {
  if (z.size() != params.W_init.cols())
    throw DimensionMismatch("latent has dimension " + std::to_string(z.size()) + ", decoder expects " +
                            std::to_string(params.W_init.cols()));
  const VectorXd h = (params.W_init * z + params.b_init).array().tanh();
  const Eigen::Index H = params.hidden();
  std::vector<VectorXd> out;
  for (int l = 0; l < params.num_layers(); ++l) out.push_back(h.segment(l * H, H));
  return out;
}

StepResult decode_step(const DecoderParams& params, const std::vector<VectorXd>& hidden, int token) {
  if (token < 0 || token >= params.vocab_size())
    throw UnknownToken("token id " + std::to_string(token) + " outside the vocabulary");
  if (static_cast<int>(hidden.size()) != params.num_layers())
    throw DimensionMismatch("hidden state has the wrong number of layers");
  StepResult out;
  MatrixXd x = params.embedding.row(token);
  for (int l = 0; l < params.num_layers(); ++l) {
    const auto& h = hidden[static_cast<std::size_t>(l)];
    if (h.size() != params.hidden()) throw DimensionMismatch("hidden state has the wrong width");
    x = cell_forward(params.layers[static_cast<std::size_t>(l)], x, h.transpose(), nullptr);
    out.hidden.push_back(x.row(0).transpose());
  }
  out.logits = params.W_out * out.hidden.back() + params.b_out;
  const double m = out.logits.maxCoeff();
  out.probs = (out.logits.array() - m).exp();
  out.probs /= out.probs.sum();
  return out;
}

LossStats teacher_forced_loss(const DecoderParams& params, const MatrixXd& Z,
                              const std::vector<std::vector<int>>& sequences, double dropout,
                              std::mt19937_64* rng, DecoderParams* grads) {
  check_params(params);
  const auto B = static_cast<Eigen::Index>(sequences.size());
  if (Z.rows() != B) throw DimensionMismatch("latent rows and sequences differ in count");
  if (Z.cols() != params.latent_dim()) throw DimensionMismatch("latent dimension mismatch");
  LossStats stats;
  if (B == 0) return stats;
  const int L = params.num_layers();
  const Eigen::Index H = params.hidden(), V = params.vocab_size();
  std::size_t max_len = 0;
  for (const auto& s : sequences) {
    for (int id : s)
      if (id < 0 || id >= V) throw UnknownToken("token id " + std::to_string(id) + " outside the vocabulary");
    max_len = std::max(max_len, s.size());
  }
  const std::size_t T = max_len + 1;
  auto input_at = [&](std::size_t b, std::size_t t) {
    const auto& s = sequences[b];
    return t == 0 ? Vocabulary::kBos : (t - 1 < s.size() ? s[t - 1] : Vocabulary::kPad);
  };
  auto target_at = [&](std::size_t b, std::size_t t) {
    const auto& s = sequences[b];
    return t < s.size() ? s[t] : (t == s.size() ? Vocabulary::kEos : -1);
  };
  for (const auto& s : sequences) stats.tokens += static_cast<long>(s.size()) + 1;
  const bool train = rng != nullptr && dropout > 0.0;
  const bool backward = grads != nullptr;

  const MatrixXd h0 = ((Z * params.W_init.transpose()).rowwise() + params.b_init.transpose()).array().tanh();
  std::vector<MatrixXd> h(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) h[static_cast<std::size_t>(l)] = h0.middleCols(l * H, H);

  std::vector<std::vector<CellCache>> caches(backward ? T : 0, std::vector<CellCache>(static_cast<std::size_t>(L)));
  std::vector<std::vector<MatrixXd>> masks(backward && train ? T : 0,
                                           std::vector<MatrixXd>(static_cast<std::size_t>(std::max(L - 1, 0))));
  std::vector<MatrixXd> top(backward ? T : 0), dlogits(backward ? T : 0);
  std::bernoulli_distribution keep(1.0 - dropout);
  const double keep_scale = 1.0 / (1.0 - dropout);

  for (std::size_t t = 0; t < T; ++t) {
    MatrixXd x(B, params.embedding.cols());
    for (Eigen::Index b = 0; b < B; ++b) x.row(b) = params.embedding.row(input_at(static_cast<std::size_t>(b), t));
    for (int l = 0; l < L; ++l) {
      if (l > 0 && train) {
        MatrixXd mask(B, H);
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? keep_scale : 0.0;
        x = x.cwiseProduct(mask);
        if (backward) masks[t][static_cast<std::size_t>(l - 1)] = std::move(mask);
      }
      auto& hl = h[static_cast<std::size_t>(l)];
      hl = cell_forward(params.layers[static_cast<std::size_t>(l)], x, hl,
                        backward ? &caches[t][static_cast<std::size_t>(l)] : nullptr);
      x = hl;
    }
    MatrixXd logits = (x * params.W_out.transpose()).rowwise() + params.b_out.transpose();
    for (Eigen::Index b = 0; b < B; ++b) {
      const int target = target_at(static_cast<std::size_t>(b), t);
      auto row = logits.row(b);
      const double m = row.maxCoeff();
      row.array() = (row.array() - m).exp();
      const double sum = row.sum();
      if (target >= 0) stats.total_nll += std::log(sum) - std::log(row(target));
      row /= sum;  // now probabilities
      if (backward) {
        if (target >= 0) {
          row(target) -= 1.0;
        } else {
          row.setZero();
        }
      }
    }
    if (backward) {
      top[t] = x;
      dlogits[t] = std::move(logits);
    }
  }
  stats.loss = stats.total_nll / static_cast<double>(stats.tokens);
  if (!backward) return stats;

  DecoderParams& G = *grads;
  G = params.zeros_like();
  const double scale = 1.0 / static_cast<double>(stats.tokens);
  std::vector<MatrixXd> dh_next(static_cast<std::size_t>(L), MatrixXd::Zero(B, H));
  for (std::size_t t = T; t-- > 0;) {
    const MatrixXd dl = dlogits[t] * scale;
    G.W_out.noalias() += dl.transpose() * top[t];
    G.b_out += dl.colwise().sum().transpose();
    MatrixXd dh = dl * params.W_out + dh_next[static_cast<std::size_t>(L - 1)];
    for (int l = L - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      auto [dx, dhprev] = cell_backward(params.layers[li], caches[t][li], dh, G.layers[li]);
      dh_next[li] = std::move(dhprev);
      if (l > 0) {
        if (train) dx = dx.cwiseProduct(masks[t][li - 1]);
        dh = dx + dh_next[li - 1];
      } else {
        for (Eigen::Index b = 0; b < B; ++b)
          G.embedding.row(input_at(static_cast<std::size_t>(b), t)) += dx.row(b);
      }
    }
  }
  MatrixXd dh0(B, L * H);
  for (int l = 0; l < L; ++l) dh0.middleCols(l * H, H) = dh_next[static_cast<std::size_t>(l)];
  const MatrixXd dpre = dh0.array() * (1.0 - h0.array().square());
  G.W_init.noalias() += dpre.transpose() * Z;
  G.b_init += dpre.colwise().sum().transpose();
  return stats;
}

DecoderTrainResult train_decoder(DecoderParams params, const Vocabulary& vocab, const MatrixXd& Z,
                                 const std::vector<std::string>& smiles,
                                 const DecoderConfig& config) {
  config.validate();
  check_params(params);
  if (static_cast<std::size_t>(Z.rows()) != smiles.size())
    throw DimensionMismatch("latent rows and SMILES differ in count");
  if (params.vocab_size() != vocab.size())
    throw DimensionMismatch("decoder output size does not match the vocabulary");
  std::vector<std::vector<int>> encoded;
  encoded.reserve(smiles.size());
  for (const auto& s : smiles) encoded.push_back(vocab.encode(s));

  DecoderTrainResult result;
  result.params = std::move(params);
  if (config.epochs == 0 || smiles.empty()) return result;
  auto& p = result.params;
  std::mt19937_64 rng(config.seed);
  optim::Adam adam(config.learning_rate);
  auto param_blocks = p.blocks();
  std::vector<std::size_t> order(smiles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  DecoderParams grads;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double nll = 0.0;
    long tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Eigen::Index> rows;
      std::vector<std::vector<int>> seqs;
      for (std::size_t i = start; i < end; ++i) {
        rows.push_back(static_cast<Eigen::Index>(order[i]));
        seqs.push_back(encoded[order[i]]);
      }
      const MatrixXd Zb = Z(rows, Eigen::all);
      const auto stats = teacher_forced_loss(p, Zb, seqs, config.dropout, &rng, &grads);
      if (!std::isfinite(stats.loss))
        throw NonFiniteLoss("decoder loss became non-finite at epoch " + std::to_string(epoch));
      auto grad_blocks = grads.blocks();
      const double norm = optim::clip_global_norm(grad_blocks, config.clip_norm);
      if (!std::isfinite(norm))
        throw NonFiniteLoss("decoder gradient became non-finite at epoch " + std::to_string(epoch));
      adam.step(param_blocks, grad_blocks);
      nll += stats.total_nll;
      tokens += stats.tokens;
    }
    result.loss_trace.push_back(nll / static_cast<double>(tokens));
    log::debug("decoder epoch " + std::to_string(epoch) + " loss " +
               std::to_string(result.loss_trace.back()));
  }
  return result;
}

Sample sample_smiles(const DecoderParams& params, const Vocabulary& vocab, const VectorXd& z,
                     double temperature, int max_len, std::uint64_t seed, bool greedy) {
  if (!greedy && !(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (max_len < 1) throw ConfigError("max length must be at least 1");
  check_params(params);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto hidden = init_hidden(params, z);
  int token = Vocabulary::kBos;
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    auto res = decode_step(params, hidden, token);
    VectorXd logits = res.logits;
    logits(Vocabulary::kPad) = -std::numeric_limits<double>::infinity();
    logits(Vocabulary::kBos) = -std::numeric_limits<double>::infinity();
    int next = 0;
    if (greedy) {
      logits.maxCoeff(&next);
    } else {
      const VectorXd scaled = logits / temperature;
      const VectorXd w = (scaled.array() - scaled.maxCoeff()).exp();
      const double target = unit(rng) * w.sum();
      double acc = 0.0;
      next = static_cast<int>(w.size()) - 1;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        acc += w(i);
        if (acc > target && w(i) > 0.0) {
          next = static_cast<int>(i);
          break;
        }
      }
    }
    if (next == Vocabulary::kEos) return {vocab.decode(out), false};
    out.push_back(next);
    token = next;
    hidden = std::move(res.hidden);
  }
  return {vocab.decode(out), true};
}

Sample greedy_decode(const DecoderParams& params, const Vocabulary& vocab, const VectorXd& z,
                     int max_len) {
  return sample_smiles(params, vocab, z, 1.0, max_len, 0, true);
}

nlohmann::json to_json(const DecoderParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers)
    layers.push_back({{"W_ih", json_io::from_matrix(l.W_ih)},
                      {"W_hh", json_io::from_matrix(l.W_hh)},
                      {"b_ih", json_io::from_vector(l.b_ih)},
                      {"b_hh", json_io::from_vector(l.b_hh)}});
  return {{"layers", params.num_layers()},
          {"hidden", params.hidden()},
          {"embed_dim", params.embedding.cols()},
          {"latent_dim", params.latent_dim()},
          {"vocab_size", params.vocab_size()},
          {"W_init", json_io::from_matrix(params.W_init)},
          {"b_init", json_io::from_vector(params.b_init)},
          {"embedding", json_io::from_matrix(params.embedding)},
          {"gru", std::move(layers)},
          {"W_out", json_io::from_matrix(params.W_out)},
          {"b_out", json_io::from_vector(params.b_out)}};
}

DecoderParams decoder_from_json(const nlohmann::json& j) {
  DecoderParams p;
  try {
    p.W_init = json_io::to_matrix(j.at("W_init"));
    p.b_init = json_io::to_vector(j.at("b_init"));
    p.embedding = json_io::to_matrix(j.at("embedding"));
    for (const auto& l : j.at("gru"))
      p.layers.push_back({json_io::to_matrix(l.at("W_ih")), json_io::to_matrix(l.at("W_hh")),
                          json_io::to_vector(l.at("b_ih")), json_io::to_vector(l.at("b_hh"))});
    p.W_out = json_io::to_matrix(j.at("W_out"));
    p.b_out = json_io::to_vector(j.at("b_out"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad decoder record: ") + e.what());
  }
  try {
    check_params(p);
  } catch (const DimensionMismatch& e) {
    throw SchemaError(e.what());
  }
  return p;
}

nlohmann::json to_json(const Vocabulary& vocab) { return vocab.tokens(); }

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  try {
    return Vocabulary::from_tokens(j.get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad vocabulary: ") + e.what());
  }
}

}  // namespace vectorplus::decoder
