#include "vectorplus/generate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "vectorplus/chem.hpp"
#include "vectorplus/data.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::generate {

Reward parse_reward(std::string_view name) {
  if (name == "none") return Reward::kNone;
  if (name == "lipinski") return Reward::kLipinski;
  throw ConfigError("unknown reward '" + std::string(name) + "' (expected none or lipinski)");
}

std::string to_string(Reward reward) { return reward == Reward::kNone ? "none" : "lipinski"; }

void GenerationConfig::validate() const {
  if (target_class < 0) throw ConfigError("target class must be >= 0");
  if (samples < 1) throw ConfigError("samples must be >= 1");
  if (hill_steps < 0) throw ConfigError("hill steps must be >= 0");
  if (knn < 1) throw ConfigError("knn must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (retry_factor < 1) throw ConfigError("retry factor must be >= 1");
}

int lipinski_reward(std::string_view smiles) {
  chem::Molecule mol;
  try {
    mol = chem::parse_smiles(smiles);
  } catch (const Error&) {
    throw InvalidSmiles("not a valid SMILES: '" + std::string(smiles) + "'");
  }
  if (mol.empty()) throw InvalidSmiles("empty SMILES");
  const auto p = chem::properties(mol);
  return (p.mw <= 500.0) + (p.logp <= 5.0) + (p.hbd <= 5) + (p.hba <= 10);
}

double knn_local_variance(const VectorXd& z, const MatrixXd& references, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (references.rows() < k)
    throw InsufficientNeighbors("need " + std::to_string(k) + " reference points, have " +
                                std::to_string(references.rows()));
  if (references.cols() != z.size()) throw DimensionMismatch("reference width differs from z");
  std::vector<double> d2(static_cast<std::size_t>(references.rows()));
  for (Eigen::Index i = 0; i < references.rows(); ++i)
    d2[static_cast<std::size_t>(i)] = (references.row(i).transpose() - z).squaredNorm();
  std::partial_sort(d2.begin(), d2.begin() + k, d2.end());
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += d2[static_cast<std::size_t>(i)];
  return std::max(sum / k, kVarianceFloor);
}

namespace {

bool usable(const decoder::Sample& s) {
  return !s.truncated && !s.smiles.empty() && chem::is_valid(s.smiles);
}

}  // namespace

HillClimbResult hill_climb(const VectorXd& z0, const DecodeFn& decode, const RewardFn& reward,
                           const MatrixXd& references, int steps, int k, double alpha,
                           std::uint64_t seed) {
  HillClimbResult out;
  out.z = z0;
  const auto first = decode(z0);
  if (!usable(first)) return out;
  out.initial_valid = true;
  double current = reward(first.smiles);
  out.rewards.push_back(current);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int h = 0; h < steps; ++h) {
    ++out.steps;
    // The current latent always decodes validly: only valid candidates are accepted.
    const double sigma = std::sqrt(knn_local_variance(out.z, references, k));
    VectorXd candidate(out.z.size());
    for (Eigen::Index i = 0; i < candidate.size(); ++i)
      candidate(i) = out.z(i) + alpha * sigma * normal(rng);
    const auto s = decode(candidate);
    if (!usable(s)) continue;
    const double r = reward(s.smiles);
    if (r > current) {
      current = r;
      out.z = candidate;
      out.rewards.push_back(r);
      out.accepted.push_back(candidate);
      out.accepted_smiles.push_back(s.smiles);
    }
  }
  return out;
}

MatrixXd cluster_members(const latent::GmmParams& gmm, const MatrixXd& Z, Eigen::Index k,
                         Eigen::Index min_rows) {
  if (k < 0 || k >= gmm.K()) throw ConfigError("component index out of range");
  const MatrixXd R = latent::e_step(gmm, Z);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    Eigen::Index best = 0;
    R.row(i).maxCoeff(&best);
    if (best == k) rows.push_back(i);
  }
  if (static_cast<Eigen::Index>(rows.size()) < min_rows) {
    log::info("cluster " + std::to_string(k) + " has " + std::to_string(rows.size()) +
              " members; using all training embeddings as KNN references");
    return Z;
  }
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), Z.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = Z.row(rows[i]);
  return out;
}

std::string to_string(Status status) {
  switch (status) {
    case Status::kAccepted: return "accepted";
    case Status::kTruncated: return "truncated";
    case Status::kInvalid: return "invalid";
    case Status::kNonNovel: return "non_novel";
    case Status::kDuplicate: return "duplicate";
  }
  return "invalid";
}

std::vector<std::string> GenerationReport::accepted() const {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (r.status == Status::kAccepted) out.push_back(r.smiles);
  return out;
}

std::vector<std::string> GenerationReport::raw() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.smiles);
  return out;
}

std::uint64_t attempt_seed(std::uint64_t master, std::uint64_t t, std::uint64_t stream) {
  // splitmix64 finalizer over a combination of the three inputs
  std::uint64_t x = master + 0x9e3779b97f4a7c15ULL * (t + 1) + 0xbf58476d1ce4e5b9ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

GenerationReport generate_class(const GenerationModels& models, int component,
                                const GenerationConfig& config) {
  config.validate();
  if (!models.decoder || !models.vocab || !models.gmm) throw ConfigError("generation models incomplete");
  const auto& dec = *models.decoder;
  const auto& gmm = *models.gmm;
  if (dec.latent_dim() != gmm.d())
    throw ModelMismatch("decoder latent width " + std::to_string(dec.latent_dim()) +
                        " differs from mixture width " + std::to_string(gmm.d()));
  if (dec.vocab_size() != models.vocab->size())
    throw ModelMismatch("decoder output size differs from vocabulary size");
  if (component >= gmm.K()) throw ModelMismatch("component index out of range");
  const bool climb = config.reward != Reward::kNone && config.hill_steps > 0;
  if (climb) {
    if (models.references.cols() != gmm.d()) throw ModelMismatch("reference embeddings have the wrong width");
    if (models.references.rows() < config.knn)
      throw InsufficientNeighbors("reference set smaller than k");
  }

  const RewardFn reward = [](const std::string& s) { return static_cast<double>(lipinski_reward(s)); };
  GenerationReport report;
  report.requested = config.samples;
  std::set<std::string> seen;
  const long budget = static_cast<long>(config.retry_factor) * config.samples;
  for (long t = 0; t < budget && report.produced < config.samples; ++t) {
    const auto ut = static_cast<std::uint64_t>(t);
    const MatrixXd draw = component < 0 ? latent::sample_mixture(gmm, 1, attempt_seed(config.seed, ut, 0))
                                        : latent::sample(gmm, component, 1, attempt_seed(config.seed, ut, 0));
    const VectorXd z0 = draw.row(0).transpose();
    const std::uint64_t decode_seed = attempt_seed(config.seed, ut, 1);
    const DecodeFn decode = [&](const VectorXd& z) {
      return decoder::sample_smiles(dec, *models.vocab, z, config.temperature, config.max_len, decode_seed);
    };

    AttemptRecord rec;
    rec.attempt = static_cast<int>(t);
    rec.latent = z0;
    if (climb) {
      const auto hc = hill_climb(z0, decode, reward, models.references, config.hill_steps, config.knn,
                                 config.alpha, attempt_seed(config.seed, ut, 2));
      rec.latent = hc.z;
      rec.hill_accepts = static_cast<int>(hc.accepted.size());
    }
    const auto s = decode(rec.latent);
    rec.smiles = s.smiles;
    ++report.attempts;
    if (s.truncated) {
      rec.status = Status::kTruncated;
      ++report.truncated;
    } else if (auto canon = chem::canonical_smiles(s.smiles); !canon || s.smiles.empty()) {
      rec.status = Status::kInvalid;
      ++report.invalid;
    } else {
      rec.canonical = *canon;
      rec.reward = lipinski_reward(s.smiles);
      if (models.training_canonical.count(*canon)) {
        rec.status = Status::kNonNovel;
        ++report.non_novel;
      } else if (!seen.insert(*canon).second) {
        rec.status = Status::kDuplicate;
        ++report.duplicate;
      } else {
        rec.status = Status::kAccepted;
        ++report.produced;
      }
    }
    report.records.push_back(std::move(rec));
  }
  if (report.produced < config.samples)
    log::info("generation shortfall: " + std::to_string(report.produced) + " of " +
              std::to_string(config.samples) + " after " + std::to_string(report.attempts) + " attempts");
  return report;
}

nlohmann::json to_json(const GenerationConfig& c) {
  return {{"target_class", c.target_class}, {"samples", c.samples},     {"hill_steps", c.hill_steps},
          {"knn", c.knn},                   {"alpha", c.alpha},         {"temperature", c.temperature},
          {"seed", c.seed},                 {"reward", to_string(c.reward)}, {"max_len", c.max_len},
          {"retry_factor", c.retry_factor}};
}

nlohmann::json summary_json(const GenerationReport& r, const GenerationConfig& config) {
  return {{"config", to_json(config)},
          {"requested", r.requested},
          {"attempts", r.attempts},
          {"produced", r.produced},
          {"shortfall", r.shortfall()},
          {"rejected",
           {{"invalid", r.invalid},
            {"truncated", r.truncated},
            {"non_novel", r.non_novel},
            {"duplicate", r.duplicate}}}};
}

void write_report_csv(const GenerationReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const Eigen::Index d = report.records.empty() ? 0 : report.records.front().latent.size();
  out << "attempt,smiles,canonical,status,valid,reward,hill_accepts";
  for (Eigen::Index c = 0; c < d; ++c) out << ",z_" << (c + 1);
  out << '\n';
  for (const auto& r : report.records) {
    out << r.attempt << ',' << data::csv_field(r.smiles) << ',' << data::csv_field(r.canonical) << ','
        << to_string(r.status) << ',' << (r.canonical.empty() ? 0 : 1) << ','
        << (r.reward ? std::to_string(*r.reward) : std::string()) << ',' << r.hill_accepts;
    for (Eigen::Index c = 0; c < r.latent.size(); ++c) out << ',' << data::format_double(r.latent(c));
    out << '\n';
  }
}

void write_smiles(const std::vector<std::string>& smiles, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& s : smiles) out << s << '\n';
}

}  // namespace vectorplus::generate
