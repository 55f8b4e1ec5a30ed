#include "vectorplus/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vectorplus/chem.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::string scale_name(data::FilterScale s) { return s == data::FilterScale::kLog ? "log" : "raw"; }

data::FilterScale parse_scale(const std::string& s) {
  if (s == "log") return data::FilterScale::kLog;
  if (s == "raw") return data::FilterScale::kRaw;
  throw ConfigError("preprocess.scale must be 'log' or 'raw', got '" + s + "'");
}

// Runs `body` and tags any library error with the stage name.
template <typename F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

data::Provenance provenance_from_json(const json& j) {
  data::Provenance p;
  p.raw_count = j.at("raw_count").get<std::size_t>();
  p.removed_invalid = j.at("removed_invalid").get<std::size_t>();
  p.removed_outliers = j.at("removed_outliers").get<std::size_t>();
  p.removed_duplicates = j.at("removed_duplicates").get<std::size_t>();
  p.transform = j.at("transform").get<std::string>();
  return p;
}

std::set<std::string> canonical_set(const std::vector<std::string>& smiles) {
  std::set<std::string> out;
  for (const auto& s : smiles)
    if (auto c = chem::canonical_smiles(s)) out.insert(*c);
  return out;
}

MatrixXd rows_with_label(const MatrixXd& Z, const std::vector<int>& labels, int label) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) idx.push_back(static_cast<Eigen::Index>(i));
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), Z.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = Z.row(idx[r]);
  return out;
}

// Raw decodes as metrics input. Truncated decodes count as invalid even when
// the prefix parses.
std::vector<std::string> metric_inputs(const generate::GenerationReport& report) {
  std::vector<std::string> out;
  out.reserve(report.records.size());
  for (const auto& r : report.records) out.push_back(r.status == generate::Status::kTruncated ? "" : r.smiles);
  return out;
}

void write_metrics(const eval::MetricsSummary& m, const std::string& dir, const std::string& stem) {
  ensure_dir(dir);
  write_text(eval::to_json(m).dump(2) + "\n", join(dir, stem + ".json"));
  eval::write_histograms_csv(m, join(dir, stem + "_histograms.csv"));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::set_seed(std::uint64_t value) {
  seed = value;
  encoder.seed = value;
  gmm.fit.seed = value;
  decoder.seed = value;
  generation.seed = value;
}

void PipelineConfig::validate() const {
  if (dataset.empty()) throw ConfigError("dataset path is empty");
  if (schema.value_col.empty() == schema.label_col.empty())
    throw ConfigError("exactly one of schema.value_col and schema.label_col must be set");
  if (!(preprocess.z_threshold > 0.0)) throw ConfigError("preprocess.z_threshold must be positive");
  if (featurizer.fp_width == 0) throw ConfigError("featurizer.fp_width must be positive");
  if (featurizer.fp_radius < 0) throw ConfigError("featurizer.fp_radius must be non-negative");
  encoder.validate();
  if (!(gmm.fit.tol > 0.0)) throw ConfigError("gmm.tol must be positive");
  if (gmm.fit.max_iter < 1) throw ConfigError("gmm.max_iter must be at least 1");
  if (!(gmm.fit.reg_scale >= 0.0)) throw ConfigError("gmm.reg_scale must be non-negative");
  if (gmm.per_class_components < 1) throw ConfigError("gmm.per_class_components must be at least 1");
  decoder.validate();
  generation.validate();
  if (output.empty()) throw ConfigError("output directory is empty");
}

PipelineConfig config_from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  check_keys(j, "config", {"dataset", "schema", "preprocess", "featurizer", "encoder", "gmm", "decoder",
                           "generation", "seed", "output"});
  read(j, "dataset", c.dataset, "config");
  read(j, "output", c.output, "config");
  std::uint64_t seed = 0;
  read(j, "seed", seed, "config");

  if (j.contains("schema")) {
    const auto& s = j["schema"];
    check_keys(s, "schema", {"smiles_col", "value_col", "label_col"});
    read(s, "smiles_col", c.schema.smiles_col, "schema");
    read(s, "value_col", c.schema.value_col, "schema");
    read(s, "label_col", c.schema.label_col, "schema");
  }
  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    check_keys(p, "preprocess", {"z_threshold", "scale", "dedup", "class_names"});
    read(p, "z_threshold", c.preprocess.z_threshold, "preprocess");
    std::string scale = scale_name(c.preprocess.scale);
    read(p, "scale", scale, "preprocess");
    c.preprocess.scale = parse_scale(scale);
    read(p, "dedup", c.preprocess.dedup, "preprocess");
    read(p, "class_names", c.preprocess.class_names, "preprocess");
  }
  if (j.contains("featurizer")) {
    const auto& f = j["featurizer"];
    check_keys(f, "featurizer", {"fp_width", "fp_radius"});
    read(f, "fp_width", c.featurizer.fp_width, "featurizer");
    read(f, "fp_radius", c.featurizer.fp_radius, "featurizer");
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    check_keys(e, "encoder", {"margin", "p", "batch_size", "epochs", "learning_rate", "hidden_dim",
                              "latent_dim", "class_balanced", "l2_normalize"});
    read(e, "margin", c.encoder.margin, "encoder");
    read(e, "p", c.encoder.p, "encoder");
    read(e, "batch_size", c.encoder.batch_size, "encoder");
    read(e, "epochs", c.encoder.epochs, "encoder");
    read(e, "learning_rate", c.encoder.learning_rate, "encoder");
    read(e, "hidden_dim", c.encoder.hidden_dim, "encoder");
    read(e, "latent_dim", c.encoder.latent_dim, "encoder");
    read(e, "class_balanced", c.encoder.class_balanced, "encoder");
    read(e, "l2_normalize", c.encoder.l2_normalize, "encoder");
  }
  if (j.contains("gmm")) {
    const auto& g = j["gmm"];
    check_keys(g, "gmm", {"tol", "max_iter", "reg_scale", "empty_threshold", "max_reseeds", "per_class",
                          "per_class_components"});
    read(g, "tol", c.gmm.fit.tol, "gmm");
    read(g, "max_iter", c.gmm.fit.max_iter, "gmm");
    read(g, "reg_scale", c.gmm.fit.reg_scale, "gmm");
    read(g, "empty_threshold", c.gmm.fit.empty_threshold, "gmm");
    read(g, "max_reseeds", c.gmm.fit.max_reseeds, "gmm");
    read(g, "per_class", c.gmm.per_class, "gmm");
    read(g, "per_class_components", c.gmm.per_class_components, "gmm");
  }
  if (j.contains("decoder")) {
    const auto& d = j["decoder"];
    check_keys(d, "decoder", {"layers", "hidden", "embed_dim", "dropout", "epochs", "learning_rate",
                              "batch_size", "clip_norm", "max_len"});
    read(d, "layers", c.decoder.layers, "decoder");
    read(d, "hidden", c.decoder.hidden, "decoder");
    read(d, "embed_dim", c.decoder.embed_dim, "decoder");
    read(d, "dropout", c.decoder.dropout, "decoder");
    read(d, "epochs", c.decoder.epochs, "decoder");
    read(d, "learning_rate", c.decoder.learning_rate, "decoder");
    read(d, "batch_size", c.decoder.batch_size, "decoder");
    read(d, "clip_norm", c.decoder.clip_norm, "decoder");
    read(d, "max_len", c.decoder.max_len, "decoder");
  }
  if (j.contains("generation")) {
    const auto& g = j["generation"];
    check_keys(g, "generation", {"class", "samples", "hill_steps", "knn", "alpha", "temperature", "reward",
                                 "max_len", "retry_factor"});
    int cls = c.generation.target_class + 1;
    read(g, "class", cls, "generation");
    if (cls < 1) throw ConfigError("generation.class must be at least 1");
    c.generation.target_class = cls - 1;
    read(g, "samples", c.generation.samples, "generation");
    read(g, "hill_steps", c.generation.hill_steps, "generation");
    read(g, "knn", c.generation.knn, "generation");
    read(g, "alpha", c.generation.alpha, "generation");
    read(g, "temperature", c.generation.temperature, "generation");
    std::string reward = generate::to_string(c.generation.reward);
    read(g, "reward", reward, "generation");
    c.generation.reward = generate::parse_reward(reward);
    read(g, "max_len", c.generation.max_len, "generation");
    read(g, "retry_factor", c.generation.retry_factor, "generation");
  }

  if (!base_dir.empty() && !c.dataset.empty() && fs::path(c.dataset).is_relative())
    c.dataset = (fs::path(base_dir) / c.dataset).lexically_normal().string();
  c.set_seed(seed);
  return c;
}

json to_json(const PipelineConfig& c) {
  json schema = {{"smiles_col", c.schema.smiles_col}};
  if (!c.schema.value_col.empty()) schema["value_col"] = c.schema.value_col;
  if (!c.schema.label_col.empty()) schema["label_col"] = c.schema.label_col;
  return {
      {"dataset", c.dataset},
      {"output", c.output},
      {"seed", c.seed},
      {"schema", schema},
      {"preprocess",
       {{"z_threshold", c.preprocess.z_threshold},
        {"scale", scale_name(c.preprocess.scale)},
        {"dedup", c.preprocess.dedup},
        {"class_names", c.preprocess.class_names}}},
      {"featurizer", {{"fp_width", c.featurizer.fp_width}, {"fp_radius", c.featurizer.fp_radius}}},
      {"encoder",
       {{"margin", c.encoder.margin},
        {"p", c.encoder.p},
        {"batch_size", c.encoder.batch_size},
        {"epochs", c.encoder.epochs},
        {"learning_rate", c.encoder.learning_rate},
        {"hidden_dim", c.encoder.hidden_dim},
        {"latent_dim", c.encoder.latent_dim},
        {"class_balanced", c.encoder.class_balanced},
        {"l2_normalize", c.encoder.l2_normalize}}},
      {"gmm",
       {{"tol", c.gmm.fit.tol},
        {"max_iter", c.gmm.fit.max_iter},
        {"reg_scale", c.gmm.fit.reg_scale},
        {"empty_threshold", c.gmm.fit.empty_threshold},
        {"max_reseeds", c.gmm.fit.max_reseeds},
        {"per_class", c.gmm.per_class},
        {"per_class_components", c.gmm.per_class_components}}},
      {"decoder",
       {{"layers", c.decoder.layers},
        {"hidden", c.decoder.hidden},
        {"embed_dim", c.decoder.embed_dim},
        {"dropout", c.decoder.dropout},
        {"epochs", c.decoder.epochs},
        {"learning_rate", c.decoder.learning_rate},
        {"batch_size", c.decoder.batch_size},
        {"clip_norm", c.decoder.clip_norm},
        {"max_len", c.decoder.max_len}}},
      {"generation",
       {{"class", c.generation.target_class + 1},
        {"samples", c.generation.samples},
        {"hill_steps", c.generation.hill_steps},
        {"knn", c.generation.knn},
        {"alpha", c.generation.alpha},
        {"temperature", c.generation.temperature},
        {"reward", generate::to_string(c.generation.reward)},
        {"max_len", c.generation.max_len},
        {"retry_factor", c.generation.retry_factor}}},
  };
}

PipelineConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Bundle

void ModelBundle::validate() const {
  if (version != kBundleVersion)
    throw ModelMismatch("bundle version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kBundleVersion) + ")");
  const Eigen::Index d = latent_dim();
  if (encoder.d_in() != static_cast<Eigen::Index>(featurizer.dim()))
    throw ModelMismatch("encoder input width " + std::to_string(encoder.d_in()) + " != featurizer width " +
                        std::to_string(featurizer.dim()));
  if (decoder.latent_dim() != d)
    throw ModelMismatch("decoder latent dimension " + std::to_string(decoder.latent_dim()) +
                        " != encoder dimension " + std::to_string(d));
  if (decoder.vocab_size() != vocab.size())
    throw ModelMismatch("decoder output size " + std::to_string(decoder.vocab_size()) + " != vocabulary size " +
                        std::to_string(vocab.size()));
  const int C = num_classes();
  if (C < 2 || static_cast<int>(training.class_names.size()) != C)
    throw ModelMismatch("bundle class count is inconsistent");
  for (const auto& r : training.records)
    if (r.label < 1 || r.label > C) throw ModelMismatch("training label out of range");
  if (per_class) {
    if (static_cast<int>(class_gmms.size()) != C)
      throw ModelMismatch("per-class bundle has " + std::to_string(class_gmms.size()) + " mixtures for " +
                          std::to_string(C) + " classes");
    for (const auto& g : class_gmms)
      if (g.means.cols() != d) throw ModelMismatch("mixture dimension != encoder dimension");
  } else {
    if (gmm.means.cols() != d)
      throw ModelMismatch("mixture dimension " + std::to_string(gmm.means.cols()) + " != encoder dimension " +
                          std::to_string(d));
    if (gmm.means.rows() != C) throw ModelMismatch("mixture component count != class count");
    if (static_cast<int>(alignment.class_to_component.size()) != C ||
        static_cast<int>(alignment.component_to_class.size()) != C)
      throw ModelMismatch("alignment size != class count");
    for (int c = 0; c < C; ++c) {
      const int k = alignment.class_to_component[static_cast<std::size_t>(c)];
      if (k < 0 || k >= C || alignment.component_to_class[static_cast<std::size_t>(k)] != c)
        throw ModelMismatch("alignment is not a bijection");
    }
  }
}

json to_json(const ModelBundle& b) {
  json records = json::array();
  for (const auto& r : b.training.records) records.push_back({r.smiles, r.label});
  json j = {
      {"format", "vectorplus-bundle"},
      {"version", b.version},
      {"config", b.config},
      {"featurizer", {{"fp_width", b.featurizer.fp_width}, {"fp_radius", b.featurizer.fp_radius}}},
      {"l2_normalize", b.l2_normalize},
      {"encoder", encoder::to_json(b.encoder)},
      {"vocabulary", decoder::to_json(b.vocab)},
      {"decoder", decoder::to_json(b.decoder)},
      {"gmm_mode", b.per_class ? "per_class" : "joint"},
      {"training",
       {{"class_names", b.training.class_names},
        {"records", records},
        {"provenance", data::to_json(b.training.provenance)}}},
  };
  if (b.per_class) {
    json gs = json::array();
    for (const auto& g : b.class_gmms) gs.push_back(latent::to_json(g));
    j["class_gmms"] = gs;
  } else {
    j["gmm"] = latent::to_json(b.gmm);
    json affinity = json::array();
    for (Eigen::Index r = 0; r < b.alignment.affinity.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < b.alignment.affinity.cols(); ++c) row.push_back(b.alignment.affinity(r, c));
      affinity.push_back(row);
    }
    j["alignment"] = {{"affinity", affinity},
                      {"component_to_class", b.alignment.component_to_class},
                      {"class_to_component", b.alignment.class_to_component},
                      {"total", b.alignment.total}};
  }
  return j;
}

ModelBundle bundle_from_json(const json& j) {
  ModelBundle b;
  try {
    if (j.value("format", "") != "vectorplus-bundle") throw ModelMismatch("not a vectorplus bundle");
    b.version = j.at("version").get<int>();
    if (b.version != kBundleVersion)
      throw ModelMismatch("bundle version " + std::to_string(b.version) + " is not supported (expected " +
                          std::to_string(kBundleVersion) + ")");
    b.config = j.at("config");
    b.featurizer.fp_width = j.at("featurizer").at("fp_width").get<std::size_t>();
    b.featurizer.fp_radius = j.at("featurizer").at("fp_radius").get<int>();
    b.l2_normalize = j.at("l2_normalize").get<bool>();
    b.encoder = encoder::params_from_json(j.at("encoder"));
    b.vocab = decoder::vocabulary_from_json(j.at("vocabulary"));
    b.decoder = decoder::decoder_from_json(j.at("decoder"));
    const auto mode = j.at("gmm_mode").get<std::string>();
    if (mode != "joint" && mode != "per_class") throw ModelMismatch("unknown gmm_mode '" + mode + "'");
    b.per_class = mode == "per_class";
    if (b.per_class) {
      for (const auto& g : j.at("class_gmms")) b.class_gmms.push_back(latent::gmm_from_json(g));
    } else {
      b.gmm = latent::gmm_from_json(j.at("gmm"));
      const auto& a = j.at("alignment");
      const auto& aff = a.at("affinity");
      const auto rows = static_cast<Eigen::Index>(aff.size());
      const auto cols = rows ? static_cast<Eigen::Index>(aff[0].size()) : 0;
      b.alignment.affinity.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(aff[static_cast<std::size_t>(r)].size()) != cols)
          throw ModelMismatch("ragged affinity matrix");
        for (Eigen::Index c = 0; c < cols; ++c)
          b.alignment.affinity(r, c) = aff[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
      }
      b.alignment.component_to_class = a.at("component_to_class").get<std::vector<int>>();
      b.alignment.class_to_component = a.at("class_to_component").get<std::vector<int>>();
      b.alignment.total = a.at("total").get<double>();
    }
    const auto& t = j.at("training");
    b.training.class_names = t.at("class_names").get<std::vector<std::string>>();
    b.training.num_classes = static_cast<int>(b.training.class_names.size());
    for (const auto& r : t.at("records")) b.training.records.push_back({r.at(0).get<std::string>(), r.at(1).get<int>()});
    b.training.provenance = provenance_from_json(t.at("provenance"));
  } catch (const json::exception& e) {
    throw ModelMismatch(std::string("malformed bundle: ") + e.what());
  }
  b.validate();
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  bundle.validate();
  write_text(to_json(bundle).dump() + "\n", path);
}

ModelBundle load_bundle(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ModelMismatch(path + ": " + e.what());
  }
  return bundle_from_json(j);
}

MatrixXd training_embeddings(const ModelBundle& bundle) {
  const auto X = encoder::featurize_all(bundle.training.smiles(), bundle.featurizer);
  return encoder::embed_all(bundle.encoder, X, bundle.l2_normalize);
}

// ---------------------------------------------------------------------------
// Commands as library calls

PreprocessResult preprocess(const PipelineConfig& config) {
  return stage("preprocess", [&] {
    PreprocessResult out;
    const auto loaded = data::load_csv(config.dataset, config.schema);
    std::string mode;
    if (const auto* table = std::get_if<data::ActivityTable>(&loaded)) {
      mode = "activity";
      const auto filtered = data::zscore_filter(*table, config.preprocess.z_threshold, config.preprocess.scale);
      out.dataset = data::median_bin(data::log_transform(filtered), config.preprocess.dedup);
    } else {
      mode = "labels";
      const auto& labels = std::get<data::LabelTable>(loaded);
      const auto names =
          config.preprocess.class_names.empty() ? data::distinct_labels(labels) : config.preprocess.class_names;
      out.dataset = data::from_class_labels(labels, names, config.preprocess.dedup);
    }
    out.report = data::summary_json(out.dataset);
    out.report["mode"] = mode;
    out.report["input"] = config.dataset;
    out.report["z_threshold"] = config.preprocess.z_threshold;
    out.report["scale"] = scale_name(config.preprocess.scale);
    return out;
  });
}

TrainOutput train(const PipelineConfig& config, const data::LabeledDataset& dataset) {
  config.validate();
  TrainOutput out;
  auto& b = out.bundle;
  b.featurizer = config.featurizer;
  b.l2_normalize = config.encoder.l2_normalize;
  b.per_class = config.gmm.per_class;
  b.training = dataset;
  b.config = to_json(config);
  b.config.erase("output");  // not part of the model

  const auto smiles = dataset.smiles();
  const auto labels = dataset.labels();
  const int C = dataset.num_classes;
  json& report = out.report;

  const MatrixXd X = stage("encoder", [&] { return encoder::featurize_all(smiles, config.featurizer); });
  auto enc = stage("encoder", [&] { return encoder::train_encoder(X, labels, smiles, config.encoder); });
  b.encoder = std::move(enc.params);
  out.embeddings = std::move(enc.embeddings.vectors);
  const MatrixXd& Z = out.embeddings;
  report["encoder"] = {{"loss", enc.loss_trajectory}};
  log::info("encoder loss " + std::to_string(enc.loss_trajectory.empty() ? 0.0 : enc.loss_trajectory.front()) +
            " -> " + std::to_string(enc.loss_trajectory.empty() ? 0.0 : enc.loss_trajectory.back()));
  try {
    report["silhouette"] = {{"raw_features", eval::silhouette(X, labels)},
                            {"embeddings", eval::silhouette(Z, labels)}};
  } catch (const DegenerateClass& e) {
    report["silhouette"] = {{"error", e.what()}};
  }

  if (b.per_class) {
    auto fc = config.gmm.fit;
    fc.K = config.gmm.per_class_components;
    const auto fits = stage("gmm", [&] { return latent::fit_per_class(Z, labels, C, fc); });
    json traces = json::array();
    for (const auto& f : fits) {
      b.class_gmms.push_back(f.params);
      traces.push_back({{"trace", f.trace}, {"iterations", f.iterations}, {"converged", f.converged}});
    }
    report["gmm"] = {{"mode", "per_class"}, {"fits", traces}};
  } else {
    auto fc = config.gmm.fit;
    fc.K = C;
    const auto fit = stage("gmm", [&] { return latent::fit(Z, fc); });
    b.gmm = fit.params;
    report["gmm"] = {{"mode", "joint"},
                     {"trace", fit.trace},
                     {"iterations", fit.iterations},
                     {"converged", fit.converged},
                     {"lambda", fit.lambda},
                     {"reseed_iterations", fit.reseed_iterations}};
    const MatrixXd R = stage("align", [&] { return latent::e_step(b.gmm, Z); });
    b.alignment = stage("align", [&] { return latent::align(R, labels, C); });
    report["alignment"] = {{"class_to_component", b.alignment.class_to_component},
                           {"component_to_class", b.alignment.component_to_class},
                           {"total", b.alignment.total}};
    report["purity"] = eval::cluster_purity(R, labels, b.alignment.component_to_class);
    std::ostringstream msg;
    msg << "alignment";
    for (int c = 0; c < C; ++c) msg << " class " << c + 1 << "->component " << b.alignment.class_to_component[static_cast<std::size_t>(c)];
    log::info(msg.str());
  }

  b.vocab = stage("decoder", [&] { return decoder::Vocabulary::build(smiles); });
  const auto dec = stage("decoder", [&] {
    auto init = decoder::init_decoder(static_cast<int>(Z.cols()), b.vocab.size(), config.decoder, config.decoder.seed);
    return decoder::train_decoder(std::move(init), b.vocab, Z, smiles, config.decoder);
  });
  b.decoder = dec.params;
  int reconstructed = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const auto s = decoder::greedy_decode(b.decoder, b.vocab, Z.row(i).transpose(), config.decoder.max_len);
    if (s.smiles == smiles[static_cast<std::size_t>(i)]) ++reconstructed;
  }
  report["decoder"] = {{"loss", dec.loss_trace},
                       {"vocabulary_size", b.vocab.size()},
                       {"greedy_reconstruction", static_cast<double>(reconstructed) / static_cast<double>(Z.rows())}};
  report["dataset"] = data::summary_json(dataset);
  b.validate();
  return out;
}

generate::GenerationReport generate_for_class(const ModelBundle& bundle, const generate::GenerationConfig& config) {
  config.validate();
  const int C = bundle.num_classes();
  if (config.target_class < 0 || config.target_class >= C)
    throw ConfigError("class " + std::to_string(config.target_class + 1) + " out of range 1.." + std::to_string(C));
  const MatrixXd Z = training_embeddings(bundle);
  generate::GenerationModels m;
  m.decoder = &bundle.decoder;
  m.vocab = &bundle.vocab;
  m.training_canonical = canonical_set(bundle.training.smiles());
  const auto min_rows = static_cast<Eigen::Index>(config.knn);
  if (bundle.per_class) {
    m.gmm = &bundle.class_gmms[static_cast<std::size_t>(config.target_class)];
    m.references = rows_with_label(Z, bundle.training.labels(), config.target_class + 1);
    if (m.references.rows() < min_rows) m.references = Z;
    return generate::generate_class(m, -1, config);
  }
  const int k = bundle.alignment.class_to_component[static_cast<std::size_t>(config.target_class)];
  m.gmm = &bundle.gmm;
  m.references = generate::cluster_members(bundle.gmm, Z, k, min_rows);
  return generate::generate_class(m, k, config);
}

VerifyOutcome verify(const eval::VerifyConfig& config, bool grad_check_only) {
  VerifyOutcome out;
  out.passed = true;
  json checks = json::array();
  for (const auto& g : eval::gradient_checks(config.seed)) {
    checks.push_back({{"name", g.name}, {"rel_error", g.rel_error}, {"passed", g.passed}});
    out.passed = out.passed && g.passed;
  }
  out.report["gradient_checks"] = checks;
  if (grad_check_only) return out;
  json sources = json::array();
  for (const auto s : eval::all_sources()) {
    try {
      const auto r = eval::verify_theorem1(s, config);
      sources.push_back(eval::to_json(r));
      out.passed = out.passed && r.passed;
    } catch (const NonConvergence& e) {
      sources.push_back({{"source", eval::to_string(s)}, {"passed", false}, {"error", e.what()}});
      out.passed = false;
    }
  }
  out.report["sources"] = sources;
  out.report["samples"] = config.samples;
  out.report["tolerance"] = config.tolerance;
  out.report["passed"] = out.passed;
  return out;
}

// ---------------------------------------------------------------------------
// Commands with file output

void write_json(const json& j, const std::string& path) { write_text(j.dump(2) + "\n", path); }

std::vector<std::string> read_smiles_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(first, last - first + 1));
  }
  return out;
}

std::string cmd_preprocess(const PipelineConfig& config) {
  const auto result = preprocess(config);
  ensure_dir(config.output);
  const auto path = join(config.output, "dataset.csv");
  data::write_dataset(result.dataset, path);
  write_json(result.report, join(config.output, "preprocess.json"));
  log::info("preprocess: " + std::to_string(result.dataset.records.size()) + " records, " +
            std::to_string(result.dataset.num_classes) + " classes -> " + path);
  return path;
}

std::string cmd_train(const PipelineConfig& config, const std::string& dataset_path) {
  config.validate();
  data::LabeledDataset dataset;
  if (dataset_path.empty()) {
    dataset = preprocess(config).dataset;
  } else {
    dataset = stage("preprocess", [&] { return data::read_dataset(dataset_path); });
    const auto report = fs::path(dataset_path).parent_path() / "preprocess.json";
    if (fs::exists(report)) {
      try {
        dataset.provenance = provenance_from_json(json::parse(read_text(report.string())).at("provenance"));
      } catch (const json::exception&) {
        log::info("ignoring unreadable " + report.string());
      }
    }
  }
  const auto out = train(config, dataset);
  ensure_dir(config.output);
  const auto path = join(config.output, "bundle.json");
  save_bundle(out.bundle, path);
  write_json(out.report, join(config.output, "train_report.json"));
  encoder::EmbeddingSet set{out.embeddings, dataset.labels(), dataset.smiles()};
  encoder::write_embeddings_csv(set, join(config.output, "embeddings.csv"));
  return path;
}

generate::GenerationReport cmd_generate(const PipelineConfig& config, const std::string& bundle_path) {
  const auto bundle = load_bundle(bundle_path);
  if (bundle.latent_dim() != config.encoder.latent_dim)
    throw ModelMismatch("config latent_dim " + std::to_string(config.encoder.latent_dim) + " != bundle latent dimension " +
                        std::to_string(bundle.latent_dim()));
  if (bundle.featurizer.dim() != config.featurizer.dim())
    throw ModelMismatch("config featurizer width != bundle featurizer width");
  if (bundle.per_class != config.gmm.per_class)
    throw ModelMismatch(std::string("bundle holds a ") + (bundle.per_class ? "per-class" : "joint") +
                        " mixture but the config asks for a " + (config.gmm.per_class ? "per-class" : "joint") + " one");
  const auto& g = config.generation;
  const auto report = generate_for_class(bundle, g);
  ensure_dir(config.output);
  const auto stem = "class" + std::to_string(g.target_class + 1);
  generate::write_smiles(report.accepted(), join(config.output, "generated_" + stem + ".smi"));
  generate::write_smiles(report.raw(), join(config.output, "raw_" + stem + ".smi"));
  generate::write_report_csv(report, join(config.output, "generation_" + stem + ".csv"));
  write_json(generate::summary_json(report, g), join(config.output, "generation_" + stem + ".json"));
  log::info("class " + std::to_string(g.target_class + 1) + ": " + std::to_string(report.produced) + "/" +
            std::to_string(report.requested) + " molecules from " + std::to_string(report.attempts) + " attempts");
  return report;
}

eval::MetricsSummary cmd_evaluate(const std::string& generated_path, const std::string& training_path,
                                  const std::string& output_dir, const std::string& stem) {
  const auto generated = read_smiles_file(generated_path);
  const auto training = fs::path(training_path).extension() == ".csv" ? data::read_dataset(training_path).smiles()
                                                                      : read_smiles_file(training_path);
  const auto m = eval::metrics(generated, training);
  write_metrics(m, output_dir, stem);
  return m;
}

VerifyOutcome cmd_verify(const eval::VerifyConfig& config, bool grad_check_only, const std::string& output_dir) {
  auto out = verify(config, grad_check_only);
  ensure_dir(output_dir);
  write_json(out.report, join(output_dir, grad_check_only ? "verify_gradients.json" : "verify.json"));
  return out;
}

json cmd_run_all(const PipelineConfig& config) {
  config.validate();
  const auto dataset_path = cmd_preprocess(config);
  const auto bundle_path = cmd_train(config, dataset_path);
  const auto train_report = json::parse(read_text(join(config.output, "train_report.json")));
  const auto bundle = load_bundle(bundle_path);
  const int C = bundle.num_classes();
  const auto training = bundle.training.smiles();

  json classes = json::array();
  for (int c = 0; c < C; ++c) {
    auto cfg = config;
    cfg.generation.target_class = c;
    const auto report = cmd_generate(cfg, bundle_path);
    const auto stem = "class" + std::to_string(c + 1);
    const auto m = eval::metrics(metric_inputs(report), training);
    write_metrics(m, config.output, "metrics_" + stem);
    classes.push_back({{"class", c + 1},
                       {"generation", generate::summary_json(report, cfg.generation)},
                       {"metrics", eval::to_json(m)}});
  }
  json echo = to_json(config);
  echo.erase("output");
  json summary = {{"config", echo},
                  {"silhouette", train_report.value("silhouette", json::object())},
                  {"classes", classes}};
  if (train_report.contains("purity")) summary["purity"] = train_report["purity"];
  if (train_report.contains("alignment")) summary["alignment"] = train_report["alignment"];
  write_json(summary, join(config.output, "run_summary.json"));
  return summary;
}

}  // namespace vectorplus::pipeline
