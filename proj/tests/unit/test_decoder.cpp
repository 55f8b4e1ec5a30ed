#include <cmath>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "vectorplus/decoder.hpp"
#include "vectorplus/errors.hpp"

using namespace vectorplus;
using namespace vectorplus::decoder;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DecoderConfig tiny_config() {
  DecoderConfig c;
  c.layers = 2;
  c.hidden = 4;
  c.embed_dim = 3;
  c.dropout = 0.0;
  return c;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("split_tokens and Vocabulary") {
  CHECK(split_tokens("ClCCBr") == std::vector<std::string>{"Cl", "C", "C", "Br"});
  CHECK(split_tokens("C%12CC%12") == std::vector<std::string>{"C", "%12", "C", "C", "%12"});
  CHECK(split_tokens("[NH4+]") == std::vector<std::string>{"[", "N", "H", "4", "+", "]"});
  const auto vocab = Vocabulary::build({"CCO", "c1ccccc1Cl"});
  CHECK(vocab.tokens() == std::vector<std::string>{"<pad>", "<bos>", "<eos>", "1", "C", "Cl", "O", "c"});
  CHECK(vocab.decode(vocab.encode("c1ccccc1Cl")) == "c1ccccc1Cl");
  CHECK(vocab.decode({Vocabulary::kBos, vocab.index("C"), Vocabulary::kEos, vocab.index("O")}) == "C");
  CHECK_THROWS_AS(vocab.encode("CCN"), UnknownToken);
  CHECK(vocabulary_from_json(to_json(vocab)).tokens() == vocab.tokens());
  CHECK_THROWS_AS(Vocabulary::from_tokens({"C", "<pad>"}), SchemaError);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<pad>", "<bos>", "<eos>", "C", "C"}), SchemaError);
}

TEST_CASE("init_hidden") {
  auto p = init_decoder(5, 7, tiny_config(), 1);
  const VectorXd z = VectorXd::LinSpaced(5, -3.0, 3.0);
  const auto h = init_hidden(p, z);
  REQUIRE(h.size() == 2);
  for (const auto& v : h) {
    CHECK(v.size() == 4);
    CHECK((v.array().abs() < 1.0).all());
  }
  p.W_init.setZero();
  p.b_init.setZero();
  for (const auto& v : init_hidden(p, z)) CHECK(v.isZero());
  CHECK_THROWS_AS(init_hidden(p, VectorXd::Zero(4)), DimensionMismatch);
}

TEST_CASE("decode_step") {
  SECTION("distribution sums to one") {
    const auto p = init_decoder(3, 9, tiny_config(), 2);
    auto h = init_hidden(p, VectorXd::Ones(3));
    for (int token = 0; token < 9; ++token) {
      const auto res = decode_step(p, h, token);
      CHECK_THAT(res.probs.sum(), WithinAbs(1.0, 1e-6));
      CHECK((res.probs.array() >= 0.0).all());
    }
    CHECK_THROWS_AS(decode_step(p, h, 9), UnknownToken);
  }
  SECTION("zero weights give softmax of the output bias") {
    auto p = init_decoder(3, 5, tiny_config(), 3);
    for (auto& l : p.layers) {
      l.W_ih.setZero();
      l.W_hh.setZero();
      l.b_ih.setZero();
      l.b_hh.setZero();
    }
    p.W_out.setZero();
    p.b_out << 0.1, -0.4, 2.0, 0.0, 1.0;
    const VectorXd expected = p.b_out.array().exp() / p.b_out.array().exp().sum();
    for (int token : {0, 3, 4}) {
      const auto res = decode_step(p, init_hidden(p, VectorXd::Random(3)), token);
      CHECK(res.probs.isApprox(expected, 1e-12));
    }
  }
  SECTION("one GRU cell by hand") {
    // Vocabulary {pad, bos, eos, C}; one layer, hidden 2, embedding width 1.
    DecoderConfig c;
    c.layers = 1;
    c.hidden = 2;
    c.embed_dim = 1;
    auto p = init_decoder(1, 4, c, 4);
    p.W_init << 0.5, -1.0;
    p.b_init << 0.0, 0.2;
    p.embedding << 0.0, 1.0, -1.0, 0.3;
    auto& g = p.layers[0];
    g.W_ih << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6;
    g.W_hh << 0.1, 0.0, 0.0, 0.1, 0.2, -0.1, 0.3, 0.3, -0.2, 0.4, 0.5, 0.5;
    g.b_ih << 0.0, 0.1, 0.0, -0.1, 0.2, 0.0;
    g.b_hh << 0.05, 0.0, 0.0, 0.0, -0.2, 0.1;
    p.W_out << 0, 0, 0, 0, 1.0, -1.0, 0.5, 2.0;
    p.b_out << 0.0, 0.0, 0.3, -0.1;

    const double z = 0.8;
    const double h0[2] = {std::tanh(0.5 * z + 0.0), std::tanh(-1.0 * z + 0.2)};
    const double x = p.embedding(1, 0);  // BOS
    double h1[2];
    for (int j = 0; j < 2; ++j) {
      auto Whh = [&](int row) { return g.W_hh(row, 0) * h0[0] + g.W_hh(row, 1) * h0[1]; };
      const double r = scalar_sigmoid(g.W_ih(j, 0) * x + g.b_ih(j) + Whh(j) + g.b_hh(j));
      const double u = scalar_sigmoid(g.W_ih(2 + j, 0) * x + g.b_ih(2 + j) + Whh(2 + j) + g.b_hh(2 + j));
      const double n = std::tanh(g.W_ih(4 + j, 0) * x + g.b_ih(4 + j) + r * (Whh(4 + j) + g.b_hh(4 + j)));
      h1[j] = (1.0 - u) * n + u * h0[j];
    }
    double logits[4], sum = 0.0;
    for (int v = 0; v < 4; ++v) {
      logits[v] = p.W_out(v, 0) * h1[0] + p.W_out(v, 1) * h1[1] + p.b_out(v);
      sum += std::exp(logits[v]);
    }
    const auto res = decode_step(p, init_hidden(p, VectorXd::Constant(1, z)), Vocabulary::kBos);
    CHECK_THAT(res.hidden[0](0), WithinAbs(h1[0], 1e-14));
    CHECK_THAT(res.hidden[0](1), WithinAbs(h1[1], 1e-14));
    CHECK_THAT(res.probs(3), WithinAbs(std::exp(logits[3]) / sum, 1e-14));
  }
}

TEST_CASE("teacher-forced gradients match finite differences") {
  const std::vector<std::vector<int>> seqs = {{3, 4, 5}, {5, 3}, {4}};
  MatrixXd Z(3, 3);
  Z << 0.2, -0.5, 1.0, -1.0, 0.3, 0.1, 0.7, 0.7, -0.4;
  for (double dropout : {0.0, 0.3}) {
    INFO("dropout " << dropout);
    auto p = init_decoder(3, 6, tiny_config(), 5);
    auto loss = [&] {
      std::mt19937_64 rng(17);
      return teacher_forced_loss(p, Z, seqs, dropout, dropout > 0 ? &rng : nullptr, nullptr).loss;
    };
    DecoderParams grads;
    {
      std::mt19937_64 rng(17);
      teacher_forced_loss(p, Z, seqs, dropout, dropout > 0 ? &rng : nullptr, &grads);
    }
    auto pb = p.blocks();
    auto gb = grads.blocks();
    double num_sq = 0.0, diff_sq = 0.0;
    for (std::size_t b = 0; b < pb.size(); ++b) {
      for (Eigen::Index i = 0; i < pb[b].size(); ++i) {
        const double saved = pb[b](i);
        pb[b](i) = saved + 1e-6;
        const double up = loss();
        pb[b](i) = saved - 1e-6;
        const double down = loss();
        pb[b](i) = saved;
        const double numeric = (up - down) / 2e-6;
        num_sq += numeric * numeric;
        diff_sq += (numeric - gb[b](i)) * (numeric - gb[b](i));
      }
      // Per-block check as well, so an error in a small block is not hidden.
      Eigen::VectorXd numeric_block(pb[b].size());
      for (Eigen::Index i = 0; i < pb[b].size(); ++i) {
        const double saved = pb[b](i);
        pb[b](i) = saved + 1e-6;
        const double up = loss();
        pb[b](i) = saved - 1e-6;
        const double down = loss();
        pb[b](i) = saved;
        numeric_block(i) = (up - down) / 2e-6;
      }
      const double scale = std::max({numeric_block.norm(), gb[b].norm(), 1e-6});
      INFO("block " << b);
      CHECK((numeric_block - gb[b]).norm() / scale < 1e-4);
    }
    CHECK(std::sqrt(diff_sq / num_sq) < 1e-4);
  }
}

TEST_CASE("train_decoder") {
  const std::vector<std::string> corpus = {"CCO", "CCN", "c1ccccc1", "CC(=O)O", "OCCO", "CCCl"};
  const auto vocab = Vocabulary::build(corpus);
  MatrixXd Z(6, 4);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = n01(rng);
  DecoderConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.seed = 9;

  SECTION("initial loss is close to log |V|") {
    const auto p = init_decoder(4, vocab.size(), cfg, 1);
    std::vector<std::vector<int>> seqs;
    for (const auto& s : corpus) seqs.push_back(vocab.encode(s));
    const double loss = teacher_forced_loss(p, Z, seqs, 0.0, nullptr, nullptr).loss;
    CHECK_THAT(loss, WithinRel(std::log(static_cast<double>(vocab.size())), 0.1));
  }
  SECTION("zero epochs leaves parameters unchanged") {
    auto c = cfg;
    c.epochs = 0;
    const auto p = init_decoder(4, vocab.size(), c, 1);
    const auto r = train_decoder(p, vocab, Z, corpus, c);
    CHECK(to_json(r.params).dump() == to_json(p).dump());
    CHECK(r.loss_trace.empty());
  }
  SECTION("loss decreases over the first epochs and is reproducible") {
    auto c = cfg;
    c.epochs = 10;
    const auto p = init_decoder(4, vocab.size(), c, 1);
    const auto a = train_decoder(p, vocab, Z, corpus, c);
    for (std::size_t i = 1; i < a.loss_trace.size(); ++i) CHECK(a.loss_trace[i] < a.loss_trace[i - 1]);
    const auto b = train_decoder(p, vocab, Z, corpus, c);
    CHECK(a.loss_trace == b.loss_trace);
  }
  SECTION("unknown tokens are rejected") {
    const auto p = init_decoder(4, vocab.size(), cfg, 1);
    std::vector<std::string> bad = corpus;
    bad[0] = "CCS";
    CHECK_THROWS_AS(train_decoder(p, vocab, Z, bad, cfg), UnknownToken);
  }
}

TEST_CASE("single-molecule overfit reconstructs under greedy decoding") {
  const std::vector<std::string> corpus = {"CC(=O)Nc1ccc(O)cc1"};
  const auto vocab = Vocabulary::build(corpus);
  DecoderConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.epochs = 300;
  cfg.learning_rate = 1e-2;
  cfg.dropout = 0.0;
  const MatrixXd Z = MatrixXd::Constant(1, 4, 0.5);
  const auto r = train_decoder(init_decoder(4, vocab.size(), cfg, 2), vocab, Z, corpus, cfg);
  const auto out = greedy_decode(r.params, vocab, Z.row(0).transpose(), 150);
  CHECK(out.smiles == corpus[0]);
  CHECK_FALSE(out.truncated);
  // Greedy ignores the seed; sampling is reproducible per seed.
  CHECK(sample_smiles(r.params, vocab, Z.row(0).transpose(), 1.0, 150, 1, true).smiles == corpus[0]);
  CHECK(sample_smiles(r.params, vocab, Z.row(0).transpose(), 1.5, 150, 42).smiles ==
        sample_smiles(r.params, vocab, Z.row(0).transpose(), 1.5, 150, 42).smiles);
}

TEST_CASE("sample_smiles limits") {
  const auto vocab = Vocabulary::build({"CCO"});
  DecoderConfig cfg = tiny_config();
  const auto p = init_decoder(2, vocab.size(), cfg, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sample_smiles(p, vocab, VectorXd::Ones(2), 1.0, 1, seed);
    CHECK(split_tokens(s.smiles).size() <= 1);
    CHECK(s.truncated == !s.smiles.empty());
    CHECK(s.smiles.find('<') == std::string::npos);
  }
  CHECK_THROWS_AS(sample_smiles(p, vocab, VectorXd::Ones(2), 0.0, 10, 1), ConfigError);
  CHECK_THROWS_AS(sample_smiles(p, vocab, VectorXd::Ones(2), 1.0, 0, 1), ConfigError);
}

TEST_CASE("decoder params round-trip through JSON") {
  const auto p = init_decoder(3, 6, tiny_config(), 8);
  const auto j = to_json(p);
  const auto back = decoder_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  auto bad = j;
  bad["W_out"]["rows"] = 5;
  CHECK_THROWS_AS(decoder_from_json(bad), SchemaError);
}
