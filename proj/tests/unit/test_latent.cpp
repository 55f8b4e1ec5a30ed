#include <cmath>
#include <numbers>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "support/synthetic.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/latent.hpp"

using namespace vectorplus;
using namespace vectorplus::latent;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GmmParams single(const VectorXd& mean, const MatrixXd& cov) {
  GmmParams p;
  p.weights = VectorXd::Ones(1);
  p.means = mean.transpose();
  p.covariances = {cov};
  return p;
}

GmmParams pair_at(double x, double spread = 1.0) {
  GmmParams p;
  p.weights = VectorXd::Constant(2, 0.5);
  p.means.resize(2, 2);
  p.means << -x, 0.0, x, 0.0;
  p.covariances = {spread * MatrixXd::Identity(2, 2), spread * MatrixXd::Identity(2, 2)};
  return p;
}

// Density from the explicit inverse and determinant.
double gaussian_pdf(const VectorXd& z, const VectorXd& mu, const MatrixXd& cov) {
  const VectorXd diff = z - mu;
  const double q = diff.dot(cov.inverse() * diff);
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(z.size())) /
                      std::sqrt(cov.determinant());
  return norm * std::exp(-0.5 * q);
}

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> n01;
  MatrixXd A(d, d);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
  return A * A.transpose() + 0.5 * MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("log_density") {
  SECTION("standard normal peak") {
    const auto p = single(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
    CHECK_THAT(log_density(p, VectorXd::Zero(2)), WithinAbs(-std::log(2.0 * std::numbers::pi), 1e-14));
    CHECK_THAT(log_density(p, VectorXd::Zero(2)), WithinAbs(-1.8379, 1e-4));
  }
  SECTION("identical components collapse") {
    std::mt19937_64 rng(1);
    const MatrixXd cov = random_spd(rng, 3);
    const VectorXd mu = VectorXd::LinSpaced(3, -1.0, 1.0);
    GmmParams twin;
    twin.weights = VectorXd::Constant(2, 0.5);
    twin.means.resize(2, 3);
    twin.means.row(0) = mu.transpose();
    twin.means.row(1) = mu.transpose();
    twin.covariances = {cov, cov};
    const VectorXd z = VectorXd::Constant(3, 0.3);
    CHECK_THAT(log_density(twin, z), WithinAbs(log_density(single(mu, cov), z), 1e-12));
  }
  SECTION("well separated: cross term negligible") {
    // Components 10 sigma apart; at mu_1 the other density is exp(-50) of the peak.
    const auto p = pair_at(5.0);
    const double expected = std::log(0.5) - std::log(2.0 * std::numbers::pi);
    const VectorXd z = (VectorXd(2) << -5.0, 0.0).finished();
    CHECK_THAT(log_density(p, z), WithinAbs(expected, 1e-20 + std::exp(-50.0) * 2));
  }
  SECTION("matches the explicit density formula") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    GmmParams p;
    p.weights = (VectorXd(3) << 0.2, 0.5, 0.3).finished();
    p.means = MatrixXd(3, 4);
    for (Eigen::Index i = 0; i < p.means.size(); ++i) p.means.data()[i] = n01(rng);
    for (int k = 0; k < 3; ++k) p.covariances.push_back(random_spd(rng, 4));
    for (int t = 0; t < 20; ++t) {
      VectorXd z(4);
      for (Eigen::Index i = 0; i < 4; ++i) z(i) = n01(rng);
      double density = 0.0;
      for (Eigen::Index k = 0; k < 3; ++k)
        density += p.weights(k) *
                   gaussian_pdf(z, p.means.row(k).transpose(), p.covariances[static_cast<std::size_t>(k)]);
      CHECK_THAT(log_density(p, z), WithinRel(std::log(density), 1e-10));
    }
  }
  SECTION("far points stay finite") {
    const auto p = pair_at(5.0, 0.01);
    CHECK(std::isfinite(log_density(p, VectorXd::Constant(2, 1e3))));
  }
  SECTION("errors") {
    auto p = single(VectorXd::Zero(2), MatrixXd::Zero(2, 2));
    CHECK_THROWS_AS(log_density(p, VectorXd::Zero(2)), SingularCovariance);
    CHECK_THROWS_AS(log_density(pair_at(1.0), VectorXd::Zero(3)), DimensionMismatch);
  }
}

TEST_CASE("e_step") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  MatrixXd Z(30, 2);
  for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = 3.0 * n01(rng);
  SECTION("single component owns everything") {
    CHECK((e_step(single(VectorXd::Zero(2), MatrixXd::Identity(2, 2)), Z).array() == 1.0).all());
  }
  SECTION("identical components split evenly") {
    CHECK(e_step(pair_at(0.0), Z).isApproxToConstant(0.5, 1e-15));
  }
  SECTION("density ratio exp(-50)") {
    const MatrixXd z = (MatrixXd(1, 2) << -5.0, 0.0).finished();
    const MatrixXd R = e_step(pair_at(5.0), z);
    CHECK_THAT(R(0, 0), WithinAbs(1.0 / (1.0 + std::exp(-50.0)), 1e-16));
    CHECK_THAT(R(0, 1), WithinRel(std::exp(-50.0), 1e-9));
  }
  SECTION("rows are stochastic even far from every component") {
    MatrixXd far = Z * 1e3;
    const MatrixXd R = e_step(pair_at(1.0, 0.01), far);
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      CHECK_THAT(R.row(i).sum(), WithinAbs(1.0, 1e-10));
      CHECK((R.row(i).array() >= 0.0).all());
    }
  }
}

TEST_CASE("m_step") {
  const auto data = testing::two_clusters(5, 40);
  const MatrixXd& Z = data.Z;
  auto sample_cov = [](const MatrixXd& X) {
    const MatrixXd c = X.rowwise() - X.colwise().mean();
    return MatrixXd(c.transpose() * c / static_cast<double>(X.rows()));
  };
  SECTION("one-hot responsibilities give per-cluster statistics") {
    MatrixXd R = MatrixXd::Zero(40, 2);
    for (int i = 0; i < 40; ++i) R(i, data.labels[static_cast<std::size_t>(i)] - 1) = 1.0;
    const auto p = m_step(Z, R, 0.0);
    const MatrixXd first = Z.topRows(20), second = Z.bottomRows(20);
    CHECK(p.means.row(0).isApprox(first.colwise().mean(), 1e-12));
    CHECK(p.covariances[1].isApprox(sample_cov(second), 1e-12));
    CHECK(p.weights.isApprox(VectorXd::Constant(2, 0.5)));
  }
  SECTION("single component gives global moments plus lambda") {
    const auto p = m_step(Z, MatrixXd::Ones(40, 1), 1e-3);
    CHECK(p.means.row(0).isApprox(Z.colwise().mean(), 1e-12));
    MatrixXd expected = sample_cov(Z);
    expected.diagonal().array() += 1e-3;
    CHECK(p.covariances[0].isApprox(expected, 1e-12));
    CHECK(p.weights(0) == 1.0);
  }
  SECTION("uniform responsibilities share the global moments") {
    const auto p = m_step(Z, MatrixXd::Constant(40, 3, 1.0 / 3.0), 0.0);
    for (int k = 0; k < 3; ++k) {
      CHECK(p.means.row(k).isApprox(Z.colwise().mean(), 1e-12));
      CHECK(p.covariances[static_cast<std::size_t>(k)].isApprox(sample_cov(Z), 1e-12));
      CHECK_THAT(p.weights(k), WithinAbs(1.0 / 3.0, 1e-15));
    }
  }
  SECTION("empty component") {
    MatrixXd R = MatrixXd::Zero(40, 2);
    R.col(0).setOnes();
    CHECK_THROWS_AS(m_step(Z, R, 0.0), EmptyComponent);
  }
}

TEST_CASE("fit") {
  SECTION("two clusters at (+-5, 0)") {
    const auto data = testing::two_clusters(11);
    FitConfig cfg;
    cfg.K = 2;
    cfg.seed = 4;
    const auto r = fit(data.Z, cfg);
    CHECK(r.converged);
    const auto& p = r.params;
    const Eigen::Index left = p.means(0, 0) < p.means(1, 0) ? 0 : 1;
    CHECK((p.means.row(left) - Eigen::RowVector2d(-5.0, 0.0)).cwiseAbs().maxCoeff() < 0.1);
    CHECK((p.means.row(1 - left) - Eigen::RowVector2d(5.0, 0.0)).cwiseAbs().maxCoeff() < 0.1);
    CHECK(std::abs(p.weights(0) - 0.5) < 0.05);
    p.validate();
  }
  SECTION("log-likelihood trace is non-decreasing") {
    std::mt19937_64 meta(99);
    std::uniform_real_distribution<double> spread(0.2, 2.0);
    for (int t = 0; t < 50; ++t) {
      MatrixXd centers(3, 3);
      std::normal_distribution<double> n01;
      for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 3.0 * n01(meta);
      const auto data = testing::gaussian_clusters(centers, 30, spread(meta), meta());
      FitConfig cfg;
      cfg.K = 1 + t % 4;
      cfg.seed = static_cast<std::uint64_t>(t);
      const auto r = fit(data.Z, cfg);
      REQUIRE(r.reseed_iterations.empty());
      for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] - 1e-9);
      for (const auto& S : r.params.covariances) CHECK(S.isApprox(S.transpose()));
      CHECK_THAT(r.params.weights.sum(), WithinAbs(1.0, 1e-12));
    }
  }
  SECTION("monotone under strong regularization") {
    // Small components collapsing onto a few points are where the plain
    // regularized update would lower the likelihood.
    std::mt19937_64 meta(515);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> spread(0.3, 2.0);
    for (int t = 0; t < 40; ++t) {
      const int K = 2 + t % 3;
      MatrixXd centers(K, 2 + t % 2);
      for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 4.0 * n01(meta);
      const std::uint64_t data_seed = meta();
      const auto data = testing::gaussian_clusters(centers, 40, spread(meta), data_seed);
      for (double reg : {1e-6, 1e-3, 1e-2}) {
        FitConfig cfg;
        cfg.K = K;
        cfg.seed = static_cast<std::uint64_t>(t);
        cfg.reg_scale = reg;
        const auto r = fit(data.Z, cfg);
        for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] - 1e-9);
      }
    }
  }
  SECTION("K = 1 reaches the sample moments after one round") {
    const auto data = testing::two_clusters(2, 50);
    FitConfig cfg;
    cfg.K = 1;
    const auto r = fit(data.Z, cfg);
    CHECK(r.converged);
    // Round 1 lands on the moments; round 2 only confirms the fixed point.
    REQUIRE(r.trace.size() == 3);
    CHECK(r.trace[2] == r.trace[1]);
    FitConfig one = cfg;
    one.max_iter = 1;
    const auto first = fit(data.Z, one);
    CHECK(first.params.means.row(0).isApprox(data.Z.colwise().mean(), 1e-12));
    CHECK(first.params.covariances[0].isApprox(r.params.covariances[0], 1e-12));
  }
  SECTION("n = K distinct points") {
    MatrixXd Z(2, 2);
    Z << 0.0, 0.0, 3.0, 1.0;
    FitConfig cfg;
    cfg.K = 2;
    cfg.max_iter = 200;
    const auto r = fit(Z, cfg);
    const auto& p = r.params;
    const Eigen::Index first = p.means(0, 0) < 1.5 ? 0 : 1;
    CHECK(p.means.row(first).isApprox(Z.row(0).eval(), 1e-6));
    CHECK((p.means.row(1 - first) - Z.row(1)).norm() < 1e-6);
    for (const auto& S : p.covariances)
      CHECK((S - r.lambda * MatrixXd::Identity(2, 2)).norm() < 1e-6);
  }
  SECTION("regularization scales with the data") {
    const auto data = testing::two_clusters(3, 100);
    const MatrixXd c = data.Z.rowwise() - data.Z.colwise().mean();
    const double tr = (c.transpose() * c).trace() / 100.0;
    CHECK_THAT(regularization(data.Z, 1e-6), WithinRel(1e-6 * tr / 2.0, 1e-12));
  }
  SECTION("deterministic per seed") {
    const auto data = testing::two_clusters(8, 100);
    FitConfig cfg;
    cfg.seed = 5;
    CHECK(fit(data.Z, cfg).trace == fit(data.Z, cfg).trace);
  }
  SECTION("errors") {
    FitConfig cfg;
    cfg.K = 3;
    CHECK_THROWS_AS(fit(MatrixXd::Zero(2, 2), cfg), InsufficientData);
  }
  SECTION("coincident points converge without empty components") {
    FitConfig cfg;
    cfg.K = 2;
    const auto r = fit(MatrixXd::Zero(6, 2), cfg);
    CHECK(r.converged);
    CHECK(r.reseed_iterations.empty());
  }
  SECTION("persistently empty components fail after bounded re-seeds") {
    const auto data = testing::two_clusters(14, 40);
    FitConfig cfg;
    cfg.K = 2;
    cfg.empty_threshold = 1e9;
    CHECK_THROWS_AS(fit(data.Z, cfg), EmptyComponent);
  }
}

TEST_CASE("sample") {
  SECTION("mean within the statistical bound") {
    const VectorXd mu = (VectorXd(2) << 1.0, -2.0).finished();
    const auto p = single(mu, 1e-6 * MatrixXd::Identity(2, 2));
    const MatrixXd X = sample(p, 0, 10000, 7);
    const double bound = 4.0 * 1e-3 / std::sqrt(10000.0);
    CHECK((X.colwise().mean().transpose() - mu).cwiseAbs().maxCoeff() < bound);
  }
  SECTION("standard normal covariance") {
    const auto p = single(VectorXd::Zero(3), MatrixXd::Identity(3, 3));
    const MatrixXd X = sample(p, 0, 10000, 8);
    const MatrixXd c = X.rowwise() - X.colwise().mean();
    const MatrixXd cov = c.transpose() * c / 10000.0;
    CHECK((cov - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.1);
  }
  SECTION("correlated covariance is reproduced") {
    MatrixXd S(2, 2);
    S << 2.0, 0.8, 0.8, 1.0;
    const MatrixXd X = sample(single(VectorXd::Zero(2), S), 0, 20000, 9);
    const MatrixXd c = X.rowwise() - X.colwise().mean();
    CHECK(((c.transpose() * c / 20000.0) - S).cwiseAbs().maxCoeff() < 0.1);
  }
  SECTION("count zero and determinism") {
    const auto p = pair_at(2.0);
    CHECK(sample(p, 1, 0, 1).rows() == 0);
    CHECK(sample(p, 1, 5, 3) == sample(p, 1, 5, 3));
    CHECK(sample_mixture(p, 5, 3) == sample_mixture(p, 5, 3));
  }
  SECTION("errors") {
    CHECK_THROWS_AS(sample(single(VectorXd::Zero(2), MatrixXd::Zero(2, 2)), 0, 3, 1), CholeskyFailure);
    CHECK_THROWS_AS(sample(pair_at(1.0), 2, 3, 1), DimensionMismatch);
  }
}

TEST_CASE("affinity") {
  SECTION("hand computed") {
    MatrixXd R(4, 2);
    R << 0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8;
    const MatrixXd phi = affinity(R, {1, 1, 2, 2}, 2);
    CHECK_THAT(phi(0, 0), WithinAbs(1.5, 1e-15));
    CHECK_THAT(phi(1, 0), WithinAbs(0.5, 1e-15));
    CHECK_THAT(phi(0, 1), WithinAbs(0.5, 1e-15));
    CHECK_THAT(phi(1, 1), WithinAbs(1.5, 1e-15));
  }
  SECTION("aligned one-hot gives a permutation matrix") {
    MatrixXd R = MatrixXd::Zero(3, 3);
    R(0, 2) = R(1, 0) = R(2, 1) = 1.0;
    const MatrixXd phi = affinity(R, {1, 2, 3}, 3);
    CHECK((phi * phi.transpose()).isIdentity());
  }
  SECTION("column sums equal class counts") {
    const auto data = testing::two_clusters(12, 60, 3.0);
    FitConfig cfg;
    const auto r = fit(data.Z, cfg);
    const MatrixXd R = e_step(r.params, data.Z);
    const MatrixXd phi = affinity(R, data.labels, 2);
    CHECK_THAT(phi.col(0).sum(), WithinAbs(30.0, 1e-10));
    CHECK_THAT(phi.col(1).sum(), WithinAbs(30.0, 1e-10));
  }
}

TEST_CASE("assign") {
  SECTION("small cases") {
    CHECK(assign(MatrixXd::Identity(3, 3)) == std::vector<int>{0, 1, 2});
    MatrixXd swap(2, 2);
    swap << 0, 1, 1, 0;
    CHECK(assign(swap) == std::vector<int>{1, 0});
    CHECK(assign(MatrixXd::Zero(4, 4)) == std::vector<int>{0, 1, 2, 3});
    CHECK_THROWS_AS(assign(MatrixXd::Zero(2, 3)), NonSquare);
  }
  SECTION("ties resolve to the lexicographically smallest permutation") {
    MatrixXd phi(3, 3);
    phi << 1, 1, 0,
           1, 1, 0,
           0, 0, 2;
    CHECK(assign(phi) == std::vector<int>{0, 1, 2});
    phi << 0, 1, 1,
           1, 0, 1,
           1, 1, 0;
    CHECK(assign(phi) == std::vector<int>{1, 2, 0});
  }
  SECTION("matches brute force on random matrices") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> small(0, 3);
    for (int K = 2; K <= 6; ++K) {
      for (int t = 0; t < 200; ++t) {
        MatrixXd phi(K, K);
        // Every other matrix uses coarse integers so that ties are common.
        for (Eigen::Index i = 0; i < phi.size(); ++i)
          phi.data()[i] = t % 2 ? u(rng) : static_cast<double>(small(rng));
        CHECK(assign(phi) == testing::brute_force_assignment(phi));
      }
    }
  }
  SECTION("align builds inverse maps") {
    MatrixXd R(4, 2);
    R << 0.1, 0.9, 0.2, 0.8, 0.7, 0.3, 0.9, 0.1;
    const auto a = align(R, {1, 1, 2, 2}, 2);
    CHECK(a.component_to_class == std::vector<int>{1, 0});
    CHECK(a.class_to_component == std::vector<int>{1, 0});
    CHECK_THAT(a.total, WithinAbs(3.3, 1e-12));
  }
}

TEST_CASE("fit_per_class and persistence") {
  const auto data = testing::two_clusters(13, 80);
  FitConfig cfg;
  cfg.K = 1;
  const auto fits = fit_per_class(data.Z, data.labels, 2, cfg);
  REQUIRE(fits.size() == 2);
  CHECK(fits[0].params.means(0, 0) < -4.5);
  CHECK(fits[1].params.means(0, 0) > 4.5);

  const auto j = to_json(fits[0].params);
  const auto back = gmm_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.covariances[0] == fits[0].params.covariances[0]);
  CHECK(to_json(back).dump() == j.dump());
  auto bad = j;
  bad["weights"] = {0.7};
  CHECK_THROWS_AS(gmm_from_json(bad), SchemaError);
}
