#include <cmath>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "vectorplus/errors.hpp"
#include "vectorplus/eval.hpp"

using namespace vectorplus;
using namespace vectorplus::eval;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

MatrixXd random_spd(Eigen::Index d, std::mt19937_64& rng, double ridge = 0.3) {
  std::normal_distribution<double> n01;
  MatrixXd B(d, d);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = n01(rng);
  return B * B.transpose() + ridge * MatrixXd::Identity(d, d);
}

// Two-tailed p by Simpson integration of the t density over [0, |t|].
double simpson_two_tailed_p(double t, double nu) {
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * M_PI);
  auto f = [&](double x) { return c * std::pow(1 + x * x / nu, -(nu + 1) / 2); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = f(0) + f(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST_CASE("metrics") {
  const std::vector<std::string> train = {"CCO", "c1ccccc1"};
  auto m = metrics({"CCO", "C("}, train);
  CHECK(m.validity == 0.5);
  m = metrics({"CCO", "OCC"}, {"CCC"});
  CHECK(m.uniqueness == 0.5);
  CHECK(m.novelty == 1.0);
  m = metrics({"CCO", "OCC", "c1ccccc1"}, train);
  CHECK(m.novelty == 0.0);
  CHECK(m.mean_max_tanimoto == 1.0);
  m = metrics({}, train);
  CHECK(m.validity == 0.0);
  CHECK(m.mw.counts.empty());
  CHECK_THROWS_AS(metrics({"CCO"}, {}), InsufficientData);

  SECTION("chained denominators") {
    const std::vector<std::string> gen = {"CCO", "OCC", "CCN", "C1CC", "", "c1ccccc1", "CCCl", "CCCl", "x"};
    const auto s = metrics(gen, train, 5);
    CHECK(s.total == 9);
    CHECK(s.valid == 6);
    CHECK(s.unique == 4);
    CHECK(s.novel == 2);
    CHECK(s.valid <= s.total);
    CHECK(s.unique <= s.valid);
    CHECK(s.novel <= s.unique);
    for (double f : {s.validity, s.uniqueness, s.novelty, s.mean_max_tanimoto, s.max_tanimoto}) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
    int counted = 0;
    for (int c : s.mw.counts) counted += c;
    CHECK(counted == s.unique);
    CHECK(s.mw.edges.size() == 6);
  }
}

TEST_CASE("histogram") {
  const auto h = histogram({0.0, 1.0, 2.0, 3.0, 4.0}, 4);
  CHECK(h.edges == std::vector<double>{0, 1, 2, 3, 4});
  CHECK(h.counts == std::vector<int>{1, 1, 1, 2});
  const auto one = histogram({7.0, 7.0}, 2);
  CHECK(one.counts == std::vector<int>{0, 2});
}

TEST_CASE("gaussian_cross_entropy closed form") {
  const MatrixXd I2 = MatrixXd::Identity(2, 2);
  CHECK_THAT(gaussian_cross_entropy(VectorXd::Zero(2), I2, VectorXd::Zero(2), I2),
             WithinAbs(1.0 + std::log(2 * M_PI), 1e-12));
  const VectorXd delta = Eigen::Vector2d(0.7, -1.3);
  CHECK_THAT(gaussian_cross_entropy(VectorXd::Zero(2), I2, delta, I2) -
                 gaussian_cross_entropy(VectorXd::Zero(2), I2, VectorXd::Zero(2), I2),
             WithinAbs(0.5 * delta.squaredNorm(), 1e-12));
  const MatrixXd one = MatrixXd::Ones(1, 1);
  CHECK_THAT(gaussian_cross_entropy(VectorXd::Zero(1), one, VectorXd::Zero(1), 4.0 * one),
             WithinAbs(0.125 + 0.5 * std::log(4.0) + 0.5 * std::log(2 * M_PI), 1e-12));
  CHECK_THAT(gaussian_cross_entropy(VectorXd::Zero(1), one, VectorXd::Zero(1), 4.0 * one),
             WithinAbs(1.7371, 1e-4));
  MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(gaussian_cross_entropy(VectorXd::Zero(2), I2, VectorXd::Zero(2), indefinite), NotPD);
  CHECK_THROWS_AS(gaussian_cross_entropy(VectorXd::Zero(2), indefinite, VectorXd::Zero(2), I2), NotPD);
}

TEST_CASE("gaussian_cross_entropy agrees with a Monte Carlo estimate") {
  std::mt19937_64 rng(3);
  const MatrixXd Sigma = random_spd(2, rng);
  const MatrixXd Lambda = random_spd(2, rng);
  const VectorXd mu = Eigen::Vector2d(0.5, -1.0), nu = Eigen::Vector2d(-0.2, 0.4);
  // Draw from a non-Gaussian P with the same moments: a shifted, scaled
  // uniform square; cross-entropy against a Gaussian depends only on moments.
  const MatrixXd A = Sigma.llt().matrixL();
  std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
  const int n = 400000;
  MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    const VectorXd e = Eigen::Vector2d(u(rng), u(rng));
    X.row(i) = (mu + A * e).transpose();
  }
  const MatrixXd L = Lambda.llt().matrixL();
  const double mc = empirical_cross_entropy(X, nu, L).value;
  CHECK_THAT(mc, WithinRel(gaussian_cross_entropy(mu, Sigma, nu, Lambda), 5e-3));
}

TEST_CASE("cross-entropy is minimized at the moments") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (Eigen::Index d : {1, 2, 4}) {
    const MatrixXd Sigma = random_spd(d, rng);
    VectorXd mu(d);
    for (Eigen::Index i = 0; i < d; ++i) mu(i) = n01(rng);
    const double best = gaussian_cross_entropy(mu, Sigma, mu, Sigma);
    for (int trial = 0; trial < 100; ++trial) {
      VectorXd nu = mu;
      for (Eigen::Index i = 0; i < d; ++i) nu(i) += 0.3 * n01(rng);
      MatrixXd E(d, d);
      for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = 0.2 * n01(rng);
      const MatrixXd Lambda = Sigma + E * E.transpose() * (trial % 2 ? 1.0 : 0.0) +
                              (trial % 2 ? 0.0 : 0.1) * MatrixXd::Identity(d, d);
      CHECK(gaussian_cross_entropy(mu, Sigma, nu, Lambda) > best);
      CHECK(gaussian_cross_entropy(mu, Sigma, mu, Lambda) > best);
      // Shrinking the covariance also costs.
      CHECK(gaussian_cross_entropy(mu, Sigma, mu, 0.7 * Sigma) > best);
    }
  }
}

TEST_CASE("empirical cross-entropy equals the closed form at the sample moments") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  MatrixXd X(500, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = std::pow(n01(rng), 3);
  const VectorXd m = X.colwise().mean().transpose();
  const MatrixXd C = X.rowwise() - m.transpose();
  const MatrixXd S = C.transpose() * C / 500.0;
  const MatrixXd Lambda = random_spd(2, rng);
  const VectorXd nu = Eigen::Vector2d(0.3, -0.1);
  CHECK_THAT(empirical_cross_entropy(X, nu, Lambda.llt().matrixL()).value,
             WithinRel(gaussian_cross_entropy(m, S, nu, Lambda), 1e-12));
}

TEST_CASE("gradient checks") {
  const auto checks = gradient_checks(1);
  CHECK(checks.size() == 7);
  for (const auto& c : checks) {
    INFO(c.name << " rel error " << c.rel_error);
    CHECK(c.passed);
    CHECK(c.rel_error < 1e-5);
  }
}

TEST_CASE("verify_theorem1") {
  VerifyConfig cfg;
  cfg.samples = 100000;
  for (auto source : all_sources()) {
    const auto r = verify_theorem1(source, cfg);
    INFO(to_string(source) << " mean err " << r.mean_error << " cov err " << r.cov_error << " iters "
                           << r.iterations);
    CHECK(r.converged);
    CHECK(r.passed);
    CHECK(r.mean_error < 1e-4);
    CHECK(r.cov_error < 1e-4);
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) CHECK(r.trajectory[i] <= r.trajectory[i - 1]);
  }
  SECTION("uniform square moments") {
    const auto r = verify_theorem1(Source::kUniformSquare, cfg);
    CHECK_THAT(r.nu(0), WithinRel(0.5, 0.02));
    CHECK_THAT(r.nu(1), WithinRel(0.5, 0.02));
    CHECK_THAT(r.Lambda(0, 0), WithinRel(1.0 / 12.0, 0.02));
    CHECK_THAT(r.Lambda(1, 1), WithinRel(1.0 / 12.0, 0.02));
    CHECK(std::abs(r.Lambda(0, 1)) < 0.02 / 12.0);
  }
  SECTION("mixture variance is component variance plus squared offset") {
    const auto r = verify_theorem1(Source::kTwoModeMixture, cfg);
    CHECK(std::abs(r.nu(0)) < 0.02 * std::sqrt(10.0));
    CHECK_THAT(r.Lambda(0, 0), WithinRel(1.0 + 9.0, 0.02));
  }
  SECTION("too few samples fail the analytic tolerance") {
    cfg.samples = 100;
    const auto r = verify_theorem1(Source::kExponential, cfg);
    CHECK(r.converged);
    CHECK(r.cov_error < 1e-4);
    CHECK_FALSE(r.passed);
  }
  SECTION("tiny budget raises NonConvergence") {
    cfg.samples = 1000;
    cfg.max_iter = 2;
    CHECK_THROWS_AS(verify_theorem1(Source::kUniformSquare, cfg), NonConvergence);
  }
}

TEST_CASE("silhouette") {
  MatrixXd Z(4, 2);
  Z << 0, 0, 0, 1, 10, 0, 10, 1;
  const double b = (10.0 + std::sqrt(101.0)) / 2.0;
  CHECK_THAT(silhouette(Z, {1, 1, 2, 2}), WithinAbs(1.0 - 1.0 / b, 1e-12));
  CHECK(silhouette(Z, {1, 1, 2, 2}) > 0.9);
  CHECK(silhouette(MatrixXd::Zero(4, 2), {1, 1, 2, 2}) == 0.0);
  CHECK_THROWS_AS(silhouette(Z, {1, 1, 1, 1}), DegenerateClass);
  CHECK_THROWS_AS(silhouette(Z, {1, 1, 1, 2}), DegenerateClass);
  CHECK_THROWS_AS(silhouette(Z, {1, 2}), LengthMismatch);
}

TEST_CASE("cluster_purity") {
  MatrixXd R(4, 2);
  R << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.1, 0.9;
  // Component 0 -> class 2, component 1 -> class 1.
  CHECK(cluster_purity(R, {2, 1, 2, 2}, {1, 0}) == 0.75);
  CHECK(cluster_purity(R, {2, 1, 2, 1}, {1, 0}) == 1.0);
  CHECK_THROWS_AS(cluster_purity(R, {1, 2}, {0, 1}), LengthMismatch);
}

TEST_CASE("paired t-test and effect size") {
  CHECK(paired_t_test({1, 2, 3}, {1, 2, 3}).p == 1.0);
  const auto zero_mean = paired_t_test({1, 2, 3}, {1.1, 2.2, 2.7});
  CHECK_THAT(zero_mean.t, WithinAbs(0.0, 1e-12));
  CHECK_THAT(zero_mean.p, WithinAbs(1.0, 1e-9));
  CHECK_THROWS_AS(paired_t_test({1, 2}, {1}), LengthMismatch);
  CHECK_THROWS_AS(paired_t_test({1}, {1}), InsufficientData);

  SECTION("against Simpson integration of the density") {
    for (double nu : {1.0, 5.0, 19.0}) {
      for (double t : {0.3, 1.7, 2.861, 4.0}) {
        // Build samples with the desired t: differences c + s*(+-1 pattern).
        const int n = static_cast<int>(nu) + 1;
        std::vector<double> a(n), b(n, 0.0);
        std::vector<double> dev(n);
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
          dev[i] = (i % 2 ? 1.0 : -1.0) * (1 + 0.1 * i);
          ss += dev[i];
        }
        for (auto& v : dev) v -= ss / n;
        double sd = 0.0;
        for (double v : dev) sd += v * v;
        sd = std::sqrt(sd / (n - 1));
        const double mean = t * sd / std::sqrt(static_cast<double>(n));
        for (int i = 0; i < n; ++i) a[i] = mean + dev[i];
        const auto r = paired_t_test(a, b);
        CHECK_THAT(r.t, WithinRel(t, 1e-9));
        CHECK_THAT(r.p, WithinAbs(simpson_two_tailed_p(t, nu), 1e-8));
      }
    }
  }
  SECTION("table value") {
    // Two-tailed 1% critical value at 19 degrees of freedom is 2.861.
    CHECK_THAT(simpson_two_tailed_p(2.861, 19), WithinAbs(0.01, 1e-4));
  }
  SECTION("large shift with small noise") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    std::vector<double> a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      b[i] = n01(rng);
      a[i] = b[i] + 1.0 + 0.1 * n01(rng);
    }
    CHECK(paired_t_test(a, b).p < 0.01);
  }

  CHECK(cohens_d({1, 2, 3}, {1, 2, 3}).d == 0.0);
  CHECK_FALSE(cohens_d({1, 2, 3}, {1, 2, 3}).zero_variance);
  const auto flagged = cohens_d({1.3, 2.3, 3.3}, {1, 2, 3});
  CHECK(flagged.zero_variance);
  CHECK(std::isinf(flagged.d));
  CHECK(flagged.d > 0);
  CHECK_THAT(cohens_d({1, 2, 3}, {0, 0, 0}).d, WithinAbs(2.0, 1e-12));
}

TEST_CASE("ridge and knn regression") {
  MatrixXd X(5, 1);
  X << 0, 1, 2, 3, 4;
  const VectorXd y = 2.0 * X.col(0).array() + 1.0;
  MatrixXd Xt(2, 1);
  Xt << 5, 6;
  // Ridge with intercept: slope = Sxy / (Sxx + lambda) on centred data.
  const double slope = 20.0 / (10.0 + 1.0);
  const auto pred = ridge_predict(X, y, Xt, 1.0);
  CHECK_THAT(pred(0), WithinAbs(5.0 + slope * 3.0, 1e-12));
  CHECK_THAT(ridge_predict(X, y, Xt, 0.0)(1), WithinAbs(13.0, 1e-9));
  // Dual form path: more features than rows.
  MatrixXd wide = MatrixXd::Zero(5, 8);
  wide.col(0) = X.col(0);
  MatrixXd wide_t = MatrixXd::Zero(2, 8);
  wide_t.col(0) = Xt.col(0);
  CHECK_THAT(ridge_predict(wide, y, wide_t, 1.0)(0), WithinAbs(pred(0), 1e-9));
  CHECK(knn_predict(X, y, Xt, 2)(0) == 8.0);
  CHECK_THROWS_AS(knn_predict(X, y, Xt, 6), InsufficientNeighbors);
  CHECK(mean_absolute_error(y, y) == 0.0);
  CHECK(r_squared(y, y) == 1.0);
  CHECK(r_squared(VectorXd::Ones(3), VectorXd::Zero(3)) == 0.0);
}

TEST_CASE("regression_study") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n01;
  const int n = 100;
  MatrixXd contrastive(n, 3), base(n, 4);
  for (Eigen::Index i = 0; i < contrastive.size(); ++i) contrastive.data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = n01(rng);
  const VectorXd y = contrastive * Eigen::Vector3d(1.5, -2.0, 0.5);
  RegressionConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);

  const auto r = regression_study(base, contrastive, y, cfg);
  REQUIRE(r.models.size() == 2);
  const auto& ridge = r.models[0];
  CHECK(ridge.model == "ridge");
  CHECK(ridge.mean_mae_contrastive < 0.05 * ridge.mean_mae_base);
  CHECK(ridge.test.p < 1e-6);
  CHECK(ridge.effect.d > 0);
  CHECK(ridge.delta_r2 > 0.5);
  CHECK(r.models[1].mean_mae_contrastive < r.models[1].mean_mae_base);
  for (const auto& m : r.models)
    for (double v : m.mae_base) CHECK(v >= 0.0);

  const auto again = regression_study(base, contrastive, y, cfg);
  CHECK(again.models[0].mae_contrastive == ridge.mae_contrastive);

  const auto same = regression_study(contrastive, contrastive, y, cfg);
  for (const auto& m : same.models) {
    for (std::size_t i = 0; i < m.mae_base.size(); ++i) CHECK(m.mae_base[i] == m.mae_contrastive[i]);
    CHECK(m.effect.d == 0.0);
    CHECK(m.test.p == 1.0);
  }

  CHECK_THROWS_AS(regression_study(base.topRows(9), contrastive.topRows(9), y.head(9), cfg), InsufficientData);
  CHECK_THROWS_AS(regression_study(base.topRows(50), contrastive, y, cfg), LengthMismatch);
  cfg.seeds = {1};
  CHECK_THROWS_AS(regression_study(base, contrastive, y, cfg), ConfigError);
}
