#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace vectorplus::testing {

struct LabeledPoints {
  Eigen::MatrixXd Z;
  std::vector<int> labels;  // 1-based
};

// Isotropic clusters with `per_cluster` points each around the given centers.
inline LabeledPoints gaussian_clusters(const Eigen::MatrixXd& centers, int per_cluster,
                                       double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  LabeledPoints out;
  out.Z.resize(centers.rows() * per_cluster, centers.cols());
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (int i = 0; i < per_cluster; ++i) {
      const Eigen::Index r = c * per_cluster + i;
      for (Eigen::Index j = 0; j < centers.cols(); ++j) out.Z(r, j) = centers(c, j) + normal(rng);
      out.labels.push_back(static_cast<int>(c) + 1);
    }
  return out;
}

inline LabeledPoints two_clusters(std::uint64_t seed, int n = 400, double sigma = 0.5) {
  Eigen::MatrixXd centers(2, 2);
  centers << -5.0, 0.0, 5.0, 0.0;
  return gaussian_clusters(centers, n / 2, sigma, seed);
}

// Exhaustive maximum-weight permutation; the first maximum found in
// lexicographic order wins.
inline std::vector<int> brute_force_assignment(const Eigen::MatrixXd& phi) {
  std::vector<int> perm(static_cast<std::size_t>(phi.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t k = 0; k < perm.size(); ++k) total += phi(static_cast<Eigen::Index>(k), perm[k]);
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace vectorplus::testing
