#pragma once

// Adam over a list of flat parameter blocks.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace vectorplus::optim {

using Block = Eigen::Map<Eigen::VectorXd>;

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Block>& params, const std::vector<Block>& grads) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Eigen::VectorXd::Zero(p.size()));
        v_.push_back(Eigen::VectorXd::Zero(p.size()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      params[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

// Scales gradients in place so that their joint L2 norm is at most
// `max_norm`; returns the norm before clipping.
inline double clip_global_norm(std::vector<Block>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm)
    for (auto& g : grads) g *= max_norm / norm;
  return norm;
}

}  // namespace vectorplus::optim
