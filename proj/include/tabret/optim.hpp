#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace tabret {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a flat parameter vector.
class DenseAdam {
 public:
  DenseAdam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

// Lazy Adam for row-sparse gradients: only rows touched in a step have their
// moments updated, bias correction uses the global step count.
class RowAdam {
 public:
  RowAdam(std::size_t rows, std::size_t width, AdamConfig cfg)
      : cfg_(cfg), width_(width), m_(rows * width, 0.0), v_(rows * width, 0.0) {}

  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  }

  void update_row(std::size_t row, std::span<double> param_row, std::span<const double> grad_row) {
    double* m = m_.data() + row * width_;
    double* v = v_.data() + row * width_;
    for (std::size_t i = 0; i < width_; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad_row[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad_row[i] * grad_row[i];
      param_row[i] -= cfg_.learning_rate * (m[i] / c1_) / (std::sqrt(v[i] / c2_) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t width_;
  std::vector<double> m_, v_;
  long long t_ = 0;
  double c1_ = 1.0, c2_ = 1.0;
};

}  // namespace tabret
