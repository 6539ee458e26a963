#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedrec {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

// Adam moments over a flat parameter vector. Rows that receive no gradient
// in a step are left untouched (lazy update), which keeps sparse embedding
// tables cheap.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

  void begin_step() { ++t_; }

  void update(std::span<double> params, std::size_t offset,
              std::span<const double> grad, double lr) {
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grad.size(); ++i) {
      auto& m = m_[offset + i];
      auto& v = v_[offset + i];
      m = kBeta1 * m + (1.0 - kBeta1) * grad[i];
      v = kBeta2 * v + (1.0 - kBeta2) * grad[i] * grad[i];
      params[offset + i] -= lr * (m / c1) / (std::sqrt(v / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace fedrec
