#ifndef PREFCAL_NUMERIC_HPP
#define PREFCAL_NUMERIC_HPP

// Stable scalar and vector primitives used throughout: log-sum-exp, softmax,
// sigmoid, softplus and compensated summation. Everything is templated on the
// scalar type and accepts any Eigen dense expression.

#include <Eigen/Dense>

#include <cmath>

namespace prefcal::numeric {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// log(sum_i exp(v_i)) with max-subtraction.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Derived>
Vector<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& v) {
  return (v.array() - log_sum_exp(v)).matrix();
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// 1 / (1 + exp(-z)), branching so exp never overflows.
template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// log(1 + exp(z)).
template <typename Scalar>
Scalar softplus(Scalar z) {
  if (z > Scalar(0)) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// log sigma(z) = -softplus(-z).
template <typename Scalar>
Scalar log_sigmoid(Scalar z) {
  return -softplus(-z);
}

// Sum_i p_i (log p_i - log q_i) from log-probabilities. Terms with p_i = 0
// contribute nothing.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_from_logs(const Eigen::MatrixBase<DerivedP>& log_p,
                                       const Eigen::MatrixBase<DerivedQ>& log_q) {
  using Scalar = typename DerivedP::Scalar;
  Scalar total(0);
  for (Eigen::Index i = 0; i < log_p.size(); ++i) {
    const Scalar p = std::exp(log_p[i]);
    if (p > Scalar(0)) total += p * (log_p[i] - log_q[i]);
  }
  return total;
}

// Neumaier compensated summation.
template <typename Scalar>
class CompensatedSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  Scalar value() const { return sum_ + comp_; }

 private:
  Scalar sum_{0};
  Scalar comp_{0};
};

}  // namespace prefcal::numeric

#endif  // PREFCAL_NUMERIC_HPP
