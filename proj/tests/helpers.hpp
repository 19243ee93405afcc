#ifndef PREFCAL_TESTS_HELPERS_HPP
#define PREFCAL_TESTS_HELPERS_HPP

#include "prefcal/env.hpp"
#include "prefcal/error.hpp"

#include <doctest.h>

#include <initializer_list>

namespace testing {

inline Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Single-prompt environment.
inline prefcal::Environment env1(std::initializer_list<double> reward, std::initializer_list<double> ref_logits) {
  return prefcal::Environment({vec(reward)}, {vec(ref_logits)});
}

inline prefcal::PolicyParams policy1(std::initializer_list<double> logits) { return {{vec(logits)}}; }

inline double max_abs_diff(const prefcal::LogitTable& a, const prefcal::LogitTable& b) {
  double m = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) m = std::max(m, (a[x] - b[x]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace testing

#define CHECK_ERRC(expr, errc)                                       \
  do {                                                               \
    bool thrown_ = false;                                            \
    try {                                                            \
      (void)(expr);                                                  \
    } catch (const prefcal::Error& e_) {                             \
      thrown_ = true;                                                \
      CHECK(e_.code() == (errc));                                    \
    }                                                                \
    CHECK_MESSAGE(thrown_, "expected prefcal::Error from " #expr);   \
  } while (0)

#endif  // PREFCAL_TESTS_HELPERS_HPP
