#include "prefcal/rng.hpp"

#include <cmath>
#include <numbers>

namespace prefcal {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::index(int n) {
  const int i = static_cast<int>(uniform() * n);
  return i < n ? i : n - 1;
}

int Rng::categorical(const Eigen::VectorXd& probs) {
  const double u = uniform() * probs.sum();
  double cdf = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return static_cast<int>(i);
  }
  // u landed in the rounding slack past the last cell
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace prefcal
