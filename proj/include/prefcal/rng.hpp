#ifndef PREFCAL_RNG_HPP
#define PREFCAL_RNG_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace prefcal {

/// Seedable generator with a fixed, documented algorithm so that every
/// stream is reproducible across platforms and standard libraries.
///
/// Bits come from std::mt19937_64 (whose output sequence is fixed by the C++
/// standard). The transforms are done here rather than with <random>
/// distributions, whose algorithms are implementation-defined:
///   - uniform():   (next() >> 11) * 2^-53, in [0, 1)
///   - gaussian():  Box-Muller, one variate per pair of uniforms
///   - index(n):    floor(uniform() * n)
///   - categorical: inverse CDF over the probability vector
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian();
  int index(int n);
  int categorical(const Eigen::VectorXd& probs);

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace prefcal

#endif  // PREFCAL_RNG_HPP
