#ifndef PREFCAL_ERROR_HPP
#define PREFCAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace prefcal {

enum class Errc {
  invalid_input,
  invalid_parameter,
  invalid_environment,
  dataset_mismatch,
  wrong_operation,
  configuration,
  divergence,
  probe_failure,
  io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by the trainer when the loss turns non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& message)
      : Error(Errc::divergence, message), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace prefcal

#endif  // PREFCAL_ERROR_HPP
