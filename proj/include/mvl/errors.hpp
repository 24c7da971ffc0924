#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvl {

// A model violates a hypothesis required by a formula (e.g. tau would be <= 0).
class hypothesis_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An iterative solver gave up; carries the best value found so far.
class convergence_error : public std::runtime_error {
 public:
  convergence_error(const std::string& what, double best_so_far)
      : std::runtime_error(what), best_so_far_(best_so_far) {}

  double best_so_far() const noexcept { return best_so_far_; }

 private:
  double best_so_far_;
};

// A time integrator produced a non-finite state.
class step_error : public std::runtime_error {
 public:
  step_error(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace mvl
