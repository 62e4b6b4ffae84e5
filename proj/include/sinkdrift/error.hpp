#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace sinkdrift {

/// Precondition violated by the caller (shape mismatch, tau <= 0, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical computation produced something it cannot recover from.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A row (or column) of a coupling carries no mass in the log domain.
class DegenerateRow : public NumericalError {
 public:
  DegenerateRow(std::ptrdiff_t index, bool is_column, const std::string& context = {})
      : NumericalError(format(index, is_column, context)), index_(index), is_column_(is_column) {}

  std::ptrdiff_t index() const { return index_; }
  bool is_column() const { return is_column_; }

 private:
  static std::string format(std::ptrdiff_t index, bool is_column, const std::string& context) {
    std::string msg = std::string("degenerate ") + (is_column ? "column " : "row ") +
                      std::to_string(index) + ": all entries are -inf in the log domain";
    if (!context.empty()) msg = context + ": " + msg;
    return msg;
  }

  std::ptrdiff_t index_;
  bool is_column_;
};

/// Tolerance-mode Sinkhorn hit its iteration cap.
inline std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

class SinkhornNotConverged : public NumericalError {
 public:
  SinkhornNotConverged(double violation, int half_steps)
      : NumericalError("sinkhorn did not converge after " + std::to_string(half_steps) +
                       " half-steps (max marginal violation " + format_sci(violation) + ")"),
        violation_(violation),
        half_steps_(half_steps) {}

  double violation() const { return violation_; }
  int half_steps() const { return half_steps_; }

 private:
  double violation_;
  int half_steps_;
};

}  // namespace sinkdrift
