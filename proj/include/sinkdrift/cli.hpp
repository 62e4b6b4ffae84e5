#pragma once

// The `sinkdrift` command line: trajectories, train-toy, theory and eval.

#include <iosfwd>
#include <optional>
#include <string>

#include "sinkdrift/drift.hpp"

namespace sinkdrift::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kNumericalFailure = 2,
  kTheoryFailure = 3,
};

std::optional<Scheme> parse_scheme(const std::string& name);

/// "gaussian" -> squared Euclidean cost, "laplacian" -> Euclidean cost.
std::optional<CostKind> parse_kernel(const std::string& name);

/// Directory name of one grid cell, e.g. "sinkhorn_nomask_tau0p100_seed0".
std::string cell_slug(Scheme scheme, bool mask, double tau, std::uint64_t seed);

/// Runs one invocation. Diagnostics go to `err`, summaries to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sinkdrift::cli
