// Oracle suite: sparse approximations against exact or dense references and
// analytic likelihood gradients against central differences.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sqdm {

struct CheckRow {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  /// Negative-test fixture: flips the sign of the FITC diagonal correction.
  bool fault_flip_lambda = false;
  int gradient_seeds = 5;
  std::uint64_t seed = 2024;
};

std::vector<CheckRow> run_verify(const VerifyOptions& opts = {});
bool all_pass(const std::vector<CheckRow>& rows);
void print_verify_table(std::ostream& os, const std::vector<CheckRow>& rows);

/// Componentwise relative error between an analytic and a numeric gradient.
/// Entries far below the gradient's scale are judged against that scale.
double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

}  // namespace sqdm
