#pragma once

#include <utility>
#include <vector>

#include "dcadmm/core.hpp"

namespace dcadmm {

/// Per-vertex prox target K_i alpha + lambda_i / rho.
struct ProxTarget {
  RowVector target;
  double rho = 1.0;
};

struct ProxResult {
  RowVector beta;
  double value = 0.0;
};

/// Global minimizer of  l(c_label; beta) + rho/2 ||beta - target||^2.
///   OneVsAllHinge    coordinatewise closed form
///   CrammerSingerSVM dual simplex projection by variable fixing
///   Softmax          scalar dual equation, safeguarded damped Newton
/// Throws std::runtime_error on Newton non-convergence (unreachable unless
/// there is a bug; the message carries the inputs).
ProxResult prox_step(LossKind loss, int c_label, const ProxTarget& target);

/// Independent brute-force minimizer of the same objective: projected
/// subgradient descent polished by coordinatewise and pairwise
/// golden-section sweeps. Test oracle, |L| <= 8 scale only.
ProxResult prox_oracle(LossKind loss, int c_label, const ProxTarget& target);

/// The lookup table of per-vertex, per-candidate-label prox solutions:
/// u(i, c) is the optimal subproblem value, beta_for_label[c].row(i) the
/// minimizer when vertex i takes label c.
struct LookupTable {
  Matrix u;                            // |V| x |L|
  std::vector<Matrix> beta_for_label;  // |L| entries of |V| x |L|

  /// beta read-off: row i of the result is beta_for_label[y_i].row(i).
  Matrix select_beta(const Labeling& y) const;
};

/// Fills the table with |V| * |L| prox_step calls, targets
/// K alpha + lambda / rho computed as one matrix product. Vertices are
/// partitioned over n_threads workers; the result is schedule-independent.
LookupTable build_lookup_table(const ProblemInstance& inst, const Matrix& alpha,
                               const Matrix& lambda, double rho,
                               int n_threads = 1);

/// Same but with K*alpha precomputed by the caller.
LookupTable build_lookup_table_from_kalpha(const ProblemInstance& inst,
                                           const Matrix& kalpha,
                                           const Matrix& lambda, double rho,
                                           int n_threads);

/// Euclidean projection onto the probability simplex by variable fixing
/// (terminates in at most |v| rounds).
Vector project_simplex(const Vector& v);

}  // namespace dcadmm
