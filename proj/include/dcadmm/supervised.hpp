#pragma once

#include "dcadmm/core.hpp"

namespace dcadmm {

/// Supervised training objective at fixed labels:
///   J(alpha) = sum_i l(y_i; K_i alpha) + nu <alpha, K alpha>.
double supervised_objective(const ProblemInstance& inst, const Labeling& y,
                            const Matrix& alpha);

struct SupervisedSolution {
  Matrix alpha;
  double objective = 0.0;
  double residual = 0.0;  // prox-gradient mapping norm at the solution
  int iterations = 0;
};

/// Minimizes J by accelerated proximal gradient in the score variable
/// B = K alpha (K must be positive definite): the loss part is handled by
/// prox_step rows, the quadratic part nu <B, K^{-1} B> by warm-started CG.
/// For nu = 0 the infimum per row is the loss lower bound (0 for all three
/// losses); the returned alpha is zero and objective is that infimum.
SupervisedSolution solve_supervised(const ProblemInstance& inst,
                                    const Labeling& y, double tol = 1e-9,
                                    int max_iter = 4000);

}  // namespace dcadmm
