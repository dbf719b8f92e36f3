#pragma once

#include <functional>

#include "dcadmm/core.hpp"

namespace dcadmm::detail {

struct CgInfo {
  int iterations = 0;
  bool converged = false;
  double worst_relative_residual = 0.0;
};

// Conjugate gradient on an SPD operator, one independent CG per column with
// batched operator applications. Columns freeze once their residual drops
// below tol * ||rhs_col||. Throws NumericFailure on breakdown (p^T A p <= 0).
inline Matrix block_cg(const std::function<Matrix(const Matrix&)>& apply,
                       const Matrix& rhs, const Matrix& x0, double tol,
                       int max_iter, CgInfo* info = nullptr) {
  const Eigen::Index cols = rhs.cols();
  Matrix x = x0;
  Matrix r = rhs - apply(x);
  Matrix p = r;
  Vector rs(cols), target(cols);
  std::vector<char> active(static_cast<size_t>(cols), 1);
  Eigen::Index n_active = 0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    rs[j] = r.col(j).squaredNorm();
    const double t = tol * std::max(rhs.col(j).norm(), 1e-300);
    target[j] = t * t;
    if (rs[j] <= target[j]) {
      active[static_cast<size_t>(j)] = 0;
      p.col(j).setZero();
    } else {
      ++n_active;
    }
  }

  int it = 0;
  for (; it < max_iter && n_active > 0; ++it) {
    const Matrix ap = apply(p);
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!active[static_cast<size_t>(j)]) continue;
      const double pap = p.col(j).dot(ap.col(j));
      if (!(pap > 0.0))
        throw NumericFailure(
            "cg: operator not positive definite; increase the kernel shift gamma");
      const double step = rs[j] / pap;
      x.col(j) += step * p.col(j);
      r.col(j) -= step * ap.col(j);
      const double rs_next = r.col(j).squaredNorm();
      if (rs_next <= target[j]) {
        active[static_cast<size_t>(j)] = 0;
        p.col(j).setZero();
        --n_active;
        continue;
      }
      p.col(j) = r.col(j) + (rs_next / rs[j]) * p.col(j);
      rs[j] = rs_next;
    }
  }
  if (info != nullptr) {
    info->iterations = it;
    info->converged = (n_active == 0);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double denom = std::max(rhs.col(j).norm(), 1e-300);
      worst = std::max(worst, r.col(j).norm() / denom);
    }
    info->worst_relative_residual = worst;
  }
  return x;
}

}  // namespace dcadmm::detail
