#include "dcadmm/supervised.hpp"

#include <cmath>

#include "cg_internal.hpp"
#include "dcadmm/prox.hpp"

namespace dcadmm {

double supervised_objective(const ProblemInstance& inst, const Labeling& y,
                            const Matrix& alpha) {
  const Matrix ka = inst.kernel.matvec(alpha);
  double value = inst.nu * (alpha.array() * ka.array()).sum();
  for (int i = 0; i < inst.n_vertices; ++i)
    value += eval_loss(inst.loss, y[static_cast<size_t>(i)], ka.row(i));
  return value;
}

SupervisedSolution solve_supervised(const ProblemInstance& inst,
                                    const Labeling& y, double tol,
                                    int max_iter) {
  SupervisedSolution out;
  const int n = inst.n_vertices;
  const int L = inst.n_labels;

  if (inst.nu == 0.0) {
    // f vanishes and K is surjective, so the infimum decouples per row and
    // equals the loss lower bound (0 for all three losses).
    out.alpha = Matrix::Zero(n, L);
    out.objective = 0.0;
    return out;
  }

  // Minimize g(B) + nu <B, K^{-1} B> over B = K alpha with FISTA for
  // strongly convex objectives: the loss rows enter through prox_step,
  // K^{-1} through warm-started CG.
  const SpectralBounds bounds = spectral_bounds(inst.kernel, inst.nu);
  const double lambda_min = std::sqrt(bounds.sigma_min_KtK);
  const double lambda_max = bounds.lip_L / (2.0 * inst.nu);
  const double lip = 2.0 * inst.nu / lambda_min;
  const double mu = 2.0 * inst.nu / lambda_max;
  const double q = std::sqrt(mu / lip);
  const double momentum = (1.0 - q) / (1.0 + q);

  const auto apply_k = [&](const Matrix& v) { return inst.kernel.matvec(v); };
  const double scale = std::sqrt(static_cast<double>(n) * L);

  Matrix x = Matrix::Zero(n, L);
  Matrix z = x;
  Matrix kinv_z = Matrix::Zero(n, L);  // warm start across iterations
  ProxTarget tgt;
  tgt.rho = lip;
  for (int it = 0; it < max_iter; ++it) {
    kinv_z = detail::block_cg(apply_k, z, kinv_z, 1e-12, 10 * n + 200);
    const Matrix grad = 2.0 * inst.nu * kinv_z;
    Matrix x_next(n, L);
    for (int i = 0; i < n; ++i) {
      tgt.target = z.row(i) - grad.row(i) / lip;
      x_next.row(i) = prox_step(inst.loss, y[static_cast<size_t>(i)], tgt).beta;
    }
    const double map_residual = lip * (x_next - z).norm() / scale;
    z = x_next + momentum * (x_next - x);
    x = std::move(x_next);
    out.iterations = it + 1;
    out.residual = map_residual;
    if (map_residual <= tol) break;
  }

  out.alpha = detail::block_cg(apply_k, x, kinv_z, 1e-12, 10 * n + 200);
  out.objective = supervised_objective(inst, y, out.alpha);
  return out;
}

}  // namespace dcadmm
