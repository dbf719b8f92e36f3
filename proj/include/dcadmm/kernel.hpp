#pragma once

#include <optional>
#include <string>
#include <variant>

#include "dcadmm/types.hpp"

namespace dcadmm {

struct LinearKernel {};
struct RbfKernel {
  double sigma;  // K_ij = exp(-||x_i-x_j||^2 / (2 sigma^2))
};
struct PrecomputedKernel {
  Matrix matrix;
};
using KernelSpec = std::variant<LinearKernel, RbfKernel, PrecomputedKernel>;

/// Symmetric PSD kernel matrix, stored dense or as a Nystrom factor
/// K ~ G G^T. The diagonal shift gamma is part of the operator: every
/// matvec applies K + gamma*I (dense storage already contains the shift).
class KernelMatrix {
 public:
  static KernelMatrix dense(Matrix k, double gamma);
  static KernelMatrix low_rank(Matrix g, double gamma);

  Eigen::Index rows() const { return n_; }
  bool is_low_rank() const { return low_rank_.has_value(); }
  double gamma() const { return gamma_; }

  /// Dense representation (materializes G G^T + gamma I for low rank).
  Matrix densify() const;

  const Matrix& dense_matrix() const;
  const Matrix& factor() const;

  /// K * v for a vector or a |V| x m block. Low rank applies G (G^T v) +
  /// gamma v without forming G G^T.
  Matrix matvec(const Matrix& v) const;

 private:
  Eigen::Index n_ = 0;
  double gamma_ = 0.0;
  std::optional<Matrix> dense_;     // includes the gamma shift
  std::optional<Matrix> low_rank_;  // |V| x l factor, shift kept separate
};

/// Constants entering the penalty lower bound: sigma_min(K^T K), the
/// Lipschitz modulus of grad f and the semiconvexity constant of f.
struct SpectralBounds {
  double sigma_min_KtK = 0.0;
  double lip_L = 0.0;
  double semiconvexity_m = 0.0;
};

/// Builds K from features per the spec, then adds gamma to the diagonal.
/// A precomputed matrix must be symmetric to 1e-8; otherwise rejected.
KernelMatrix build_kernel(const Matrix& features, const KernelSpec& spec,
                          double gamma);

Matrix kernel_matvec(const KernelMatrix& k, const Matrix& v);

/// sigma_min_KtK = lambda_min(K)^2, lip_L = 2 nu lambda_max(K),
/// semiconvexity_m = 0 (f(a) = nu <a, K a> is convex for PSD K).
/// Dense symmetric eigensolve up to |V| = 2000, power iteration beyond.
/// Throws if the smallest eigenvalue is <= 0 after the shift.
SpectralBounds spectral_bounds(const KernelMatrix& k, double nu);

/// Nystrom low-rank factor from l uniformly sampled landmarks:
/// G = K_{:,S} W^{-1/2} with W the landmark block, pseudo-inverted with
/// eigenvalue cutoff 1e-10. The shift gamma stays outside the factor.
KernelMatrix nystrom_factor(const Matrix& features, const KernelSpec& spec,
                            int landmark_count, std::uint64_t seed,
                            double gamma);

}  // namespace dcadmm
