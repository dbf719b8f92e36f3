#include "dcadmm/kernel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "dcadmm/log.hpp"

namespace dcadmm {

KernelMatrix KernelMatrix::dense(Matrix k, double gamma) {
  if (k.rows() != k.cols())
    throw std::invalid_argument("kernel: dense matrix must be square");
  KernelMatrix out;
  out.n_ = k.rows();
  out.gamma_ = gamma;
  out.dense_ = std::move(k);
  return out;
}

KernelMatrix KernelMatrix::low_rank(Matrix g, double gamma) {
  KernelMatrix out;
  out.n_ = g.rows();
  out.gamma_ = gamma;
  out.low_rank_ = std::move(g);
  return out;
}

Matrix KernelMatrix::densify() const {
  if (dense_) return *dense_;
  Matrix k = (*low_rank_) * low_rank_->transpose();
  k.diagonal().array() += gamma_;
  return k;
}

const Matrix& KernelMatrix::dense_matrix() const {
  if (!dense_) throw std::logic_error("kernel: not stored dense");
  return *dense_;
}

const Matrix& KernelMatrix::factor() const {
  if (!low_rank_) throw std::logic_error("kernel: not stored low rank");
  return *low_rank_;
}

Matrix KernelMatrix::matvec(const Matrix& v) const {
  if (v.rows() != n_)
    throw std::invalid_argument("kernel: matvec dimension mismatch");
  if (dense_) return (*dense_) * v;
  Matrix out = (*low_rank_) * (low_rank_->transpose() * v);
  if (gamma_ != 0.0) out.noalias() += gamma_ * v;
  return out;
}

Matrix kernel_matvec(const KernelMatrix& k, const Matrix& v) {
  return k.matvec(v);
}

namespace {

Matrix kernel_gram(const Matrix& features, const KernelSpec& spec) {
  if (std::holds_alternative<LinearKernel>(spec)) {
    return features * features.transpose();
  }
  if (const auto* rbf = std::get_if<RbfKernel>(&spec)) {
    if (!(rbf->sigma > 0.0))
      throw std::invalid_argument("kernel: rbf sigma must be positive");
    const Eigen::Index n = features.rows();
    const Vector sq = features.rowwise().squaredNorm();
    Matrix d2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                2.0 * (features * features.transpose());
    const double inv = 1.0 / (2.0 * rbf->sigma * rbf->sigma);
    Matrix k = (-inv * d2.array().max(0.0)).exp();
    // exact symmetry and unit diagonal regardless of rounding above
    k = 0.5 * (k + k.transpose()).eval();
    k.diagonal().setOnes();
    return k;
  }
  const auto& pre = std::get<PrecomputedKernel>(spec);
  const Matrix& k = pre.matrix;
  if (k.rows() != k.cols())
    throw std::invalid_argument("kernel: precomputed matrix must be square");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale)
    throw std::invalid_argument("kernel: precomputed matrix is not symmetric (max asymmetry " +
                                std::to_string(asym) + ")");
  return 0.5 * (k + k.transpose());
}

// Largest eigenvalue of a symmetric operator by power iteration.
double power_lambda_max(const KernelMatrix& k, int iters = 500) {
  Vector v = Vector::Ones(k.rows());
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w = k.matvec(v);
    const double next = v.dot(w);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    w /= n;
    if (std::abs(next - lambda) <= 1e-9 * std::max(1.0, std::abs(next)) && it > 3) {
      lambda = next;
      break;
    }
    lambda = next;
    v = std::move(w);
  }
  return lambda;
}

}  // namespace

KernelMatrix build_kernel(const Matrix& features, const KernelSpec& spec,
                          double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("kernel: gamma must be nonnegative");
  Matrix k = kernel_gram(features, spec);
  k.diagonal().array() += gamma;
  return KernelMatrix::dense(std::move(k), gamma);
}

SpectralBounds spectral_bounds(const KernelMatrix& k, double nu) {
  double lambda_min = 0.0, lambda_max = 0.0;
  if (k.is_low_rank()) {
    const Matrix& g = k.factor();
    // Nonzero eigenvalues of G G^T equal those of the small Gram G^T G.
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.transpose() * g);
    lambda_max = es.eigenvalues().maxCoeff() + k.gamma();
    lambda_min = (g.cols() < g.rows())
                     ? k.gamma()
                     : es.eigenvalues().minCoeff() + k.gamma();
  } else if (k.rows() <= 2000) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(k.dense_matrix(),
                                             Eigen::EigenvaluesOnly);
    lambda_min = es.eigenvalues().minCoeff();
    lambda_max = es.eigenvalues().maxCoeff();
  } else {
    lambda_max = power_lambda_max(k);
    // Inverse spectrum via the shifted operator lambda_max*I - K.
    Matrix shifted = -k.dense_matrix();
    shifted.diagonal().array() += lambda_max;
    lambda_min = lambda_max - power_lambda_max(KernelMatrix::dense(std::move(shifted), 0.0));
  }
  if (!(lambda_min > 0.0))
    throw std::runtime_error("kernel not surjective; increase gamma");
  SpectralBounds b;
  b.sigma_min_KtK = lambda_min * lambda_min;
  b.lip_L = 2.0 * nu * lambda_max;
  b.semiconvexity_m = 0.0;
  return b;
}

KernelMatrix nystrom_factor(const Matrix& features, const KernelSpec& spec,
                            int landmark_count, std::uint64_t seed,
                            double gamma) {
  const int n = static_cast<int>(features.rows());
  if (landmark_count < 1 || landmark_count > n)
    throw std::invalid_argument("nystrom: landmark count must be in [1, |V|]");

  // Uniform sample without replacement (partial Fisher-Yates).
  Rng rng(seed);
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  for (int i = 0; i < landmark_count; ++i)
    std::swap(perm[static_cast<size_t>(i)],
              perm[static_cast<size_t>(i + rng.uniform_int(n - i))]);
  std::vector<int> landmarks(perm.begin(), perm.begin() + landmark_count);

  const Matrix k = kernel_gram(features, spec);  // unshifted
  Matrix cols(n, landmark_count);
  Matrix w(landmark_count, landmark_count);
  for (int a = 0; a < landmark_count; ++a) {
    cols.col(a) = k.col(landmarks[static_cast<size_t>(a)]);
    for (int b = 0; b < landmark_count; ++b)
      w(a, b) = k(landmarks[static_cast<size_t>(a)], landmarks[static_cast<size_t>(b)]);
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(w);
  const Vector& ev = es.eigenvalues();
  Vector inv_sqrt = Vector::Zero(landmark_count);
  int dropped = 0;
  for (int a = 0; a < landmark_count; ++a) {
    if (ev[a] >= 1e-10)
      inv_sqrt[a] = 1.0 / std::sqrt(ev[a]);
    else
      ++dropped;
  }
  if (dropped > 0)
    log::warn("nystrom: landmark block rank deficient, dropped %d of %d eigenvalues",
              dropped, landmark_count);
  Matrix g = cols * es.eigenvectors() * inv_sqrt.asDiagonal();
  return KernelMatrix::low_rank(std::move(g), gamma);
}

}  // namespace dcadmm
