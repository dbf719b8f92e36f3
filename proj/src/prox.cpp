#include "dcadmm/prox.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dcadmm {

namespace {

ProxResult finish(LossKind loss, int c, const ProxTarget& tgt, RowVector beta) {
  ProxResult r;
  r.value = eval_loss(loss, c, beta) +
            0.5 * tgt.rho * (beta - tgt.target).squaredNorm();
  r.beta = std::move(beta);
  return r;
}

// ---------------------------------------------------------------------------
// One-vs-all hinge: separable, closed form per coordinate.

ProxResult prox_hinge(int c, const ProxTarget& tgt) {
  const double rho = tgt.rho;
  RowVector beta(tgt.target.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double s = (j == c) ? 1.0 : -1.0;
    const double p = s * tgt.target[j];
    double u;
    if (p > 1.0)
      u = p;
    else if (p >= 1.0 - 1.0 / rho)
      u = 1.0;
    else
      u = p + 1.0 / rho;
    beta[j] = s * u;
  }
  return finish(LossKind::OneVsAllHinge, c, tgt, std::move(beta));
}

// ---------------------------------------------------------------------------
// Crammer-Singer: the dual is a Euclidean projection onto the simplex,
// beta = target - (q - e_c)/rho with q = proj( e_c + rho (margin + target) ).

ProxResult prox_crammer_singer(int c, const ProxTarget& tgt) {
  const Eigen::Index L = tgt.target.size();
  Vector v(L);
  for (Eigen::Index j = 0; j < L; ++j)
    v[j] = (j == c ? 1.0 : 0.0) + tgt.rho * ((j == c ? 0.0 : 1.0) + tgt.target[j]);
  const Vector q = project_simplex(v);
  RowVector beta(L);
  for (Eigen::Index j = 0; j < L; ++j)
    beta[j] = tgt.target[j] - (q[j] - (j == c ? 1.0 : 0.0)) / tgt.rho;
  return finish(LossKind::CrammerSingerSVM, c, tgt, std::move(beta));
}

// ---------------------------------------------------------------------------
// Softmax: with q = softmax(beta) the optimality system reduces to the
// scalar equation  sum_j q_j(nu) = 1  in the log-partition value nu, where
// q_j(nu) = rho * w_j and w_j solves w e^w = exp(a_j) / rho,
// a_j = t_j + [j=c]/rho - nu. The inner equation is handled in log space.

// Solves w + log w = z for w > 0 (log-domain principal Lambert branch).
double lambert_w_exp(double z) {
  if (z < -36.0) return std::exp(z);  // w e^w = e^z, w ~ e^z to 1e-31
  double w = (z > 1.0) ? z - std::log(z) : std::exp(z > 0.0 ? 0.0 : z);
  for (int it = 0; it < 100; ++it) {
    const double h = std::log(w) + w - z;
    if (std::abs(h) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    double step = h * w / (w + 1.0);
    double next = w - step;
    while (next <= 0.0) {
      step *= 0.5;
      next = w - step;
    }
    w = next;
  }
  return w;
}

ProxResult prox_softmax(int c, const ProxTarget& tgt) {
  const Eigen::Index L = tgt.target.size();
  const double rho = tgt.rho;
  const double log_rho = std::log(rho);

  RowVector shifted = tgt.target;
  shifted[c] += 1.0 / rho;

  Vector w(L);
  const auto residual = [&](double nu) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < L; ++j) {
      w[j] = lambert_w_exp(shifted[j] - nu - log_rho);
      sum += w[j];
    }
    return rho * sum - 1.0;
  };
  const auto slope = [&]() {  // d residual / d nu at the last evaluation
    double s = 0.0;
    for (Eigen::Index j = 0; j < L; ++j) s += w[j] / (1.0 + w[j]);
    return -rho * s;
  };

  // nu ~ log sum exp(shifted) is exact as rho -> inf; bracket around it.
  const double m = shifted.maxCoeff();
  double nu = m + std::log((shifted.array() - m).exp().sum());
  double lo = nu, hi = nu;
  double r = residual(nu);
  double width = 1.0;
  while (r < 0.0) {  // residual decreases in nu
    hi = nu;
    nu -= width;
    lo = nu;
    width *= 2.0;
    r = residual(nu);
    if (width > 1e8) break;
  }
  width = 1.0;
  while (r > 0.0) {
    lo = std::max(lo, nu);
    nu += width;
    hi = nu;
    width *= 2.0;
    r = residual(nu);
    if (width > 1e8) break;
  }
  if (r > 0.0) lo = nu; else hi = nu;

  bool converged = std::abs(r) <= 1e-12;
  for (int it = 0; it < 50 && !converged; ++it) {
    const double d = slope();
    double next = nu - r / d;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection guard
    nu = next;
    r = residual(nu);
    if (r > 0.0) lo = nu; else hi = nu;
    converged = std::abs(r) <= 1e-12;
  }
  for (int it = 0; it < 200 && !converged; ++it) {
    nu = 0.5 * (lo + hi);
    r = residual(nu);
    if (r > 0.0) lo = nu; else hi = nu;
    converged = std::abs(r) <= 1e-12 || (hi - lo) <= 1e-16 * std::max(1.0, std::abs(nu));
  }
  if (!converged) {
    std::ostringstream os;
    os << "prox_softmax: Newton failed, rho=" << rho << " target=[";
    for (Eigen::Index j = 0; j < L; ++j) os << tgt.target[j] << (j + 1 < L ? "," : "]");
    throw std::runtime_error(os.str());
  }

  RowVector beta(L);
  for (Eigen::Index j = 0; j < L; ++j)
    beta[j] = tgt.target[j] - (rho * w[j] - (j == c ? 1.0 : 0.0)) / rho;
  return finish(LossKind::Softmax, c, tgt, std::move(beta));
}

}  // namespace

Vector project_simplex(const Vector& v) {
  const Eigen::Index n = v.size();
  std::vector<char> active(static_cast<size_t>(n), 1);
  Eigen::Index n_active = n;
  double theta = 0.0;
  for (Eigen::Index round = 0; round < n; ++round) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active[static_cast<size_t>(i)]) sum += v[i];
    theta = (sum - 1.0) / static_cast<double>(n_active);
    Eigen::Index dropped = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active[static_cast<size_t>(i)] && v[i] - theta <= 0.0) {
        active[static_cast<size_t>(i)] = 0;
        ++dropped;
      }
    }
    if (dropped == 0) break;
    n_active -= dropped;
    if (n_active == 0) {  // all dropped: keep the largest coordinate
      Eigen::Index arg = 0;
      v.maxCoeff(&arg);
      active[static_cast<size_t>(arg)] = 1;
      n_active = 1;
    }
  }
  Vector q = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (active[static_cast<size_t>(i)]) q[i] = std::max(0.0, v[i] - theta);
  return q;
}

ProxResult prox_step(LossKind loss, int c_label, const ProxTarget& target) {
  if (!(target.rho > 0.0)) throw std::invalid_argument("prox: rho must be positive");
  switch (loss) {
    case LossKind::OneVsAllHinge: return prox_hinge(c_label, target);
    case LossKind::CrammerSingerSVM: return prox_crammer_singer(c_label, target);
    case LossKind::Softmax: return prox_softmax(c_label, target);
  }
  throw std::logic_error("prox: unknown loss");
}

// ---------------------------------------------------------------------------
// Brute-force oracle

namespace {

RowVector loss_subgradient(LossKind loss, int c, const RowVector& beta) {
  const Eigen::Index L = beta.size();
  RowVector g = RowVector::Zero(L);
  switch (loss) {
    case LossKind::OneVsAllHinge:
      for (Eigen::Index j = 0; j < L; ++j) {
        const double s = (j == c) ? 1.0 : -1.0;
        if (s * beta[j] < 1.0) g[j] = -s;
      }
      break;
    case LossKind::CrammerSingerSVM: {
      if (L == 1) break;
      Eigen::Index arg = -1;
      double best = -kInf;
      for (Eigen::Index j = 0; j < L; ++j) {
        if (j == c) continue;
        if (1.0 + beta[j] > best) {
          best = 1.0 + beta[j];
          arg = j;
        }
      }
      if (best - beta[c] > 0.0) {
        g[arg] = 1.0;
        g[c] -= 1.0;
      }
      break;
    }
    case LossKind::Softmax: {
      const double m = beta.maxCoeff();
      RowVector e = (beta.array() - m).exp();
      g = e / e.sum();
      g[c] -= 1.0;
      break;
    }
  }
  return g;
}

// Golden-section line search along a fixed direction, assumes convexity.
void golden_refine(LossKind loss, int c, const ProxTarget& tgt, RowVector& x,
                   double& fx, const RowVector& dir, double radius) {
  const double phi = 0.6180339887498949;
  const auto f = [&](double s) {
    RowVector p = x + s * dir;
    return eval_loss(loss, c, p) + 0.5 * tgt.rho * (p - tgt.target).squaredNorm();
  };
  double a = -radius, b = radius;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 90; ++it) {
    if (f1 <= f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  const double s = (f1 <= f2) ? x1 : x2;
  const double fs = std::min(f1, f2);
  if (fs < fx) {
    x += s * dir;
    fx = fs;
  }
}

}  // namespace

ProxResult prox_oracle(LossKind loss, int c_label, const ProxTarget& tgt) {
  if (!(tgt.rho > 0.0)) throw std::invalid_argument("prox: rho must be positive");
  const Eigen::Index L = tgt.target.size();
  const auto objective = [&](const RowVector& b) {
    return eval_loss(loss, c_label, b) +
           0.5 * tgt.rho * (b - tgt.target).squaredNorm();
  };

  RowVector x = tgt.target;
  RowVector best = x;
  double best_f = objective(x);
  const double step0 = (1.0 + 2.0 / tgt.rho);
  for (int k = 1; k <= 100000; ++k) {
    RowVector g = loss_subgradient(loss, c_label, x) + tgt.rho * (x - tgt.target);
    const double gn = g.norm();
    if (gn < 1e-14) break;
    x -= (step0 / (std::sqrt(static_cast<double>(k)) * gn)) * g;
    const double fx = objective(x);
    if (fx < best_f) {
      best_f = fx;
      best = x;
    }
  }

  x = best;
  double fx = best_f;
  double radius = 1.0 + 2.0 / tgt.rho;
  for (int round = 0; round < 8; ++round) {
    for (Eigen::Index j = 0; j < L; ++j)
      golden_refine(loss, c_label, tgt, x, fx, RowVector::Unit(L, j), radius);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = i + 1; j < L; ++j) {
        RowVector d = RowVector::Zero(L);
        d[i] = M_SQRT1_2;
        d[j] = -M_SQRT1_2;
        golden_refine(loss, c_label, tgt, x, fx, d, radius);
      }
    radius *= 0.25;
  }

  ProxResult r;
  r.beta = std::move(x);
  r.value = fx;
  return r;
}

// ---------------------------------------------------------------------------
// Lookup table

Matrix LookupTable::select_beta(const Labeling& y) const {
  const Eigen::Index n = u.rows();
  Matrix beta(n, u.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    beta.row(i) = beta_for_label[static_cast<size_t>(y[static_cast<size_t>(i)])].row(i);
  return beta;
}

LookupTable build_lookup_table_from_kalpha(const ProblemInstance& inst,
                                           const Matrix& kalpha,
                                           const Matrix& lambda, double rho,
                                           int n_threads) {
  const int n = inst.n_vertices;
  const int L = inst.n_labels;
  const Matrix targets = kalpha + lambda / rho;

  LookupTable table;
  table.u.resize(n, L);
  table.beta_for_label.assign(static_cast<size_t>(L), Matrix(n, L));

  const auto worker = [&](int begin, int end) {
    ProxTarget tgt;
    tgt.rho = rho;
    for (int i = begin; i < end; ++i) {
      tgt.target = targets.row(i);
      for (int c = 0; c < L; ++c) {
        ProxResult r = prox_step(inst.loss, c, tgt);
        table.u(i, c) = r.value;
        table.beta_for_label[static_cast<size_t>(c)].row(i) = r.beta;
      }
    }
  };

  int workers = n_threads > 0
                    ? n_threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int b = w * chunk;
      const int e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back(worker, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return table;
}

LookupTable build_lookup_table(const ProblemInstance& inst, const Matrix& alpha,
                               const Matrix& lambda, double rho,
                               int n_threads) {
  if (!(rho > 0.0)) throw std::invalid_argument("lookup table: rho must be positive");
  return build_lookup_table_from_kalpha(inst, inst.kernel.matvec(alpha), lambda,
                                        rho, n_threads);
}

}  // namespace dcadmm
