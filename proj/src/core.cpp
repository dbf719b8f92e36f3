#include "dcadmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcadmm {

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::OneVsAllHinge: return "hinge";
    case LossKind::CrammerSingerSVM: return "crammer_singer";
    case LossKind::Softmax: return "softmax";
  }
  return "?";
}

std::optional<LossKind> parse_loss(const std::string& name) {
  if (name == "hinge") return LossKind::OneVsAllHinge;
  if (name == "crammer_singer") return LossKind::CrammerSingerSVM;
  if (name == "softmax") return LossKind::Softmax;
  return std::nullopt;
}

const char* mrf_solver_name(MrfSolverKind k) {
  switch (k) {
    case MrfSolverKind::ICM: return "icm";
    case MrfSolverKind::AlphaExpansion: return "alpha_expansion";
    case MrfSolverKind::Exhaustive: return "exhaustive";
  }
  return "?";
}

std::optional<MrfSolverKind> parse_mrf_solver(const std::string& name) {
  if (name == "icm") return MrfSolverKind::ICM;
  if (name == "alpha_expansion") return MrfSolverKind::AlphaExpansion;
  if (name == "exhaustive") return MrfSolverKind::Exhaustive;
  return std::nullopt;
}

void validate_instance(const ProblemInstance& inst) {
  if (inst.n_vertices <= 0 || inst.n_labels <= 0)
    throw std::invalid_argument("instance: vertex and label counts must be positive");
  if (inst.kernel.rows() != inst.n_vertices)
    throw std::invalid_argument("instance: kernel dimension does not match vertex count");
  if (inst.nu < 0.0)
    throw std::invalid_argument("instance: nu must be nonnegative");
  const int n = inst.n_vertices;
  const int L = inst.n_labels;
  for (const auto& term : inst.energies) {
    if (const auto* c = std::get_if<UnaryClamp>(&term)) {
      if (c->vertex < 0 || c->vertex >= n || c->label < 0 || c->label >= L)
        throw std::invalid_argument("instance: clamp index out of range");
    } else if (const auto* p = std::get_if<PairwisePotts>(&term)) {
      if (p->i < 0 || p->i >= n || p->j < 0 || p->j >= n)
        throw std::invalid_argument("instance: potts index out of range");
      if (p->i == p->j)
        throw std::invalid_argument("instance: potts edge must join distinct vertices");
      if (!(p->weight >= 0.0))
        throw std::invalid_argument("instance: potts weight must be nonnegative");
    } else if (const auto* b = std::get_if<BalanceClique>(&term)) {
      const int c_size = static_cast<int>(b->members.size());
      if (c_size == 0) throw std::invalid_argument("instance: empty balance clique");
      for (int v : b->members)
        if (v < 0 || v >= n)
          throw std::invalid_argument("instance: clique member out of range");
      if (static_cast<int>(b->lower.size()) != L ||
          static_cast<int>(b->upper.size()) != L)
        throw std::invalid_argument("instance: clique bounds must have one entry per label");
      long lo_sum = 0, up_sum = 0;
      for (int j = 0; j < L; ++j) {
        if (b->lower[j] < 0 || b->lower[j] > b->upper[j] || b->upper[j] > c_size)
          throw std::invalid_argument("instance: clique bounds violate 0 <= lower <= upper <= |C|");
        lo_sum += b->lower[j];
        up_sum += b->upper[j];
      }
      if (lo_sum > c_size || up_sum < c_size)
        throw std::invalid_argument("instance: clique bounds admit no labeling");
    }
  }
}

void validate_config(const SolverConfig& cfg) {
  if (!(cfg.rho0 > 0.0)) throw std::invalid_argument("config: rho0 must be positive");
  if (!(cfg.tau > 1.0)) throw std::invalid_argument("config: tau must exceed 1");
  if (cfg.rho_max_override && !(*cfg.rho_max_override > 0.0))
    throw std::invalid_argument("config: rho_max override must be positive");
  if (!(cfg.delta >= 0.0)) throw std::invalid_argument("config: delta must be nonnegative");
  if (!(cfg.gamma >= 0.0)) throw std::invalid_argument("config: gamma must be nonnegative");
  if (cfg.max_iter <= 0) throw std::invalid_argument("config: max_iter must be positive");
  if (!(cfg.primal_tol > 0.0) || !(cfg.step_tol > 0.0) || !(cfg.cg_tol > 0.0))
    throw std::invalid_argument("config: tolerances must be positive");
  if (cfg.cg_max_iter <= 0) throw std::invalid_argument("config: cg_max_iter must be positive");
}

double eval_total_energy(const std::vector<EnergyTerm>& energies,
                         const Labeling& y) {
  double total = 0.0;
  for (const auto& term : energies) {
    if (const auto* c = std::get_if<UnaryClamp>(&term)) {
      if (y[static_cast<size_t>(c->vertex)] != c->label) return kInf;
    } else if (const auto* p = std::get_if<PairwisePotts>(&term)) {
      if (y[static_cast<size_t>(p->i)] != y[static_cast<size_t>(p->j)])
        total += p->weight;
    } else if (const auto* b = std::get_if<BalanceClique>(&term)) {
      std::vector<int> counts(b->lower.size(), 0);
      for (int v : b->members) ++counts[static_cast<size_t>(y[static_cast<size_t>(v)])];
      for (size_t j = 0; j < counts.size(); ++j)
        if (counts[j] < b->lower[j] || counts[j] > b->upper[j]) return kInf;
    }
  }
  return total;
}

double eval_total_energy(const ProblemInstance& inst, const Labeling& y) {
  return eval_total_energy(inst.energies, y);
}

double eval_loss(LossKind loss, int y_i,
                 const Eigen::Ref<const RowVector>& beta_i) {
  const Eigen::Index L = beta_i.size();
  switch (loss) {
    case LossKind::OneVsAllHinge: {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < L; ++j) {
        const double s = (j == y_i) ? 1.0 : -1.0;
        sum += std::max(0.0, 1.0 - s * beta_i[j]);
      }
      return sum;
    }
    case LossKind::CrammerSingerSVM: {
      double worst = -kInf;
      for (Eigen::Index j = 0; j < L; ++j) {
        if (j == y_i) continue;
        worst = std::max(worst, 1.0 + beta_i[j]);
      }
      if (L == 1) return 0.0;
      return std::max(0.0, worst - beta_i[y_i]);
    }
    case LossKind::Softmax: {
      const double m = beta_i.maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < L; ++j) sum += std::exp(beta_i[j] - m);
      return -beta_i[y_i] + m + std::log(sum);
    }
  }
  return 0.0;
}

double eval_regularizer(const KernelMatrix& kernel, double nu,
                        const Matrix& alpha) {
  if (nu == 0.0) return 0.0;
  const Matrix ka = kernel.matvec(alpha);
  return nu * (alpha.array() * ka.array()).sum();
}

double eval_regularizer(const ProblemInstance& inst, const Matrix& alpha) {
  return eval_regularizer(inst.kernel, inst.nu, alpha);
}

double eval_augmented_lagrangian(const ProblemInstance& inst,
                                 const SolverState& state) {
  return eval_augmented_lagrangian(inst, state, inst.kernel.matvec(state.alpha));
}

double eval_augmented_lagrangian(const ProblemInstance& inst,
                                 const SolverState& state,
                                 const Matrix& kalpha) {
  const double energy = eval_total_energy(inst.energies, state.y);
  if (energy == kInf) return kInf;
  double value = energy;
  for (int i = 0; i < inst.n_vertices; ++i)
    value += eval_loss(inst.loss, state.y[static_cast<size_t>(i)], state.beta.row(i));
  if (inst.nu != 0.0) value += inst.nu * (state.alpha.array() * kalpha.array()).sum();
  const Matrix residual = kalpha - state.beta;
  value += (state.lambda.array() * residual.array()).sum();
  value += 0.5 * state.rho * residual.squaredNorm();
  return value;
}

}  // namespace dcadmm
