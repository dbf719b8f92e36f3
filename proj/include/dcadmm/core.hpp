#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dcadmm/kernel.hpp"
#include "dcadmm/types.hpp"

namespace dcadmm {

/// Raised when a numeric subroutine cannot proceed (CG breakdown on a
/// singular operator, prox Newton failure). Carries a remedy in the message.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LossKind { OneVsAllHinge, CrammerSingerSVM, Softmax };

const char* loss_name(LossKind k);
std::optional<LossKind> parse_loss(const std::string& name);

// ---------------------------------------------------------------------------
// Energy terms

/// Infinite energy unless y[vertex] == label.
struct UnaryClamp {
  int vertex;
  int label;
};

/// weight * [y_i != y_j], weight >= 0.
struct PairwisePotts {
  int i;
  int j;
  double weight;
};

/// 0 if lower[j] <= |{i in members : y_i = j}| <= upper[j] for all labels j,
/// infinity otherwise.
struct BalanceClique {
  std::vector<int> members;
  std::vector<int> lower;
  std::vector<int> upper;
};

using EnergyTerm = std::variant<UnaryClamp, PairwisePotts, BalanceClique>;

// ---------------------------------------------------------------------------
// Problem and solver state

struct ProblemInstance {
  KernelMatrix kernel;
  int n_vertices = 0;
  int n_labels = 0;
  LossKind loss = LossKind::OneVsAllHinge;
  std::vector<EnergyTerm> energies;
  double nu = 0.0;  // regularizer weight, f(a) = nu <a, K a>
};

/// Throws std::invalid_argument if dimensions, indices or weights are out of
/// contract.
void validate_instance(const ProblemInstance& inst);

enum class MrfSolverKind { ICM, AlphaExpansion, Exhaustive };

const char* mrf_solver_name(MrfSolverKind k);
std::optional<MrfSolverKind> parse_mrf_solver(const std::string& name);

struct SolverConfig {
  double rho0 = 1e-3;
  double tau = 1.003;                       // penalty growth factor, > 1
  std::optional<double> rho_max_override;   // raises the schedule target
  double delta = 0.0;                       // sufficient-descent margin
  double gamma = 0.0;                       // kernel diagonal shift
  int max_iter = 10000;
  double primal_tol = 1e-6;  // on ||K a - b||_F / sqrt(|V| |L|)
  double step_tol = 1e-9;    // on ||a' - a||_F / sqrt(|V| |L|)
  double cg_tol = 1e-10;
  int cg_max_iter = 1000;
  MrfSolverKind mrf_solver = MrfSolverKind::ICM;
  std::uint64_t seed = 0;
  int n_threads = 0;  // 0 = hardware concurrency
};

void validate_config(const SolverConfig& cfg);

struct SolverState {
  Matrix alpha;   // |V| x |L|
  Matrix beta;    // |V| x |L|
  Matrix lambda;  // |V| x |L|
  Labeling y;
  double rho = 0.0;
  int iteration = 0;
};

enum class GateOutcome { Accepted, RejectedKeptPrevious };

struct IterationTrace {
  int iteration = 0;
  double rho = 0.0;
  double lagrangian_value = 0.0;
  double primal_residual = 0.0;  // ||K a - b||_F
  double alpha_step = 0.0;       // ||a^{t+1} - a^t||_F
  int labels_changed = 0;
  GateOutcome descent_gate = GateOutcome::Accepted;
  double mrf_energy = 0.0;
  double wall_time_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Model evaluation

/// Sum of the higher-order energy terms; +inf as soon as a hard term is
/// violated. Order of the terms does not matter.
double eval_total_energy(const std::vector<EnergyTerm>& energies,
                         const Labeling& y);
double eval_total_energy(const ProblemInstance& inst, const Labeling& y);

/// Per-vertex loss l(y_i; beta_i) for a row of scores.
///   OneVsAllHinge:    sum_j max(0, 1 - s_j beta_j), s_j = +1 iff j == y_i
///   CrammerSingerSVM: max(0, max_{j != y_i} (1 + beta_j) - beta_{y_i})
///   Softmax:          -beta_{y_i} + log sum_j exp(beta_j)   (max-shifted)
double eval_loss(LossKind loss, int y_i,
                 const Eigen::Ref<const RowVector>& beta_i);

/// f(alpha) = nu * <alpha, K alpha>_F.
double eval_regularizer(const KernelMatrix& kernel, double nu,
                        const Matrix& alpha);
double eval_regularizer(const ProblemInstance& inst, const Matrix& alpha);

/// The discrete-continuous augmented Lagrangian
///   sum_i l(y_i; beta_i) + f(alpha) + sum_C E_C(y)
///   + <lambda, K alpha - beta> + rho/2 ||K alpha - beta||_F^2.
/// Infinity iff a hard energy term is violated.
double eval_augmented_lagrangian(const ProblemInstance& inst,
                                 const SolverState& state);

/// Same, with K*alpha already computed (the driver caches it).
double eval_augmented_lagrangian(const ProblemInstance& inst,
                                 const SolverState& state,
                                 const Matrix& kalpha);

}  // namespace dcadmm
