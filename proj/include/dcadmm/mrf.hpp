#pragma once

#include <cstdint>
#include <vector>

#include "dcadmm/core.hpp"
#include "dcadmm/prox.hpp"

namespace dcadmm {

/// Discrete subproblem: lookup-table values as unaries plus the instance's
/// higher-order terms.
struct MrfInstance {
  Matrix unaries;  // |V| x |L|
  std::vector<EnergyTerm> energies;
  int n_labels = 0;
};

enum class MrfOptimality { Global, LocalOrHeuristic };

struct MrfResult {
  Labeling labeling;
  double energy = 0.0;  // unary sum + higher-order terms, recomputable
  MrfOptimality optimality = MrfOptimality::LocalOrHeuristic;
};

/// Unary sum plus eval_total_energy; +inf when a hard term is violated.
double mrf_energy(const MrfInstance& mrf, const Labeling& y);

/// Greedy feasibility repair: applies clamps, then moves clique members with
/// the smallest unary penalty until all balance bounds hold. Throws if no
/// feasible labeling is found within the pass budget.
Labeling repair_labeling(const MrfInstance& mrf, Labeling y);

/// Minimizes the MRF energy, warm-started. Every backend is a descent
/// method: the result never has higher energy than a feasible warm start.
/// An infeasible warm start is repaired first (iteration-0 convention).
///   Exhaustive      enumerates all |L|^|V| labelings (guarded at 2e6)
///   ICM             seeded-order coordinate descent with balance-aware
///                   admissibility, plus pairwise swap repair passes
///   AlphaExpansion  max-flow expansion moves (Potts/clamp terms only;
///                   binary instances are solved exactly by one cut)
MrfResult solve_mrf(const MrfInstance& mrf, const Labeling& warm_start,
                    MrfSolverKind solver, std::uint64_t seed);

enum class GateDecision { Accept, Reject };

/// Sufficient-descent test for a proposed labeling. Accepts iff
///   sum_i (u[i][y_prop_i] - u[i][y_prev_i]) + E(y_prop) - E(y_prev) <= -delta.
/// At fixed (alpha, lambda) the augmented Lagrangian difference between the
/// states (B[:,y_prop], y_prop) and (B[:,y_prev], y_prev) reduces to exactly
/// this expression: expanding the penalty around the prox target gives
/// L = sum_i psi_i(beta_i, y_i) + f(alpha) + E(y) - ||lambda||^2/(2 rho),
/// and psi_i evaluated at the table minimizer is u[i][y_i] by definition.
/// On Reject the caller keeps y_prev and reads beta from B[:, y_prev].
GateDecision descent_gate(const LookupTable& table,
                          const std::vector<EnergyTerm>& energies,
                          const Labeling& y_prev, const Labeling& y_prop,
                          double delta);

/// Directed max-flow by shortest augmenting paths (Edmonds-Karp).
class MaxFlowGraph {
 public:
  explicit MaxFlowGraph(int n_nodes);

  /// Directed edge with the given capacity (>= 0, finite).
  void add_edge(int from, int to, double capacity);

  /// Runs max-flow and returns its value. Callable once.
  double solve(int source, int sink);

  /// After solve: nodes reachable from the source in the residual graph.
  const std::vector<char>& source_side() const { return source_side_; }

 private:
  struct Edge {
    int to;
    double cap;
    int rev;  // index of the reverse edge in adj_[to]
  };
  std::vector<std::vector<Edge>> adj_;
  std::vector<char> source_side_;
  bool solved_ = false;
};

}  // namespace dcadmm
