#include "dcadmm/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "dcadmm/log.hpp"

namespace dcadmm {

double mrf_energy(const MrfInstance& mrf, const Labeling& y) {
  const double hot = eval_total_energy(mrf.energies, y);
  if (hot == kInf) return kInf;
  double unary = 0.0;
  for (Eigen::Index i = 0; i < mrf.unaries.rows(); ++i)
    unary += mrf.unaries(i, y[static_cast<size_t>(i)]);
  return unary + hot;
}

// ---------------------------------------------------------------------------
// Shared local view of the energy terms

namespace {

struct LocalTerms {
  int n = 0;
  int n_labels = 0;
  std::vector<int> clamp;                                  // -1 or forced label
  std::vector<std::vector<std::pair<int, double>>> nbrs;   // potts adjacency
  std::vector<const BalanceClique*> cliques;
  std::vector<std::vector<int>> cliques_of;                // vertex -> clique ids
  std::vector<std::vector<char>> in_clique;                // clique id -> bitmap
  std::vector<std::vector<int>> counts;                    // clique id -> per-label

  LocalTerms(const MrfInstance& mrf)
      : n(static_cast<int>(mrf.unaries.rows())), n_labels(mrf.n_labels) {
    clamp.assign(static_cast<size_t>(n), -1);
    nbrs.resize(static_cast<size_t>(n));
    cliques_of.resize(static_cast<size_t>(n));
    for (const auto& term : mrf.energies) {
      if (const auto* c = std::get_if<UnaryClamp>(&term)) {
        const int prev = clamp[static_cast<size_t>(c->vertex)];
        if (prev >= 0 && prev != c->label)
          throw std::invalid_argument("mrf: conflicting clamps on one vertex");
        clamp[static_cast<size_t>(c->vertex)] = c->label;
      } else if (const auto* p = std::get_if<PairwisePotts>(&term)) {
        nbrs[static_cast<size_t>(p->i)].emplace_back(p->j, p->weight);
        nbrs[static_cast<size_t>(p->j)].emplace_back(p->i, p->weight);
      } else if (const auto* b = std::get_if<BalanceClique>(&term)) {
        const int id = static_cast<int>(cliques.size());
        cliques.push_back(b);
        in_clique.emplace_back(static_cast<size_t>(n), 0);
        for (int v : b->members) {
          cliques_of[static_cast<size_t>(v)].push_back(id);
          in_clique.back()[static_cast<size_t>(v)] = 1;
        }
      }
    }
  }

  void reset_counts(const Labeling& y) {
    counts.assign(cliques.size(), std::vector<int>(static_cast<size_t>(n_labels), 0));
    for (size_t q = 0; q < cliques.size(); ++q)
      for (int v : cliques[q]->members)
        ++counts[q][static_cast<size_t>(y[static_cast<size_t>(v)])];
  }

  bool counts_feasible() const {
    for (size_t q = 0; q < cliques.size(); ++q)
      for (int j = 0; j < n_labels; ++j)
        if (counts[q][static_cast<size_t>(j)] < cliques[q]->lower[static_cast<size_t>(j)] ||
            counts[q][static_cast<size_t>(j)] > cliques[q]->upper[static_cast<size_t>(j)])
          return false;
    return true;
  }

  // Can vertex i move from label a to label b without leaving any bound?
  bool move_admissible(int i, int a, int b) const {
    for (int q : cliques_of[static_cast<size_t>(i)]) {
      const auto& cl = *cliques[static_cast<size_t>(q)];
      const auto& ct = counts[static_cast<size_t>(q)];
      if (ct[static_cast<size_t>(a)] - 1 < cl.lower[static_cast<size_t>(a)]) return false;
      if (ct[static_cast<size_t>(b)] + 1 > cl.upper[static_cast<size_t>(b)]) return false;
    }
    return true;
  }

  void apply_move(int i, int a, int b) {
    for (int q : cliques_of[static_cast<size_t>(i)]) {
      --counts[static_cast<size_t>(q)][static_cast<size_t>(a)];
      ++counts[static_cast<size_t>(q)][static_cast<size_t>(b)];
    }
  }

  double potts_delta(const Labeling& y, int i, int from, int to, int skip = -1) const {
    double d = 0.0;
    for (const auto& [j, w] : nbrs[static_cast<size_t>(i)]) {
      if (j == skip) continue;
      const int yj = y[static_cast<size_t>(j)];
      d += w * ((to != yj ? 1.0 : 0.0) - (from != yj ? 1.0 : 0.0));
    }
    return d;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Feasibility repair

Labeling repair_labeling(const MrfInstance& mrf, Labeling y) {
  LocalTerms lt(mrf);
  for (int i = 0; i < lt.n; ++i)
    if (lt.clamp[static_cast<size_t>(i)] >= 0) y[static_cast<size_t>(i)] = lt.clamp[static_cast<size_t>(i)];
  lt.reset_counts(y);

  for (int pass = 0; pass < 100; ++pass) {
    if (lt.counts_feasible()) return y;
    bool moved = false;
    for (size_t q = 0; q < lt.cliques.size(); ++q) {
      const auto& cl = *lt.cliques[q];
      for (int j = 0; j < lt.n_labels; ++j) {
        // Fill deficits of label j by moving in the cheapest member whose
        // current label has surplus within this clique.
        while (lt.counts[q][static_cast<size_t>(j)] < cl.lower[static_cast<size_t>(j)]) {
          int best_v = -1;
          double best_delta = kInf;
          for (int v : cl.members) {
            const int a = y[static_cast<size_t>(v)];
            if (a == j || lt.clamp[static_cast<size_t>(v)] >= 0) continue;
            if (lt.counts[q][static_cast<size_t>(a)] <= cl.lower[static_cast<size_t>(a)]) continue;
            const double d = mrf.unaries(v, j) - mrf.unaries(v, a);
            if (d < best_delta) {
              best_delta = d;
              best_v = v;
            }
          }
          if (best_v < 0) break;
          lt.apply_move(best_v, y[static_cast<size_t>(best_v)], j);
          y[static_cast<size_t>(best_v)] = j;
          moved = true;
        }
        // Shed surplus of label j onto the cheapest label with headroom.
        while (lt.counts[q][static_cast<size_t>(j)] > cl.upper[static_cast<size_t>(j)]) {
          int best_v = -1, best_b = -1;
          double best_delta = kInf;
          for (int v : cl.members) {
            if (y[static_cast<size_t>(v)] != j || lt.clamp[static_cast<size_t>(v)] >= 0) continue;
            for (int b = 0; b < lt.n_labels; ++b) {
              if (b == j) continue;
              if (lt.counts[q][static_cast<size_t>(b)] >= cl.upper[static_cast<size_t>(b)]) continue;
              const double d = mrf.unaries(v, b) - mrf.unaries(v, j);
              if (d < best_delta) {
                best_delta = d;
                best_v = v;
                best_b = b;
              }
            }
          }
          if (best_v < 0) break;
          lt.apply_move(best_v, j, best_b);
          y[static_cast<size_t>(best_v)] = best_b;
          moved = true;
        }
      }
    }
    if (!moved && !lt.counts_feasible())
      throw std::runtime_error("mrf: feasibility repair stalled; constraints may be jointly infeasible");
  }
  if (!lt.counts_feasible())
    throw std::runtime_error("mrf: feasibility repair did not converge");
  return y;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration

namespace {

MrfResult solve_exhaustive(const MrfInstance& mrf, const Labeling& warm) {
  const int n = static_cast<int>(mrf.unaries.rows());
  const double combos = static_cast<double>(n) * std::log(static_cast<double>(mrf.n_labels));
  if (combos > std::log(2e6))
    throw std::invalid_argument("mrf: exhaustive enumeration exceeds the 2e6 labeling budget");

  Labeling y(static_cast<size_t>(n), 0);
  Labeling best = warm;
  double best_energy = mrf_energy(mrf, warm);
  while (true) {
    const double e = mrf_energy(mrf, y);
    if (e < best_energy) {
      best_energy = e;
      best = y;
    }
    int i = 0;
    while (i < n) {
      if (++y[static_cast<size_t>(i)] < mrf.n_labels) break;
      y[static_cast<size_t>(i)] = 0;
      ++i;
    }
    if (i == n) break;
  }
  return {std::move(best), best_energy, MrfOptimality::Global};
}

// ---------------------------------------------------------------------------
// ICM with balance-aware moves and pairwise swap repair

MrfResult solve_icm(const MrfInstance& mrf, Labeling y, std::uint64_t seed) {
  LocalTerms lt(mrf);
  lt.reset_counts(y);

  std::vector<int> order(static_cast<size_t>(lt.n));
  for (int i = 0; i < lt.n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = lt.n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);

  for (int round = 0; round < 10000; ++round) {
    bool any = false;
    // single-vertex sweeps to a fixed point
    for (bool sweep_moved = true; sweep_moved;) {
      sweep_moved = false;
      for (int i : order) {
        const int a = y[static_cast<size_t>(i)];
        if (lt.clamp[static_cast<size_t>(i)] >= 0) continue;
        int best_b = a;
        double best_delta = 0.0;
        for (int b = 0; b < lt.n_labels; ++b) {
          if (b == a || !lt.move_admissible(i, a, b)) continue;
          const double d = mrf.unaries(i, b) - mrf.unaries(i, a) + lt.potts_delta(y, i, a, b);
          if (d < best_delta) {
            best_delta = d;
            best_b = b;
          }
        }
        if (best_b != a) {
          lt.apply_move(i, a, best_b);
          y[static_cast<size_t>(i)] = best_b;
          sweep_moved = any = true;
        }
      }
    }
    // pairwise swaps to escape count-locked states
    bool swap_moved = false;
    for (int i = 0; i < lt.n; ++i) {
      if (lt.clamp[static_cast<size_t>(i)] >= 0) continue;
      for (int j = i + 1; j < lt.n; ++j) {
        if (lt.clamp[static_cast<size_t>(j)] >= 0) continue;
        const int a = y[static_cast<size_t>(i)], b = y[static_cast<size_t>(j)];
        if (a == b) continue;
        // Cliques holding both vertices keep their counts under a swap.
        bool ok = true;
        for (int q : lt.cliques_of[static_cast<size_t>(i)]) {
          if (lt.in_clique[static_cast<size_t>(q)][static_cast<size_t>(j)]) continue;
          const auto& cl = *lt.cliques[static_cast<size_t>(q)];
          const auto& ct = lt.counts[static_cast<size_t>(q)];
          if (ct[static_cast<size_t>(a)] - 1 < cl.lower[static_cast<size_t>(a)] ||
              ct[static_cast<size_t>(b)] + 1 > cl.upper[static_cast<size_t>(b)]) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        for (int q : lt.cliques_of[static_cast<size_t>(j)]) {
          if (lt.in_clique[static_cast<size_t>(q)][static_cast<size_t>(i)]) continue;
          const auto& cl = *lt.cliques[static_cast<size_t>(q)];
          const auto& ct = lt.counts[static_cast<size_t>(q)];
          if (ct[static_cast<size_t>(b)] - 1 < cl.lower[static_cast<size_t>(b)] ||
              ct[static_cast<size_t>(a)] + 1 > cl.upper[static_cast<size_t>(a)]) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        const double d = mrf.unaries(i, b) - mrf.unaries(i, a) +
                         mrf.unaries(j, a) - mrf.unaries(j, b) +
                         lt.potts_delta(y, i, a, b, j) + lt.potts_delta(y, j, b, a, i);
        if (d < 0.0) {
          for (int q : lt.cliques_of[static_cast<size_t>(i)])
            if (!lt.in_clique[static_cast<size_t>(q)][static_cast<size_t>(j)]) {
              --lt.counts[static_cast<size_t>(q)][static_cast<size_t>(a)];
              ++lt.counts[static_cast<size_t>(q)][static_cast<size_t>(b)];
            }
          for (int q : lt.cliques_of[static_cast<size_t>(j)])
            if (!lt.in_clique[static_cast<size_t>(q)][static_cast<size_t>(i)]) {
              --lt.counts[static_cast<size_t>(q)][static_cast<size_t>(b)];
              ++lt.counts[static_cast<size_t>(q)][static_cast<size_t>(a)];
            }
          y[static_cast<size_t>(i)] = b;
          y[static_cast<size_t>(j)] = a;
          swap_moved = any = true;
        }
      }
    }
    if (!any) break;
    if (!swap_moved) break;  // sweeps alone reached their fixed point
  }
  return {std::move(y), 0.0, MrfOptimality::LocalOrHeuristic};
}

// ---------------------------------------------------------------------------
// Alpha expansion via max-flow

// Builder for binary submodular energies over graph-cut variables.
class BinaryCutBuilder {
 public:
  explicit BinaryCutBuilder(int n)
      : n_(n), cost0_(static_cast<size_t>(n), 0.0), cost1_(static_cast<size_t>(n), 0.0) {}

  void add_unary(int i, double c0, double c1) {
    cost0_[static_cast<size_t>(i)] += c0;
    cost1_[static_cast<size_t>(i)] += c1;
  }

  // E(z_i, z_j) with E(0,0)=a, E(0,1)=b, E(1,0)=c, E(1,1)=d; needs b+c >= a+d.
  void add_pairwise(int i, int j, double a, double b, double c, double d) {
    const double theta = b + c - a - d;
    if (theta < -1e-12)
      throw std::logic_error("mrf: non-submodular pairwise term in cut graph");
    cost1_[static_cast<size_t>(i)] += c - a;
    cost1_[static_cast<size_t>(j)] += d - c;
    constant_ += a;
    if (theta > 0.0) edges_.push_back({i, j, theta});
  }

  // Returns z (0 = source side). Energy of the optimum is flow + constant.
  std::vector<char> solve() {
    MaxFlowGraph g(n_ + 2);
    const int s = n_, t = n_ + 1;
    for (int i = 0; i < n_; ++i) {
      const double m = std::min(cost0_[static_cast<size_t>(i)], cost1_[static_cast<size_t>(i)]);
      const double c1 = cost1_[static_cast<size_t>(i)] - m;
      const double c0 = cost0_[static_cast<size_t>(i)] - m;
      if (c1 > 0.0) g.add_edge(s, i, c1);
      if (c0 > 0.0) g.add_edge(i, t, c0);
    }
    for (const auto& e : edges_) g.add_edge(e.i, e.j, e.theta);
    g.solve(s, t);
    const auto& side = g.source_side();
    std::vector<char> z(static_cast<size_t>(n_));
    for (int i = 0; i < n_; ++i) z[static_cast<size_t>(i)] = side[static_cast<size_t>(i)] ? 0 : 1;
    return z;
  }

 private:
  struct PairEdge {
    int i, j;
    double theta;
  };
  int n_;
  std::vector<double> cost0_, cost1_;
  std::vector<PairEdge> edges_;
  double constant_ = 0.0;
};

MrfResult solve_expansion(const MrfInstance& mrf, Labeling y) {
  for (const auto& term : mrf.energies)
    if (std::holds_alternative<BalanceClique>(term))
      throw std::invalid_argument("mrf: unsupported term for this backend (BalanceClique); use ICM");

  LocalTerms lt(mrf);
  const int n = lt.n;
  const int L = mrf.n_labels;

  // Hard clamps become finite penalties dominating any feasible energy.
  double scale = 1.0;
  for (int i = 0; i < n; ++i)
    scale += mrf.unaries.row(i).maxCoeff() - mrf.unaries.row(i).minCoeff();
  for (const auto& term : mrf.energies)
    if (const auto* p = std::get_if<PairwisePotts>(&term)) scale += p->weight;
  const double clamp_penalty = 2.0 * scale;

  const auto unary = [&](int i, int c) {
    double u = mrf.unaries(i, c);
    const int forced = lt.clamp[static_cast<size_t>(i)];
    if (forced >= 0 && c != forced) u += clamp_penalty;
    return u;
  };

  const auto verify = [&](const Labeling& cand) {
    for (int i = 0; i < n; ++i) {
      const int forced = lt.clamp[static_cast<size_t>(i)];
      if (forced >= 0 && cand[static_cast<size_t>(i)] != forced)
        throw std::runtime_error("mrf: expansion violated a clamp despite the penalty");
    }
  };

  if (L == 2) {
    // Binary Potts is submodular: one exact cut over the full label space.
    BinaryCutBuilder builder(n);
    for (int i = 0; i < n; ++i) builder.add_unary(i, unary(i, 0), unary(i, 1));
    for (const auto& term : mrf.energies)
      if (const auto* p = std::get_if<PairwisePotts>(&term))
        builder.add_pairwise(p->i, p->j, 0.0, p->weight, p->weight, 0.0);
    const auto z = builder.solve();
    Labeling cand(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) cand[static_cast<size_t>(i)] = z[static_cast<size_t>(i)];
    verify(cand);
    return {std::move(cand), 0.0, MrfOptimality::Global};
  }

  double cur_energy = mrf_energy(mrf, y);
  for (int cycle = 0; cycle < 100; ++cycle) {
    bool improved = false;
    for (int a = 0; a < L; ++a) {
      BinaryCutBuilder builder(n);
      for (int i = 0; i < n; ++i)
        builder.add_unary(i, unary(i, y[static_cast<size_t>(i)]), unary(i, a));
      for (const auto& term : mrf.energies) {
        const auto* p = std::get_if<PairwisePotts>(&term);
        if (p == nullptr) continue;
        const int yi = y[static_cast<size_t>(p->i)], yj = y[static_cast<size_t>(p->j)];
        builder.add_pairwise(p->i, p->j, p->weight * (yi != yj),
                             p->weight * (yi != a), p->weight * (a != yj), 0.0);
      }
      const auto z = builder.solve();
      Labeling cand = y;
      for (int i = 0; i < n; ++i)
        if (z[static_cast<size_t>(i)]) cand[static_cast<size_t>(i)] = a;
      const double cand_energy = mrf_energy(mrf, cand);
      if (cand_energy < cur_energy) {
        verify(cand);
        y = std::move(cand);
        cur_energy = cand_energy;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return {std::move(y), cur_energy, MrfOptimality::LocalOrHeuristic};
}

}  // namespace

MrfResult solve_mrf(const MrfInstance& mrf, const Labeling& warm_start,
                    MrfSolverKind solver, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(warm_start.size()) != mrf.unaries.rows())
    throw std::invalid_argument("mrf: warm start length mismatch");
  Labeling warm = warm_start;
  double warm_energy = mrf_energy(mrf, warm);
  if (warm_energy == kInf) {
    log::debug("mrf: warm start infeasible, running repair pass");
    warm = repair_labeling(mrf, std::move(warm));
    warm_energy = mrf_energy(mrf, warm);
  }

  MrfResult result;
  switch (solver) {
    case MrfSolverKind::Exhaustive:
      result = solve_exhaustive(mrf, warm);
      break;
    case MrfSolverKind::ICM:
      result = solve_icm(mrf, warm, seed);
      break;
    case MrfSolverKind::AlphaExpansion:
      result = solve_expansion(mrf, warm);
      break;
  }
  result.energy = mrf_energy(mrf, result.labeling);
  if (result.energy > warm_energy) {  // descent contract
    result.labeling = std::move(warm);
    result.energy = warm_energy;
    result.optimality = MrfOptimality::LocalOrHeuristic;
  }
  return result;
}

GateDecision descent_gate(const LookupTable& table,
                          const std::vector<EnergyTerm>& energies,
                          const Labeling& y_prev, const Labeling& y_prop,
                          double delta) {
  const double e_prev = eval_total_energy(energies, y_prev);
  if (e_prev == kInf)
    throw std::invalid_argument("descent gate: previous labeling is infeasible");
  const double e_prop = eval_total_energy(energies, y_prop);
  if (e_prop == kInf) return GateDecision::Reject;
  double diff = e_prop - e_prev;
  for (Eigen::Index i = 0; i < table.u.rows(); ++i)
    diff += table.u(i, y_prop[static_cast<size_t>(i)]) -
            table.u(i, y_prev[static_cast<size_t>(i)]);
  return diff <= -delta ? GateDecision::Accept : GateDecision::Reject;
}

// ---------------------------------------------------------------------------
// Edmonds-Karp max-flow

MaxFlowGraph::MaxFlowGraph(int n_nodes) : adj_(static_cast<size_t>(n_nodes)) {}

void MaxFlowGraph::add_edge(int from, int to, double capacity) {
  if (!(capacity >= 0.0) || !std::isfinite(capacity))
    throw std::invalid_argument("maxflow: capacities must be finite and nonnegative");
  adj_[static_cast<size_t>(from)].push_back({to, capacity, static_cast<int>(adj_[static_cast<size_t>(to)].size())});
  adj_[static_cast<size_t>(to)].push_back({from, 0.0, static_cast<int>(adj_[static_cast<size_t>(from)].size()) - 1});
}

double MaxFlowGraph::solve(int source, int sink) {
  if (solved_) throw std::logic_error("maxflow: solve called twice");
  solved_ = true;
  const int n = static_cast<int>(adj_.size());
  double flow = 0.0;
  std::vector<int> prev_node(static_cast<size_t>(n));
  std::vector<int> prev_edge(static_cast<size_t>(n));
  while (true) {
    std::vector<char> seen(static_cast<size_t>(n), 0);
    std::deque<int> queue{source};
    seen[static_cast<size_t>(source)] = 1;
    bool found = false;
    while (!queue.empty() && !found) {
      const int u = queue.front();
      queue.pop_front();
      for (size_t k = 0; k < adj_[static_cast<size_t>(u)].size(); ++k) {
        const Edge& e = adj_[static_cast<size_t>(u)][k];
        if (e.cap <= 0.0 || seen[static_cast<size_t>(e.to)]) continue;
        seen[static_cast<size_t>(e.to)] = 1;
        prev_node[static_cast<size_t>(e.to)] = u;
        prev_edge[static_cast<size_t>(e.to)] = static_cast<int>(k);
        if (e.to == sink) {
          found = true;
          break;
        }
        queue.push_back(e.to);
      }
    }
    if (!found) break;
    double bottleneck = kInf;
    for (int v = sink; v != source; v = prev_node[static_cast<size_t>(v)])
      bottleneck = std::min(bottleneck,
                            adj_[static_cast<size_t>(prev_node[static_cast<size_t>(v)])]
                                [static_cast<size_t>(prev_edge[static_cast<size_t>(v)])].cap);
    for (int v = sink; v != source; v = prev_node[static_cast<size_t>(v)]) {
      Edge& e = adj_[static_cast<size_t>(prev_node[static_cast<size_t>(v)])]
                    [static_cast<size_t>(prev_edge[static_cast<size_t>(v)])];
      e.cap -= bottleneck;
      adj_[static_cast<size_t>(e.to)][static_cast<size_t>(e.rev)].cap += bottleneck;
    }
    flow += bottleneck;
  }
  // residual reachability from the source
  source_side_.assign(static_cast<size_t>(n), 0);
  std::deque<int> queue{source};
  source_side_[static_cast<size_t>(source)] = 1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (const Edge& e : adj_[static_cast<size_t>(u)]) {
      if (e.cap <= 0.0 || source_side_[static_cast<size_t>(e.to)]) continue;
      source_side_[static_cast<size_t>(e.to)] = 1;
      queue.push_back(e.to);
    }
  }
  return flow;
}

}  // namespace dcadmm
