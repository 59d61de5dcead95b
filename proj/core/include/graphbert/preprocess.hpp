#pragma once

#include <cstdint>
#include <vector>

#include "graphbert/graph.hpp"

namespace graphbert {

// Column-stochastic normalized adjacency, stored by column. Isolated nodes
// receive a normalization-only self-loop so every column sums to 1.
struct SparseColMatrix {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> cols;  // col j -> (row i, value)

  std::vector<double> to_dense() const;  // n x n row-major
};

SparseColMatrix normalized_adjacency(const Graph& graph);

// Personalized-PageRank intimacy scores S = alpha * (I - (1-alpha) Abar)^-1,
// dense row-major. S(i, j) is read as row i = target, column j = candidate.
struct IntimacyMatrix {
  std::size_t n = 0;
  double alpha = 0.15;
  std::vector<double> S;  // n x n row-major

  double at(std::size_t i, std::size_t j) const { return S[i * n + j]; }
};

// Dense linear solve per column (never forms the explicit inverse).
IntimacyMatrix intimacy_dense(const SparseColMatrix& abar, double alpha);

// Per-column iteration s <- alpha e_j + (1-alpha) Abar s until the L1 change
// drops below tol. `workers` splits columns over threads; output is
// independent of the worker count.
IntimacyMatrix intimacy_power(const SparseColMatrix& abar, double alpha, double tol,
                              std::size_t max_iter, std::size_t workers = 1);

// Precomputed batching substrate: top-k contexts, scores, hop distances and
// WL structural codes. `hop_unreachable()` marks context nodes in another
// component.
struct ContextCache {
  std::size_t node_count = 0;
  std::size_t k = 0;
  double alpha = 0.15;
  std::uint64_t graph_hash = 0;
  std::vector<std::uint32_t> contexts;  // node_count x k
  std::vector<float> scores;            // node_count x k
  std::vector<std::uint32_t> hops;      // node_count x k
  std::vector<std::uint32_t> wl;        // node_count

  std::uint32_t hop_unreachable() const { return static_cast<std::uint32_t>(node_count); }
};

// Highest-k scores per row excluding the target itself; ties broken by
// ascending node index. k is clamped to n-1 (with a warning) when larger.
void topk_context(const IntimacyMatrix& S, std::size_t k, ContextCache& cache);

// BFS over the symmetrized graph from every target; records distances only
// for that target's context nodes.
void hop_distances(const Graph& graph, ContextCache& cache);

// Weisfeiler-Lehman color refinement from all-equal initial colors; stable
// classes are numbered by lexicographic order of their signature strings,
// making the codes independent of node order. max_iter 0 means |V| rounds.
std::vector<std::uint32_t> wl_codes(const Graph& graph, std::size_t max_iter = 0);

ContextCache build_cache(const Graph& graph, std::size_t k, double alpha,
                         std::size_t workers = 1);

}  // namespace graphbert
