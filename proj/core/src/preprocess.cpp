#include "graphbert/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace graphbert {

std::vector<double> SparseColMatrix::to_dense() const {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (auto [i, v] : cols[j]) out[std::size_t(i) * n + j] = v;
  return out;
}

SparseColMatrix normalized_adjacency(const Graph& graph) {
  SparseColMatrix m;
  m.n = graph.node_count;
  m.cols.resize(m.n);
  std::vector<double> degree(m.n, 0.0);
  for (const Edge& e : graph.edges) degree[e.src] += e.weight;
  // Abar = A D^-1: column j holds A(:, j) / degree(j). A is symmetric, so
  // A(i, j) comes from the stored (j -> i) direction as well.
  for (const Edge& e : graph.edges)
    m.cols[e.src].push_back({e.dst, double(e.weight) / degree[e.src]});
  for (std::size_t j = 0; j < m.n; ++j) {
    if (m.cols[j].empty()) {
      m.cols[j].push_back({static_cast<std::uint32_t>(j), 1.0});  // isolated node
    } else {
      std::sort(m.cols[j].begin(), m.cols[j].end());
    }
  }
  return m;
}

IntimacyMatrix intimacy_dense(const SparseColMatrix& abar, double alpha) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("intimacy: alpha must be in (0, 1]");
  const std::size_t n = abar.n;
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(Eigen::Index(n), Eigen::Index(n));
  for (std::size_t j = 0; j < n; ++j)
    for (auto [i, v] : abar.cols[j]) M(Eigen::Index(i), Eigen::Index(j)) -= (1.0 - alpha) * v;
  Eigen::MatrixXd rhs =
      alpha * Eigen::MatrixXd::Identity(Eigen::Index(n), Eigen::Index(n));
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Eigen::MatrixXd X = lu.solve(rhs);
  double residual = (M * X - rhs).cwiseAbs().maxCoeff();
  if (residual > 1e-6)
    throw NumericError("intimacy_dense: solve residual " + std::to_string(residual));
  IntimacyMatrix out;
  out.n = n;
  out.alpha = alpha;
  out.S.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.S[i * n + j] = X(Eigen::Index(i), Eigen::Index(j));
  return out;
}

IntimacyMatrix intimacy_power(const SparseColMatrix& abar, double alpha, double tol,
                              std::size_t max_iter, std::size_t workers) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("intimacy: alpha must be in (0, 1]");
  if (tol <= 0.0) throw ConfigError("intimacy_power: tol must be positive");
  const std::size_t n = abar.n;
  IntimacyMatrix out;
  out.n = n;
  out.alpha = alpha;
  out.S.assign(n * n, 0.0);

  auto run_columns = [&](std::size_t begin, std::size_t end) {
    std::vector<double> s(n), next(n);
    for (std::size_t col = begin; col < end; ++col) {
      std::fill(s.begin(), s.end(), 0.0);
      s[col] = 1.0;
      double change = 0.0;
      std::size_t it = 0;
      for (; it < max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        next[col] = alpha;
        for (std::size_t c = 0; c < n; ++c) {
          double sc = s[c];
          if (sc == 0.0) continue;
          double w = (1.0 - alpha) * sc;
          for (auto [row, v] : abar.cols[c]) next[row] += w * v;
        }
        change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - s[i]);
        s.swap(next);
        if (change < tol) break;
      }
      if (it == max_iter && change >= tol)
        throw NumericError("intimacy_power: column " + std::to_string(col) +
                           " did not converge, residual " + std::to_string(change));
      for (std::size_t i = 0; i < n; ++i) out.S[i * n + col] = s[i];
    }
  };

  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    run_columns(0, n);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      std::size_t b = w * chunk, e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back([&, b, e] {
        try {
          run_columns(b, e);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }
  return out;
}

void topk_context(const IntimacyMatrix& S, std::size_t k, ContextCache& cache) {
  const std::size_t n = S.n;
  if (k == 0) throw ConfigError("topk_context: k must be >= 1");
  if (k >= n) {
    std::cerr << "warning: k=" << k << " >= node count " << n << ", clamping to " << n - 1
              << " (context = all other nodes)\n";
    k = n - 1;
  }
  cache.node_count = n;
  cache.k = k;
  cache.contexts.assign(n * k, 0);
  cache.scores.assign(n * k, 0.0f);
  std::vector<std::pair<double, std::uint32_t>> row;  // (-score, index) for sort
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.push_back({-S.at(i, j), static_cast<std::uint32_t>(j)});
    std::partial_sort(row.begin(), row.begin() + std::ptrdiff_t(k), row.end());
    for (std::size_t j = 0; j < k; ++j) {
      cache.contexts[i * k + j] = row[j].second;
      cache.scores[i * k + j] = static_cast<float>(-row[j].first);
    }
  }
}

void hop_distances(const Graph& graph, ContextCache& cache) {
  const std::size_t n = graph.node_count;
  const std::size_t k = cache.k;
  const std::uint32_t unreachable = cache.hop_unreachable();
  auto adj = graph.adjacency();
  cache.hops.assign(n * k, unreachable);
  std::vector<std::uint32_t> dist(n);
  std::deque<std::uint32_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist.begin(), dist.end(), unreachable);
    dist[i] = 0;
    queue.clear();
    queue.push_back(static_cast<std::uint32_t>(i));
    while (!queue.empty()) {
      std::uint32_t u = queue.front();
      queue.pop_front();
      for (std::uint32_t v : adj[u])
        if (dist[v] == unreachable) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
    }
    for (std::size_t j = 0; j < k; ++j) cache.hops[i * k + j] = dist[cache.contexts[i * k + j]];
  }
}

std::vector<std::uint32_t> wl_codes(const Graph& graph, std::size_t max_iter) {
  const std::size_t n = graph.node_count;
  if (n == 0) return {};
  if (max_iter == 0) max_iter = n;
  auto adj = graph.adjacency();
  std::vector<std::uint32_t> color(n, 0);
  std::size_t distinct = 1;
  std::vector<std::string> sig(n);
  for (std::size_t round = 0; round < max_iter; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint32_t> nb;
      nb.reserve(adj[i].size());
      for (std::uint32_t v : adj[i]) nb.push_back(color[v]);
      std::sort(nb.begin(), nb.end());
      std::ostringstream os;
      os << color[i] << '|';
      for (std::size_t j = 0; j < nb.size(); ++j) os << (j ? "," : "") << nb[j];
      sig[i] = os.str();
    }
    // Canonical renumbering: classes get consecutive integers by
    // lexicographic signature order, so codes don't depend on node order.
    std::map<std::string, std::uint32_t> rank;
    for (const auto& s : sig) rank.emplace(s, 0);
    std::uint32_t next = 0;
    for (auto& [s, r] : rank) r = next++;
    // Color refinement only splits classes, so an unchanged class count
    // means the partition is stable.
    if (rank.size() == distinct && round > 0) break;
    distinct = rank.size();
    for (std::size_t i = 0; i < n; ++i) color[i] = rank[sig[i]];
    if (distinct == n) break;
  }
  return color;
}

ContextCache build_cache(const Graph& graph, std::size_t k, double alpha, std::size_t workers) {
  SparseColMatrix abar = normalized_adjacency(graph);
  IntimacyMatrix S = intimacy_power(abar, alpha, 1e-10, 100000, workers);
  ContextCache cache;
  cache.alpha = alpha;
  cache.graph_hash = graph.fingerprint();
  topk_context(S, k, cache);
  hop_distances(graph, cache);
  cache.wl = wl_codes(graph);
  return cache;
}

}  // namespace graphbert
