#include "graphbert/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace graphbert {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0;
  for (std::size_t c = 0; c < dim; ++c) {
    double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

struct RunResult {
  Clustering clustering;
  double squared_objective = 0.0;
};

RunResult kmeans_once(const std::vector<double>& pts, std::size_t n, std::size_t dim,
                      std::size_t l, Rng& rng, std::size_t max_iter) {
  Clustering c;
  c.cluster_count = l;
  c.centers.assign(l * dim, 0.0);
  c.assignment.assign(n, 0);

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy_n(pts.data() + pick * dim, dim, c.centers.data());
  for (std::size_t ctr = 1; ctr < l; ++ctr) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts.data() + i * dim, c.centers.data() + (ctr - 1) * dim, dim));
      total += d2[i];
    }
    if (total <= 0) {
      // all remaining points coincide with chosen centers; pick arbitrarily
      pick = first(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(pts.data() + pick * dim, dim, c.centers.data() + ctr * dim);
  }

  std::vector<std::size_t> counts(l, 0);
  double prev_sq = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // assignment: nearest center by squared distance, ties to lower index
    bool changed = false;
    double sq_obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(pts.data() + i * dim, c.centers.data(), dim);
      for (std::size_t j = 1; j < l; ++j) {
        double d = sq_dist(pts.data() + i * dim, c.centers.data() + j * dim, dim);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      sq_obj += bd;
      if (c.assignment[i] != best) {
        c.assignment[i] = std::uint32_t(best);
        changed = true;
      }
    }
    if (sq_obj > prev_sq + 1e-9 * (1.0 + prev_sq))
      throw NumericError("kmeans: squared objective increased across an iteration");
    prev_sq = sq_obj;

    // center step: cluster means
    std::fill(c.centers.begin(), c.centers.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[c.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) c.centers[c.assignment[i] * dim + d] += pts[i * dim + d];
    }
    for (std::size_t j = 0; j < l; ++j)
      if (counts[j])
        for (std::size_t d = 0; d < dim; ++d) c.centers[j * dim + d] /= double(counts[j]);

    // repair: give each empty cluster the farthest point of the largest one
    for (std::size_t j = 0; j < l; ++j) {
      if (counts[j]) continue;
      std::size_t biggest = std::size_t(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double fd = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (c.assignment[i] != biggest) continue;
        double d = sq_dist(pts.data() + i * dim, c.centers.data() + biggest * dim, dim);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      --counts[biggest];
      counts[j] = 1;
      c.assignment[far] = std::uint32_t(j);
      std::copy_n(pts.data() + far * dim, dim, c.centers.data() + j * dim);
      changed = true;
      prev_sq = std::numeric_limits<double>::infinity();  // repair may raise it
    }
    if (!changed && iter > 0) break;
  }

  RunResult out;
  out.squared_objective = prev_sq;
  c.objective = 0;
  for (std::size_t i = 0; i < n; ++i)
    c.objective += std::sqrt(sq_dist(pts.data() + i * dim, c.centers.data() + c.assignment[i] * dim, dim));
  out.clustering = std::move(c);
  return out;
}

}  // namespace

Clustering kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim, std::size_t l,
                  std::uint64_t seed, std::size_t restarts, std::size_t max_iter) {
  if (l == 0 || l > n)
    throw ConfigError("kmeans: cluster count " + std::to_string(l) + " must be in [1, " +
                      std::to_string(n) + "]");
  if (points.size() != n * dim) throw ShapeError("kmeans: point matrix size mismatch");
  Clustering best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(seed + r);
    RunResult run = kmeans_once(points, n, dim, l, rng, max_iter);
    if (run.clustering.objective < best_obj) {
      best_obj = run.clustering.objective;
      best = std::move(run.clustering);
    }
  }
  return best;
}

namespace {

double log_comb2(double m) { return m * (m - 1.0) / 2.0; }  // C(m, 2)

}  // namespace

ClusteringMetrics clustering_metrics(const std::vector<std::uint32_t>& assignment,
                                     const std::vector<std::uint32_t>& labels) {
  if (assignment.size() != labels.size())
    throw ShapeError("clustering_metrics: length mismatch");
  const std::size_t n = labels.size();
  if (n == 0) throw ConfigError("clustering_metrics: empty input");
  std::size_t R = *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::size_t C = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> table(R * C, 0.0), a(R, 0.0), b(C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    table[assignment[i] * C + labels[i]] += 1;
    a[assignment[i]] += 1;
    b[labels[i]] += 1;
  }

  ClusteringMetrics m;
  double sum_nij2 = 0, sum_a2 = 0, sum_b2 = 0;
  for (double x : table) sum_nij2 += log_comb2(x);
  for (double x : a) sum_a2 += log_comb2(x);
  for (double x : b) sum_b2 += log_comb2(x);
  double total2 = log_comb2(double(n));

  m.rand = total2 > 0 ? (total2 + 2 * sum_nij2 - sum_a2 - sum_b2) / total2 : 1.0;
  double expected = total2 > 0 ? sum_a2 * sum_b2 / total2 : 0.0;
  double max_index = 0.5 * (sum_a2 + sum_b2);
  m.adjusted_rand =
      std::abs(max_index - expected) < 1e-12 ? 1.0 : (sum_nij2 - expected) / (max_index - expected);

  double hu = 0, hv = 0, mi = 0;  // H(assignment), H(labels), MI
  for (double x : a)
    if (x > 0) hu -= (x / n) * std::log(x / n);
  for (double x : b)
    if (x > 0) hv -= (x / n) * std::log(x / n);
  double h_l_given_c = 0, h_c_given_l = 0;  // H(labels|assignment), H(assignment|labels)
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      double x = table[i * C + j];
      if (x <= 0) continue;
      mi += (x / n) * std::log(double(n) * x / (a[i] * b[j]));
      h_l_given_c -= (x / n) * std::log(x / a[i]);
      h_c_given_l -= (x / n) * std::log(x / b[j]);
    }

  double mean_h = 0.5 * (hu + hv);
  m.normalized_mi = mean_h > 1e-15 ? mi / mean_h : 1.0;
  m.homogeneity = hv > 1e-15 ? 1.0 - h_l_given_c / hv : 1.0;
  m.completeness = hu > 1e-15 ? 1.0 - h_c_given_l / hu : 1.0;

  // Expected MI under the hypergeometric model of fixed marginals.
  std::vector<double> lg(n + 2);  // lgamma(i) lookups: lg[i] = lgamma(i+1) = log(i!)
  for (std::size_t i = 0; i < lg.size(); ++i) lg[i] = std::lgamma(double(i) + 1.0);
  double emi = 0;
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      double ai = a[i], bj = b[j];
      std::size_t lo = std::size_t(std::max(1.0, ai + bj - double(n)));
      std::size_t hi = std::size_t(std::min(ai, bj));
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        double x = double(nij);
        double term1 = (x / n) * std::log(double(n) * x / (ai * bj));
        double logp = lg[std::size_t(ai)] + lg[std::size_t(bj)] + lg[n - std::size_t(ai)] +
                      lg[n - std::size_t(bj)] - lg[n] - lg[nij] - lg[std::size_t(ai) - nij] -
                      lg[std::size_t(bj) - nij] - lg[n - std::size_t(ai) - std::size_t(bj) + nij];
        emi += term1 * std::exp(logp);
      }
    }
  }
  double denom = mean_h - emi;
  m.adjusted_mi = std::abs(denom) < 1e-15 ? (std::abs(mi - emi) < 1e-15 ? 1.0 : 0.0)
                                          : (mi - emi) / denom;
  return m;
}

}  // namespace graphbert
