#pragma once

#include <cstdint>
#include <vector>

#include "graphbert/common.hpp"

namespace graphbert {

struct Clustering {
  std::size_t cluster_count = 0;
  std::vector<double> centers;  // cluster_count x dim, row-major
  std::vector<std::uint32_t> assignment;
  double objective = 0.0;  // sum of unsquared point-center distances
};

// Lloyd iterations with k-means++ seeding; assignment minimizes squared
// distance, centers are cluster means, empty clusters are repaired by
// stealing the farthest point of the largest cluster. Best of `restarts`
// runs by the (unsquared) objective, ties by restart index.
Clustering kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim, std::size_t l,
                  std::uint64_t seed = 1, std::size_t restarts = 10, std::size_t max_iter = 300);

struct ClusteringMetrics {
  double rand = 0.0;           // raw Rand index
  double adjusted_rand = 0.0;  // ARI
  double adjusted_mi = 0.0;    // AMI, arithmetic normalization
  double normalized_mi = 0.0;  // NMI, arithmetic normalization
  double homogeneity = 0.0;
  double completeness = 0.0;
};

ClusteringMetrics clustering_metrics(const std::vector<std::uint32_t>& assignment,
                                     const std::vector<std::uint32_t>& labels);

}  // namespace graphbert
