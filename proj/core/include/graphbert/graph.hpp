#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphbert/common.hpp"

namespace graphbert {

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  float weight = 1.0f;
};

// In-memory citation graph. Node order is first-appearance order in the
// content file; all downstream indices refer to it. Edges are stored
// symmetrized (both directions), deduplicated, self-loops dropped.
struct Graph {
  std::size_t node_count = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<std::string> node_ids;
  std::vector<std::string> class_names;  // class index -> original label string
  std::vector<float> features;           // node_count x feature_dim, row-major
  std::vector<std::uint32_t> labels;
  std::vector<Edge> edges;
  std::size_t dropped_citations = 0;  // cites lines referencing unknown ids
  std::size_t dropped_self_loops = 0;

  // Neighbor lists in ascending order, derived from `edges`.
  std::vector<std::vector<std::uint32_t>> adjacency() const;

  // Content fingerprint over features, labels and edges (order-sensitive).
  std::uint64_t fingerprint() const;
};

struct DatasetSplit {
  std::vector<std::uint32_t> train, validation, test;
};

// Parses whitespace-delimited Planetoid-style files:
//   content: <node_id> <f_1> ... <f_dx> <class_label>
//   cites:   <cited_id> <citing_id>
Graph load_planetoid(const std::string& content_path, const std::string& cites_path);

// Deterministic class-balanced split: `train_per_class` nodes per class,
// then `val_size` and `test_size` nodes drawn from the remainder.
DatasetSplit standard_split(const Graph& graph, std::size_t train_per_class, std::size_t val_size,
                            std::size_t test_size, std::uint64_t seed = 42);

}  // namespace graphbert
