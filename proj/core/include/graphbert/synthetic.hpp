#pragma once

#include <string>

#include "graphbert/graph.hpp"

namespace graphbert {

// Stochastic-block-model citation-style graph with class-correlated binary
// bag-of-words features, for exercising the full pipeline without external
// datasets.
struct SbmConfig {
  std::size_t classes = 3;
  std::size_t nodes_per_class = 40;
  std::size_t feature_dim = 60;
  double p_in = 0.10;        // edge probability within a class
  double p_out = 0.01;       // edge probability across classes
  double signal = 0.5;       // chance a class-block feature bit is on
  double noise = 0.02;       // chance an off-block feature bit is on
  std::uint64_t seed = 7;
};

Graph make_sbm(const SbmConfig& config);

// Planetoid-style <name>.content / <name>.cites files for CLI round trips.
void write_planetoid(const Graph& graph, const std::string& content_path,
                     const std::string& cites_path);

}  // namespace graphbert
