#pragma once

#include <string>

#include "graphbert/graph.hpp"
#include "graphbert/preprocess.hpp"

namespace graphbert {

std::string to_hex(std::uint64_t v);

// Cache directory layout: manifest.json (format version, k, alpha, graph
// hash, counts, dims) + flat little-endian binaries (contexts.u32,
// scores.f32, hops.u32, wl.u32). The owning graph's arrays (features.f32,
// labels.u32, edges.u32, weights.f32, node_ids.txt) are persisted alongside
// so a cache directory is self-contained.

void save_cache(const std::string& dir, const ContextCache& cache);

// Throws CacheInvalidError when the manifest disagrees with the expected
// graph hash / k / alpha, or when any array has the wrong length.
ContextCache load_cache(const std::string& dir, std::uint64_t expected_graph_hash,
                        std::size_t expected_k, double expected_alpha);

// True when `dir` already holds a cache matching (hash, k, alpha).
bool cache_matches(const std::string& dir, std::uint64_t graph_hash, std::size_t k, double alpha);

void save_graph(const std::string& dir, const Graph& graph);
Graph load_graph(const std::string& dir);

}  // namespace graphbert
