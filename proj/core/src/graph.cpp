#include "graphbert/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace graphbert {

std::vector<std::vector<std::uint32_t>> Graph::adjacency() const {
  std::vector<std::vector<std::uint32_t>> adj(node_count);
  for (const Edge& e : edges) adj[e.src].push_back(e.dst);
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

std::uint64_t Graph::fingerprint() const {
  Fnv1a h;
  h.update_value(static_cast<std::uint64_t>(node_count));
  h.update_value(static_cast<std::uint64_t>(feature_dim));
  h.update_value(static_cast<std::uint64_t>(num_classes));
  if (!features.empty()) h.update(features.data(), features.size() * sizeof(float));
  if (!labels.empty()) h.update(labels.data(), labels.size() * sizeof(std::uint32_t));
  for (const Edge& e : edges) {
    h.update_value(e.src);
    h.update_value(e.dst);
    h.update_value(e.weight);
  }
  return h.digest();
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(std::move(tok));
  return out;
}

float parse_feature(const std::string& tok, const std::string& path, std::size_t lineno) {
  float v{};
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(path + ":" + std::to_string(lineno) + ": bad feature value '" + tok + "'");
  return v;
}

}  // namespace

Graph load_planetoid(const std::string& content_path, const std::string& cites_path) {
  std::ifstream content(content_path);
  if (!content) throw ParseError("cannot open content file: " + content_path);

  Graph g;
  std::unordered_map<std::string, std::uint32_t> id_index;
  std::unordered_map<std::string, std::uint32_t> class_index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(content, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 3)
      throw ParseError(content_path + ":" + std::to_string(lineno) +
                       ": expected <id> <features...> <label>, got " +
                       std::to_string(toks.size()) + " fields");
    std::size_t width = toks.size() - 2;
    if (g.feature_dim == 0 && g.node_count == 0) {
      g.feature_dim = width;
    } else if (width != g.feature_dim) {
      throw SchemaError(content_path + ":" + std::to_string(lineno) + ": feature width " +
                        std::to_string(width) + " differs from established width " +
                        std::to_string(g.feature_dim));
    }
    const std::string& id = toks.front();
    if (id_index.count(id))
      throw SchemaError(content_path + ":" + std::to_string(lineno) + ": duplicate node id '" +
                        id + "'");
    id_index.emplace(id, static_cast<std::uint32_t>(g.node_count));
    g.node_ids.push_back(id);
    for (std::size_t j = 1; j + 1 < toks.size(); ++j)
      g.features.push_back(parse_feature(toks[j], content_path, lineno));
    const std::string& label = toks.back();
    auto it = class_index.find(label);
    if (it == class_index.end()) {
      it = class_index.emplace(label, static_cast<std::uint32_t>(g.class_names.size())).first;
      g.class_names.push_back(label);
    }
    g.labels.push_back(it->second);
    ++g.node_count;
  }
  g.num_classes = g.class_names.size();

  std::ifstream cites(cites_path);
  if (!cites) throw ParseError("cannot open cites file: " + cites_path);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(cites_path + ":" + std::to_string(lineno) +
                       ": expected <cited_id> <citing_id>, got " + std::to_string(toks.size()) +
                       " fields");
    auto a = id_index.find(toks[0]);
    auto b = id_index.find(toks[1]);
    if (a == id_index.end() || b == id_index.end()) {
      ++g.dropped_citations;
      continue;
    }
    if (a->second == b->second) {
      ++g.dropped_self_loops;
      continue;
    }
    seen.emplace(a->second, b->second);
    seen.emplace(b->second, a->second);
  }
  g.edges.reserve(seen.size());
  for (auto [s, d] : seen) g.edges.push_back({s, d, 1.0f});
  return g;
}

DatasetSplit standard_split(const Graph& graph, std::size_t train_per_class, std::size_t val_size,
                            std::size_t test_size, std::uint64_t seed) {
  std::size_t need = train_per_class * graph.num_classes + val_size + test_size;
  if (need > graph.node_count)
    throw ConfigError("split request needs " + std::to_string(need) + " nodes but graph has " +
                      std::to_string(graph.node_count));

  std::vector<std::vector<std::uint32_t>> by_class(graph.num_classes);
  for (std::uint32_t i = 0; i < graph.node_count; ++i) by_class[graph.labels[i]].push_back(i);

  Rng rng(seed);
  DatasetSplit split;
  std::vector<bool> taken(graph.node_count, false);
  for (std::size_t c = 0; c < graph.num_classes; ++c) {
    if (by_class[c].size() < train_per_class)
      throw ConfigError("class '" + graph.class_names[c] + "' has only " +
                        std::to_string(by_class[c].size()) + " nodes, need " +
                        std::to_string(train_per_class) + " for training");
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (std::size_t j = 0; j < train_per_class; ++j) {
      split.train.push_back(by_class[c][j]);
      taken[by_class[c][j]] = true;
    }
  }
  std::sort(split.train.begin(), split.train.end());

  std::vector<std::uint32_t> rest;
  for (std::uint32_t i = 0; i < graph.node_count; ++i)
    if (!taken[i]) rest.push_back(i);
  std::shuffle(rest.begin(), rest.end(), rng);
  split.validation.assign(rest.begin(), rest.begin() + std::ptrdiff_t(val_size));
  split.test.assign(rest.begin() + std::ptrdiff_t(val_size),
                    rest.begin() + std::ptrdiff_t(val_size + test_size));
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace graphbert
