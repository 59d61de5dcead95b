#include "graphbert/synthetic.hpp"

#include <fstream>
#include <random>

namespace graphbert {

Graph make_sbm(const SbmConfig& cfg) {
  if (cfg.classes == 0 || cfg.nodes_per_class == 0 || cfg.feature_dim < cfg.classes)
    throw ConfigError("make_sbm: need >=1 class, >=1 node per class, feature_dim >= classes");
  Rng rng(cfg.seed);
  Graph g;
  g.node_count = cfg.classes * cfg.nodes_per_class;
  g.feature_dim = cfg.feature_dim;
  g.num_classes = cfg.classes;
  g.features.assign(g.node_count * g.feature_dim, 0.0f);
  g.labels.resize(g.node_count);
  std::size_t block = cfg.feature_dim / cfg.classes;
  std::bernoulli_distribution on(cfg.signal), off(cfg.noise);
  for (std::size_t i = 0; i < g.node_count; ++i) {
    std::uint32_t cls = std::uint32_t(i / cfg.nodes_per_class);
    g.labels[i] = cls;
    g.node_ids.push_back("n" + std::to_string(i));
    for (std::size_t f = 0; f < g.feature_dim; ++f) {
      bool in_block = f >= cls * block && f < (cls + 1) * block;
      if (in_block ? on(rng) : off(rng)) g.features[i * g.feature_dim + f] = 1.0f;
    }
  }
  for (std::size_t c = 0; c < cfg.classes; ++c)
    g.class_names.push_back("class" + std::to_string(c));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint32_t i = 0; i < g.node_count; ++i)
    for (std::uint32_t j = i + 1; j < g.node_count; ++j) {
      double p = g.labels[i] == g.labels[j] ? cfg.p_in : cfg.p_out;
      if (u(rng) < p) {
        g.edges.push_back({i, j, 1.0f});
        g.edges.push_back({j, i, 1.0f});
      }
    }
  return g;
}

void write_planetoid(const Graph& graph, const std::string& content_path,
                     const std::string& cites_path) {
  std::ofstream content(content_path);
  if (!content) throw ParseError("cannot write " + content_path);
  for (std::size_t i = 0; i < graph.node_count; ++i) {
    content << graph.node_ids[i];
    for (std::size_t f = 0; f < graph.feature_dim; ++f)
      content << '\t' << graph.features[i * graph.feature_dim + f];
    content << '\t' << graph.class_names[graph.labels[i]] << '\n';
  }
  std::ofstream cites(cites_path);
  if (!cites) throw ParseError("cannot write " + cites_path);
  for (const Edge& e : graph.edges)
    if (e.src < e.dst) cites << graph.node_ids[e.src] << '\t' << graph.node_ids[e.dst] << '\n';
}

}  // namespace graphbert
