#include "graphbert/model.hpp"

#include <cmath>
#include <sstream>

namespace graphbert {

ResidualMode residual_mode_from_string(const std::string& s) {
  if (s == "none") return ResidualMode::none;
  if (s == "raw") return ResidualMode::raw;
  if (s == "graph_raw" || s == "graph-raw") return ResidualMode::graph_raw;
  throw ConfigError("unknown residual_mode '" + s + "' (expected none|raw|graph_raw)");
}

std::string to_string(ResidualMode m) {
  switch (m) {
    case ResidualMode::none: return "none";
    case ResidualMode::raw: return "raw";
    case ResidualMode::graph_raw: return "graph_raw";
  }
  return "?";
}

ResidualVariant residual_variant_from_string(const std::string& s) {
  if (s == "broadcast") return ResidualVariant::broadcast;
  if (s == "propagated") return ResidualVariant::propagated;
  throw ConfigError("unknown residual_variant '" + s + "' (expected broadcast|propagated)");
}

std::string to_string(ResidualVariant v) {
  return v == ResidualVariant::broadcast ? "broadcast" : "propagated";
}

std::uint32_t embedding_sources_from_string(const std::string& csv) {
  std::uint32_t mask = 0;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    if (tok == "raw") mask |= EMBED_RAW;
    else if (tok == "wl") mask |= EMBED_WL;
    else if (tok == "position") mask |= EMBED_POSITION;
    else if (tok == "hop") mask |= EMBED_HOP;
    else if (tok == "all") mask |= EMBED_ALL;
    else throw ConfigError("unknown embedding source '" + tok + "' (expected raw|wl|position|hop)");
  }
  if (mask == 0) throw ConfigError("embedding source list must not be empty");
  return mask;
}

std::string embedding_sources_to_string(std::uint32_t mask) {
  std::string out;
  auto app = [&](const char* s) {
    if (!out.empty()) out += ',';
    out += s;
  };
  if (mask & EMBED_RAW) app("raw");
  if (mask & EMBED_WL) app("wl");
  if (mask & EMBED_POSITION) app("position");
  if (mask & EMBED_HOP) app("hop");
  return out;
}

void ModelConfig::validate() const {
  if (hidden_size == 0 || hidden_size % 2 != 0)
    throw ConfigError("hidden_size must be a positive even number (sin/cos pairing), got " +
                      std::to_string(hidden_size));
  if (heads == 0 || hidden_size % heads != 0)
    throw ConfigError("hidden_size " + std::to_string(hidden_size) +
                      " must be divisible by head count " + std::to_string(heads));
  if (depth == 0) throw ConfigError("depth must be >= 1");
  if (embedding_sources == 0 || (embedding_sources & ~EMBED_ALL))
    throw ConfigError("invalid embedding source mask");
  if (hidden_dropout < 0 || hidden_dropout >= 1 || attention_dropout < 0 || attention_dropout >= 1)
    throw ConfigError("dropout rates must be in [0, 1)");
  if (feature_dim == 0) throw ConfigError("feature_dim must be set");
}

std::vector<double> position_embed(std::uint64_t code, std::size_t d_h, bool classic) {
  if (d_h == 0 || d_h % 2 != 0)
    throw ConfigError("position_embed: width must be even, got " + std::to_string(d_h));
  std::vector<double> out(d_h);
  double c = double(code);
  for (std::size_t l = 0; l < d_h / 2; ++l) {
    double sin_exp = double(2 * l) / double(d_h);
    double cos_exp = classic ? sin_exp : double(2 * l + 1) / double(d_h);
    out[2 * l] = std::sin(c / std::pow(10000.0, sin_exp));
    out[2 * l + 1] = std::cos(c / std::pow(10000.0, cos_exp));
  }
  return out;
}

std::vector<double> propagated_features(const Graph& graph) {
  SparseColMatrix abar = normalized_adjacency(graph);
  std::size_t n = graph.node_count, dx = graph.feature_dim;
  std::vector<double> out(n * dx, 0.0);
  // row i of Abar^T X = sum over column i's entries (j, v) of v * x_j
  for (std::size_t i = 0; i < n; ++i)
    for (auto [j, v] : abar.cols[i])
      for (std::size_t c = 0; c < dx; ++c)
        out[i * dx + c] += v * double(graph.features[std::size_t(j) * dx + c]);
  return out;
}

}  // namespace graphbert
