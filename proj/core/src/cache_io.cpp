#include "graphbert/cache_io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace graphbert {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 0xf];
  return s;
}

namespace {

constexpr int kFormatVersion = 1;

template <typename T>
void write_bin(const fs::path& path, const std::vector<T>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(data.data()),
           std::streamsize(data.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_bin(const fs::path& path, std::size_t expected_count) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw CacheInvalidError("missing cache array: " + path.string());
  std::size_t bytes = std::size_t(is.tellg());
  if (bytes != expected_count * sizeof(T))
    throw CacheInvalidError(path.string() + ": expected " +
                            std::to_string(expected_count * sizeof(T)) + " bytes, found " +
                            std::to_string(bytes));
  std::vector<T> data(expected_count);
  is.seekg(0);
  is.read(reinterpret_cast<char*>(data.data()), std::streamsize(bytes));
  return data;
}

json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw CacheInvalidError("missing manifest: " + (dir / "manifest.json").string());
  json m;
  try {
    is >> m;
  } catch (const json::exception& e) {
    throw CacheInvalidError("unreadable manifest in " + dir.string() + ": " + e.what());
  }
  return m;
}

}  // namespace

void save_cache(const std::string& dir, const ContextCache& cache) {
  fs::create_directories(dir);
  fs::path d(dir);
  json m;
  m["format_version"] = kFormatVersion;
  m["node_count"] = cache.node_count;
  m["k"] = cache.k;
  m["alpha"] = cache.alpha;
  m["graph_hash"] = to_hex(cache.graph_hash);
  std::ofstream os(d / "manifest.json");
  os << m.dump(2) << "\n";
  write_bin(d / "contexts.u32", cache.contexts);
  write_bin(d / "scores.f32", cache.scores);
  write_bin(d / "hops.u32", cache.hops);
  write_bin(d / "wl.u32", cache.wl);
}

ContextCache load_cache(const std::string& dir, std::uint64_t expected_graph_hash,
                        std::size_t expected_k, double expected_alpha) {
  fs::path d(dir);
  json m = read_manifest(d);
  if (m.value("format_version", -1) != kFormatVersion)
    throw CacheInvalidError(dir + ": unsupported cache format version");
  ContextCache cache;
  cache.node_count = m.at("node_count").get<std::size_t>();
  cache.k = m.at("k").get<std::size_t>();
  cache.alpha = m.at("alpha").get<double>();
  cache.graph_hash = std::stoull(m.at("graph_hash").get<std::string>(), nullptr, 16);
  if (cache.graph_hash != expected_graph_hash)
    throw CacheInvalidError(dir + ": cache was built for a different graph (hash " +
                            m.at("graph_hash").get<std::string>() + ", expected " +
                            to_hex(expected_graph_hash) + ")");
  std::size_t eff_k = std::min(expected_k, cache.node_count - 1);
  if (cache.k != eff_k)
    throw CacheInvalidError(dir + ": cache was built with k=" + std::to_string(cache.k) +
                            ", requested k=" + std::to_string(expected_k));
  if (std::abs(cache.alpha - expected_alpha) > 1e-12)
    throw CacheInvalidError(dir + ": cache was built with alpha=" + std::to_string(cache.alpha) +
                            ", requested alpha=" + std::to_string(expected_alpha));
  std::size_t n = cache.node_count, k = cache.k;
  cache.contexts = read_bin<std::uint32_t>(d / "contexts.u32", n * k);
  cache.scores = read_bin<float>(d / "scores.f32", n * k);
  cache.hops = read_bin<std::uint32_t>(d / "hops.u32", n * k);
  cache.wl = read_bin<std::uint32_t>(d / "wl.u32", n);
  return cache;
}

bool cache_matches(const std::string& dir, std::uint64_t graph_hash, std::size_t k, double alpha) {
  fs::path d(dir);
  if (!fs::exists(d / "manifest.json")) return false;
  try {
    json m = read_manifest(d);
    if (m.value("format_version", -1) != kFormatVersion) return false;
    std::size_t n = m.at("node_count").get<std::size_t>();
    std::size_t eff_k = std::min(k, n - 1);
    return m.at("graph_hash").get<std::string>() == to_hex(graph_hash) &&
           m.at("k").get<std::size_t>() == eff_k &&
           std::abs(m.at("alpha").get<double>() - alpha) <= 1e-12;
  } catch (const std::exception&) {
    return false;
  }
}

void save_graph(const std::string& dir, const Graph& graph) {
  fs::create_directories(dir);
  fs::path d(dir);
  json m;
  m["format_version"] = kFormatVersion;
  m["node_count"] = graph.node_count;
  m["feature_dim"] = graph.feature_dim;
  m["num_classes"] = graph.num_classes;
  m["edge_count"] = graph.edges.size();
  m["class_names"] = graph.class_names;
  m["dropped_citations"] = graph.dropped_citations;
  m["dropped_self_loops"] = graph.dropped_self_loops;
  m["graph_hash"] = to_hex(graph.fingerprint());
  std::ofstream os(d / "graph.json");
  os << m.dump(2) << "\n";
  write_bin(d / "features.f32", graph.features);
  write_bin(d / "labels.u32", graph.labels);
  std::vector<std::uint32_t> endpoints;
  std::vector<float> weights;
  endpoints.reserve(graph.edges.size() * 2);
  weights.reserve(graph.edges.size());
  for (const Edge& e : graph.edges) {
    endpoints.push_back(e.src);
    endpoints.push_back(e.dst);
    weights.push_back(e.weight);
  }
  write_bin(d / "edges.u32", endpoints);
  write_bin(d / "weights.f32", weights);
  std::ofstream ids(d / "node_ids.txt");
  for (const auto& id : graph.node_ids) ids << id << "\n";
}

Graph load_graph(const std::string& dir) {
  fs::path d(dir);
  std::ifstream mf(d / "graph.json");
  if (!mf) throw CacheInvalidError("missing graph manifest: " + (d / "graph.json").string());
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw CacheInvalidError("unreadable graph manifest in " + dir + ": " + e.what());
  }
  Graph g;
  g.node_count = m.at("node_count").get<std::size_t>();
  g.feature_dim = m.at("feature_dim").get<std::size_t>();
  g.num_classes = m.at("num_classes").get<std::size_t>();
  g.class_names = m.at("class_names").get<std::vector<std::string>>();
  g.dropped_citations = m.value("dropped_citations", std::size_t(0));
  g.dropped_self_loops = m.value("dropped_self_loops", std::size_t(0));
  std::size_t ec = m.at("edge_count").get<std::size_t>();
  g.features = read_bin<float>(d / "features.f32", g.node_count * g.feature_dim);
  g.labels = read_bin<std::uint32_t>(d / "labels.u32", g.node_count);
  auto endpoints = read_bin<std::uint32_t>(d / "edges.u32", ec * 2);
  auto weights = read_bin<float>(d / "weights.f32", ec);
  g.edges.resize(ec);
  for (std::size_t i = 0; i < ec; ++i)
    g.edges[i] = {endpoints[2 * i], endpoints[2 * i + 1], weights[i]};
  std::ifstream ids(d / "node_ids.txt");
  std::string line;
  while (std::getline(ids, line))
    if (!line.empty()) g.node_ids.push_back(line);
  if (g.node_ids.size() != g.node_count)
    throw CacheInvalidError(dir + ": node id list length mismatch");
  std::string expect = m.at("graph_hash").get<std::string>();
  if (to_hex(g.fingerprint()) != expect)
    throw CacheInvalidError(dir + ": graph content hash mismatch");
  return g;
}

}  // namespace graphbert
