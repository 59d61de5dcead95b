// Batch pipeline driver: dataset ingestion, cache building, pre-training,
// fine-tuning, clustering, ablation sweeps and result tables.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include "graphbert/cache_io.hpp"
#include "graphbert/cluster.hpp"
#include "graphbert/graph.hpp"
#include "graphbert/model.hpp"
#include "graphbert/preprocess.hpp"
#include "graphbert/synthetic.hpp"
#include "graphbert/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphbert;

namespace {

struct RunConfig {
  std::string dataset = "cora";
  std::string data_dir;   // default $GRAPHBERT_DATA_DIR or ./data
  std::string content;    // explicit file paths override dataset/data_dir
  std::string cites;
  std::string cache_dir;  // default $GRAPHBERT_CACHE_DIR or ./cache
  std::string out;

  std::size_t k = 0;  // 0 -> per-dataset default
  double alpha = 0.15;
  std::size_t hidden_size = 32, depth = 2, heads = 2, intermediate_size = 32;
  double hidden_dropout = 0.5, attention_dropout = 0.3;
  std::string residual_mode = "graph_raw";
  std::string residual_variant = "broadcast";
  bool classic_sinusoid = false, per_head_scaling = false;
  std::string embeddings = "raw,wl,position,hop";

  std::size_t epochs = 0;  // 0 -> per-dataset default
  double lr = 0.0;         // 0 -> per-dataset default
  double weight_decay = 5e-4;
  std::size_t reconstruct_epochs = 200, recover_epochs = 200;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1;

  std::size_t train_per_class = 20, val_size = 500, test_size = 1000;
  std::size_t clusters = 0;  // 0 -> number of classes
  std::size_t restarts = 10;
  std::size_t workers = 1;

  void apply_dataset_defaults() {
    auto pick = [&](std::size_t dk, double dlr, std::size_t de) {
      if (k == 0) k = dk;
      if (lr == 0.0) lr = dlr;
      if (epochs == 0) epochs = de;
    };
    if (dataset == "cora") pick(7, 0.01, 150);
    else if (dataset == "citeseer") pick(5, 0.001, 2000);
    else if (dataset == "pubmed") pick(30, 0.0005, 500);
    else pick(5, 0.01, 150);
  }

  json to_json() const {
    return json{{"dataset", dataset},
                {"data_dir", data_dir},
                {"content", content},
                {"cites", cites},
                {"cache_dir", cache_dir},
                {"out", out},
                {"k", k},
                {"alpha", alpha},
                {"hidden_size", hidden_size},
                {"depth", depth},
                {"heads", heads},
                {"intermediate_size", intermediate_size},
                {"hidden_dropout", hidden_dropout},
                {"attention_dropout", attention_dropout},
                {"residual_mode", residual_mode},
                {"residual_variant", residual_variant},
                {"classic_sinusoid", classic_sinusoid},
                {"per_head_scaling", per_head_scaling},
                {"embeddings", embeddings},
                {"epochs", epochs},
                {"lr", lr},
                {"weight_decay", weight_decay},
                {"reconstruct_epochs", reconstruct_epochs},
                {"recover_epochs", recover_epochs},
                {"seed", seed},
                {"eval_every", eval_every},
                {"train_per_class", train_per_class},
                {"val_size", val_size},
                {"test_size", test_size},
                {"clusters", clusters},
                {"restarts", restarts},
                {"workers", workers}};
  }

  void from_json(const json& j) {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dataset", dataset);
    get("data_dir", data_dir);
    get("content", content);
    get("cites", cites);
    get("cache_dir", cache_dir);
    get("out", out);
    get("k", k);
    get("alpha", alpha);
    get("hidden_size", hidden_size);
    get("depth", depth);
    get("heads", heads);
    get("intermediate_size", intermediate_size);
    get("hidden_dropout", hidden_dropout);
    get("attention_dropout", attention_dropout);
    get("residual_mode", residual_mode);
    get("residual_variant", residual_variant);
    get("classic_sinusoid", classic_sinusoid);
    get("per_head_scaling", per_head_scaling);
    get("embeddings", embeddings);
    get("epochs", epochs);
    get("lr", lr);
    get("weight_decay", weight_decay);
    get("reconstruct_epochs", reconstruct_epochs);
    get("recover_epochs", recover_epochs);
    get("seed", seed);
    get("eval_every", eval_every);
    get("train_per_class", train_per_class);
    get("val_size", val_size);
    get("test_size", test_size);
    get("clusters", clusters);
    get("restarts", restarts);
    get("workers", workers);
  }
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

void resolve_paths(RunConfig& cfg) {
  if (cfg.data_dir.empty()) cfg.data_dir = env_or("GRAPHBERT_DATA_DIR", "./data");
  if (cfg.cache_dir.empty()) cfg.cache_dir = env_or("GRAPHBERT_CACHE_DIR", "./cache");
  if (cfg.content.empty())
    cfg.content = (fs::path(cfg.data_dir) / cfg.dataset / (cfg.dataset + ".content")).string();
  if (cfg.cites.empty())
    cfg.cites = (fs::path(cfg.data_dir) / cfg.dataset / (cfg.dataset + ".cites")).string();
}

std::string cache_path(const RunConfig& cfg) {
  std::ostringstream os;
  os << cfg.dataset << "-k" << cfg.k << "-a" << cfg.alpha;
  return (fs::path(cfg.cache_dir) / os.str()).string();
}

Graph load_dataset(const RunConfig& cfg) {
  if (!fs::exists(cfg.content) || !fs::exists(cfg.cites))
    throw ConfigError("dataset files not found (" + cfg.content + ", " + cfg.cites +
                      "); place them there or pass --content/--cites");
  return load_planetoid(cfg.content, cfg.cites);
}

// Builds (or reuses) the preprocessing cache for the graph.
ContextCache ensure_cache(const RunConfig& cfg, const Graph& graph, bool* hit = nullptr) {
  std::string dir = cache_path(cfg);
  std::uint64_t hash = graph.fingerprint();
  if (cache_matches(dir, hash, cfg.k, cfg.alpha)) {
    if (hit) *hit = true;
    return load_cache(dir, hash, cfg.k, cfg.alpha);
  }
  if (hit) *hit = false;
  ContextCache cache = build_cache(graph, cfg.k, cfg.alpha, std::max<std::size_t>(1, cfg.workers));
  save_cache(dir, cache);
  save_graph(dir, graph);
  return cache;
}

ContextCache require_cache(const RunConfig& cfg, const Graph& graph) {
  std::string dir = cache_path(cfg);
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw ConfigError("no preprocessing cache at " + dir + "; run `graphbert preprocess` first");
  return load_cache(dir, graph.fingerprint(), cfg.k, cfg.alpha);
}

ModelConfig model_config(const RunConfig& cfg, const Graph& graph, const ContextCache& cache) {
  ModelConfig mc;
  mc.feature_dim = graph.feature_dim;
  mc.hidden_size = cfg.hidden_size;
  mc.num_classes = graph.num_classes;
  mc.k = cache.k;
  mc.depth = cfg.depth;
  mc.heads = cfg.heads;
  mc.intermediate_size = cfg.intermediate_size;
  mc.hidden_dropout = cfg.hidden_dropout;
  mc.attention_dropout = cfg.attention_dropout;
  mc.residual_mode = residual_mode_from_string(cfg.residual_mode);
  mc.residual_variant = residual_variant_from_string(cfg.residual_variant);
  mc.classic_sinusoid = cfg.classic_sinusoid;
  mc.per_head_scaling = cfg.per_head_scaling;
  mc.embedding_sources = embedding_sources_from_string(cfg.embeddings);
  mc.validate();
  return mc;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.lr = cfg.lr;
  tc.weight_decay = cfg.weight_decay;
  tc.seed = cfg.seed;
  tc.eval_every = cfg.eval_every;
  tc.reconstruct_epochs = cfg.reconstruct_epochs;
  tc.recover_epochs = cfg.recover_epochs;
  return tc;
}

fs::path prepare_run_dir(RunConfig& cfg, const std::string& subcommand) {
  if (cfg.out.empty()) cfg.out = (fs::path("runs") / (subcommand + "-" + cfg.dataset)).string();
  fs::create_directories(cfg.out);
  std::ofstream os(fs::path(cfg.out) / "config.json");
  json snapshot = cfg.to_json();
  snapshot["subcommand"] = subcommand;
  os << snapshot.dump(2) << "\n";
  return cfg.out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

DatasetSplit make_split(const RunConfig& cfg, const Graph& graph) {
  return standard_split(graph, cfg.train_per_class, cfg.val_size, cfg.test_size, cfg.seed);
}

double run_finetune(RunConfig cfg, const Graph& graph, const ContextCache& cache,
                    const std::string& from_checkpoint, const fs::path& run_dir,
                    json* summary_out = nullptr) {
  ModelConfig mc = model_config(cfg, graph, cache);
  Rng init_rng(cfg.seed);
  Model<float> model = Model<float>::init(mc, init_rng);
  if (!from_checkpoint.empty()) {
    if (!fs::exists(from_checkpoint))
      throw ConfigError("checkpoint not found: " + from_checkpoint +
                        "; run `graphbert pretrain` first");
    load_checkpoint(from_checkpoint, model.params, (AdamW<float>*)nullptr, /*strict=*/false);
  }
  DatasetSplit split = make_split(cfg, graph);
  auto t0 = std::chrono::steady_clock::now();
  ClassifyResult result = finetune_classify(model, graph, cache, split, train_config(cfg));
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_metrics_csv((run_dir / "metrics.csv").string(), result.rows);
  save_checkpoint((run_dir / "checkpoint.bin").string(), model.params);
  json summary{{"task", "classify"},
               {"dataset", cfg.dataset},
               {"k", cfg.k},
               {"residual_mode", cfg.residual_mode},
               {"embeddings", cfg.embeddings},
               {"epochs", cfg.epochs},
               {"from_checkpoint", from_checkpoint},
               {"best_epoch", result.best_epoch},
               {"best_validation_accuracy", result.best_validation_accuracy},
               {"test_accuracy", result.test_accuracy},
               {"train_seconds", seconds}};
  write_json(run_dir / "summary.json", summary);
  if (summary_out) *summary_out = summary;
  std::cout << "test accuracy " << result.test_accuracy << " (best validation "
            << result.best_validation_accuracy << " at epoch " << result.best_epoch << ", "
            << seconds << "s)\n";
  return result.test_accuracy;
}

int cmd_preprocess(RunConfig cfg) {
  resolve_paths(cfg);
  cfg.apply_dataset_defaults();
  Graph graph = load_dataset(cfg);
  bool hit = false;
  auto t0 = std::chrono::steady_clock::now();
  ContextCache cache = ensure_cache(cfg, graph, &hit);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (hit) {
    std::cout << "cache hit: " << cache_path(cfg) << " (no work to do)\n";
  } else {
    std::cout << "built cache " << cache_path(cfg) << ": " << cache.node_count
              << " contexts of length " << cache.k << " in " << seconds << "s\n";
  }
  return 0;
}

int cmd_pretrain(RunConfig cfg) {
  resolve_paths(cfg);
  cfg.apply_dataset_defaults();
  Graph graph = load_dataset(cfg);
  ContextCache cache = require_cache(cfg, graph);
  fs::path run_dir = prepare_run_dir(cfg, "pretrain");

  ModelConfig mc = model_config(cfg, graph, cache);
  Rng init_rng(cfg.seed);
  Model<float> model = Model<float>::init(mc, init_rng);
  SparseColMatrix abar = normalized_adjacency(graph);
  IntimacyMatrix S = intimacy_power(abar, cfg.alpha, 1e-10, 100000, cfg.workers);
  auto t0 = std::chrono::steady_clock::now();
  PretrainResult result = pretrain(model, graph, cache, S, train_config(cfg),
                                   (run_dir / "checkpoint-abort.bin").string());
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_metrics_csv((run_dir / "metrics.csv").string(), result.rows);
  save_checkpoint((run_dir / "checkpoint.bin").string(), model.params);
  write_json(run_dir / "summary.json",
             json{{"task", "pretrain"},
                  {"dataset", cfg.dataset},
                  {"final_reconstruction_loss", result.final_reconstruction_loss},
                  {"final_structure_loss", result.final_structure_loss},
                  {"train_seconds", seconds}});
  std::cout << "pretraining done: reconstruction loss " << result.final_reconstruction_loss
            << ", structure loss " << result.final_structure_loss << " (" << seconds << "s)\n"
            << "checkpoint: " << (run_dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_finetune(RunConfig cfg, const std::string& from_checkpoint) {
  resolve_paths(cfg);
  cfg.apply_dataset_defaults();
  Graph graph = load_dataset(cfg);
  ContextCache cache = require_cache(cfg, graph);
  fs::path run_dir = prepare_run_dir(cfg, "finetune");
  run_finetune(cfg, graph, cache, from_checkpoint, run_dir);
  return 0;
}

int cmd_cluster(RunConfig cfg, const std::string& checkpoint, bool raw_features) {
  resolve_paths(cfg);
  cfg.apply_dataset_defaults();
  Graph graph = load_dataset(cfg);
  fs::path run_dir = prepare_run_dir(cfg, "cluster");

  std::size_t n = graph.node_count;
  std::vector<double> points;
  std::size_t dim = 0;
  if (raw_features) {
    dim = graph.feature_dim;
    points.assign(graph.features.begin(), graph.features.end());
  } else {
    if (checkpoint.empty())
      throw ConfigError("cluster needs --checkpoint <pretrained model> or --raw-features");
    ContextCache cache = require_cache(cfg, graph);
    ModelConfig mc = model_config(cfg, graph, cache);
    Rng init_rng(cfg.seed);
    Model<float> model = Model<float>::init(mc, init_rng);
    load_checkpoint(checkpoint, model.params, (AdamW<float>*)nullptr, /*strict=*/false);
    std::vector<std::uint32_t> nodes(n);
    for (std::uint32_t i = 0; i < n; ++i) nodes[i] = i;
    points = node_embeddings(model, graph, cache, nodes);
    dim = cfg.hidden_size;
  }

  std::size_t l = cfg.clusters ? cfg.clusters : graph.num_classes;
  Clustering clustering = kmeans(points, n, dim, l, cfg.seed, cfg.restarts);
  ClusteringMetrics m = clustering_metrics(clustering.assignment, graph.labels);

  std::ofstream csv(run_dir / "metrics.csv");
  csv << "metric,value\n";
  csv << "rand," << m.adjusted_rand << "\n";  // reported as the headline Rand score
  csv << "raw_rand," << m.rand << "\n";
  csv << "adjusted_mi," << m.adjusted_mi << "\n";
  csv << "normalized_mi," << m.normalized_mi << "\n";
  csv << "homogeneity," << m.homogeneity << "\n";
  csv << "completeness," << m.completeness << "\n";
  write_json(run_dir / "summary.json",
             json{{"task", "cluster"},
                  {"dataset", cfg.dataset},
                  {"source", raw_features ? "raw_features" : checkpoint},
                  {"clusters", l},
                  {"objective", clustering.objective},
                  {"rand", m.adjusted_rand},
                  {"raw_rand", m.rand},
                  {"adjusted_mi", m.adjusted_mi},
                  {"normalized_mi", m.normalized_mi},
                  {"homogeneity", m.homogeneity},
                  {"completeness", m.completeness}});
  std::cout << "clustering (" << l << " clusters): rand " << m.adjusted_rand << ", ami "
            << m.adjusted_mi << ", nmi " << m.normalized_mi << ", homogeneity " << m.homogeneity
            << ", completeness " << m.completeness << "\n";
  return 0;
}

// Shared sweep driver: runs fine-tuning once per point, bounded by `jobs`.
int run_sweep(RunConfig base, const std::string& sweep_name,
              const std::vector<std::pair<std::string, RunConfig>>& points, std::size_t jobs) {
  resolve_paths(base);
  fs::path run_dir = prepare_run_dir(base, sweep_name);
  Graph graph = load_dataset(base);

  struct Row {
    std::string label;
    double accuracy = 0.0;
    double seconds = 0.0;
  };
  std::vector<Row> rows(points.size());
  std::mutex io_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      RunConfig cfg = points[i].second;
      resolve_paths(cfg);
      ContextCache cache = [&] {
        std::lock_guard<std::mutex> lk(io_mu);  // cache building is shared state
        return ensure_cache(cfg, graph);
      }();
      fs::path point_dir = run_dir / points[i].first;
      fs::create_directories(point_dir);
      auto t0 = std::chrono::steady_clock::now();
      json summary;
      double acc = run_finetune(cfg, graph, cache, "", point_dir, &summary);
      rows[i] = {points[i].first, acc,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, points.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ofstream csv(run_dir / "summary.csv");
  csv << "point,test_accuracy,total_seconds\n";
  for (const auto& r : rows) csv << r.label << ',' << r.accuracy << ',' << r.seconds << '\n';
  std::cout << "sweep results (" << (run_dir / "summary.csv").string() << "):\n";
  for (const auto& r : rows)
    std::cout << "  " << std::setw(16) << std::left << r.label << " accuracy " << r.accuracy
              << "  (" << r.seconds << "s)\n";
  return 0;
}

int cmd_sweep_k(RunConfig cfg, std::vector<std::size_t> ks, std::size_t jobs) {
  cfg.apply_dataset_defaults();
  if (ks.empty()) ks = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 30, 40, 50};
  std::vector<std::pair<std::string, RunConfig>> points;
  for (std::size_t k : ks) {
    RunConfig p = cfg;
    p.k = k;
    p.out.clear();
    points.emplace_back("k" + std::to_string(k), p);
  }
  return run_sweep(cfg, "sweep-k", points, jobs);
}

int cmd_sweep_residual(RunConfig cfg, std::size_t jobs) {
  cfg.apply_dataset_defaults();
  std::vector<std::pair<std::string, RunConfig>> points;
  for (const char* mode : {"none", "raw", "graph_raw"}) {
    RunConfig p = cfg;
    p.residual_mode = mode;
    p.out.clear();
    points.emplace_back(mode, p);
  }
  return run_sweep(cfg, "sweep-residual", points, jobs);
}

int cmd_sweep_embeddings(RunConfig cfg, std::size_t jobs) {
  cfg.apply_dataset_defaults();
  std::vector<std::pair<std::string, RunConfig>> points;
  for (const char* src : {"raw", "wl", "position", "hop", "all"}) {
    RunConfig p = cfg;
    p.embeddings = src;
    p.residual_mode = "none";  // ablation table baseline has no residual
    p.out.clear();
    points.emplace_back(src, p);
  }
  return run_sweep(cfg, "sweep-embeddings", points, jobs);
}

int cmd_report(const std::vector<std::string>& run_dirs) {
  std::cout << std::left << std::setw(36) << "run" << std::setw(12) << "dataset" << std::setw(28)
            << "result" << "\n";
  for (const auto& dir : run_dirs) {
    fs::path summary_path = fs::path(dir) / "summary.json";
    fs::path sweep_path = fs::path(dir) / "summary.csv";
    if (fs::exists(summary_path)) {
      std::ifstream is(summary_path);
      json s;
      is >> s;
      std::string task = s.value("task", "?");
      std::ostringstream result;
      if (task == "classify")
        result << "test accuracy " << s.value("test_accuracy", 0.0);
      else if (task == "pretrain")
        result << "recon " << s.value("final_reconstruction_loss", 0.0) << ", struct "
               << s.value("final_structure_loss", 0.0);
      else if (task == "cluster")
        result << "rand " << s.value("rand", 0.0) << ", nmi " << s.value("normalized_mi", 0.0);
      std::cout << std::setw(36) << dir << std::setw(12) << s.value("dataset", "?")
                << std::setw(28) << result.str() << "\n";
    } else if (fs::exists(sweep_path)) {
      std::cout << dir << ":\n";
      std::ifstream is(sweep_path);
      std::string line;
      while (std::getline(is, line)) std::cout << "  " << line << "\n";
    } else {
      throw ConfigError("no summary.json or summary.csv in run directory " + dir);
    }
  }
  return 0;
}

void add_common_options(CLI::App* app, RunConfig& cfg, std::string& config_path) {
  app->add_option("--config", config_path, "JSON config file (flags override file values)");
  app->add_option("--dataset", cfg.dataset, "dataset name (cora|citeseer|pubmed|custom)");
  app->add_option("--data-dir", cfg.data_dir, "dataset root (default $GRAPHBERT_DATA_DIR or ./data)");
  app->add_option("--content", cfg.content, "explicit .content file path");
  app->add_option("--cites", cfg.cites, "explicit .cites file path");
  app->add_option("--cache-dir", cfg.cache_dir,
                  "cache root (default $GRAPHBERT_CACHE_DIR or ./cache)");
  app->add_option("--out", cfg.out, "run output directory");
  app->add_option("-k,--k", cfg.k, "subgraph context size");
  app->add_option("--alpha", cfg.alpha, "intimacy restart probability");
  app->add_option("--hidden-size", cfg.hidden_size, "hidden width d_h");
  app->add_option("--depth", cfg.depth, "encoder layers");
  app->add_option("--heads", cfg.heads, "attention heads");
  app->add_option("--intermediate-size", cfg.intermediate_size, "feed-forward width");
  app->add_option("--hidden-dropout", cfg.hidden_dropout, "hidden dropout rate");
  app->add_option("--attention-dropout", cfg.attention_dropout, "attention dropout rate");
  app->add_option("--residual-mode", cfg.residual_mode, "none|raw|graph_raw");
  app->add_option("--residual-variant", cfg.residual_variant, "broadcast|propagated");
  app->add_flag("--classic-sinusoid", cfg.classic_sinusoid,
                "use the conventional cosine exponent in code embeddings");
  app->add_flag("--per-head-scaling", cfg.per_head_scaling,
                "scale attention by per-head width instead of d_h");
  app->add_option("--embeddings", cfg.embeddings, "comma list of raw,wl,position,hop (or all)");
  app->add_option("--epochs", cfg.epochs, "training epochs");
  app->add_option("--lr", cfg.lr, "learning rate");
  app->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
  app->add_option("--reconstruct-epochs", cfg.reconstruct_epochs, "pretraining stage-1 epochs");
  app->add_option("--recover-epochs", cfg.recover_epochs, "pretraining stage-2 epochs");
  app->add_option("--seed", cfg.seed, "random seed");
  app->add_option("--eval-every", cfg.eval_every, "evaluate validation every N epochs");
  app->add_option("--train-per-class", cfg.train_per_class, "train nodes per class");
  app->add_option("--val-size", cfg.val_size, "validation set size");
  app->add_option("--test-size", cfg.test_size, "test set size");
  app->add_option("--clusters", cfg.clusters, "cluster count (default: class count)");
  app->add_option("--restarts", cfg.restarts, "kmeans restarts");
  app->add_option("--workers", cfg.workers, "preprocessing worker threads");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad config file " + path + ": " + e.what());
  }
  cfg.from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-BERT style subgraph-transformer pipeline"};
  app.require_subcommand(1);

  // Each subcommand gets its own config copy; the config file (if given) is
  // applied first, then the command line overrides it.
  struct SubState {
    RunConfig cfg;
    RunConfig overrides;
    std::string config_path;
  };
  auto states = std::make_shared<std::vector<std::unique_ptr<SubState>>>();
  auto make_sub = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    states->push_back(std::make_unique<SubState>());
    SubState* st = states->back().get();
    add_common_options(sub, st->cfg, st->config_path);
    sub->parse_complete_callback([st] {
      if (!st->config_path.empty()) {
        // re-apply: file first, then re-parse happened already into cfg.
        RunConfig file_cfg;
        load_config_file(file_cfg, st->config_path);
        // flags that were left at defaults take the file value
        RunConfig merged = file_cfg;
        json defaults = RunConfig{}.to_json();
        json flags = st->cfg.to_json();
        json base = merged.to_json();
        for (auto& [key, value] : flags.items())
          if (value != defaults.at(key)) base[key] = value;
        merged.from_json(base);
        st->cfg = merged;
      }
    });
    return std::make_pair(sub, st);
  };

  auto [sub_pre, st_pre] = make_sub("preprocess", "build the intimacy/context/WL cache");
  auto [sub_pt, st_pt] = make_sub("pretrain", "label-free pre-training (reconstruction + recovery)");
  auto [sub_ft, st_ft] = make_sub("finetune", "node classification training");
  std::string from_checkpoint;
  sub_ft->add_option("--from-checkpoint", from_checkpoint, "initialize from a pretrained checkpoint");
  auto [sub_cl, st_cl] = make_sub("cluster", "kmeans clustering of embeddings or raw features");
  std::string cluster_checkpoint;
  bool raw_features = false;
  sub_cl->add_option("--checkpoint", cluster_checkpoint, "model checkpoint providing embeddings");
  sub_cl->add_flag("--raw-features", raw_features, "cluster raw feature rows instead");
  auto [sub_sk, st_sk] = make_sub("sweep-k", "fine-tune across subgraph sizes");
  std::vector<std::size_t> k_list;
  std::size_t jobs = 1;
  sub_sk->add_option("--k-list", k_list, "k values (default 1..10,20,30,40,50)");
  sub_sk->add_option("--jobs", jobs, "parallel sweep points");
  auto [sub_sr, st_sr] = make_sub("sweep-residual", "fine-tune across residual modes");
  std::size_t jobs_sr = 1;
  sub_sr->add_option("--jobs", jobs_sr, "parallel sweep points");
  auto [sub_se, st_se] = make_sub("sweep-embeddings", "fine-tune across embedding sources");
  std::size_t jobs_se = 1;
  sub_se->add_option("--jobs", jobs_se, "parallel sweep points");
  CLI::App* sub_rep = app.add_subcommand("report", "aggregate run directories into tables");
  std::vector<std::string> report_dirs;
  sub_rep->add_option("runs", report_dirs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sub_pre->parsed()) return cmd_preprocess(st_pre->cfg);
    if (sub_pt->parsed()) return cmd_pretrain(st_pt->cfg);
    if (sub_ft->parsed()) return cmd_finetune(st_ft->cfg, from_checkpoint);
    if (sub_cl->parsed()) return cmd_cluster(st_cl->cfg, cluster_checkpoint, raw_features);
    if (sub_sk->parsed()) return cmd_sweep_k(st_sk->cfg, k_list, jobs);
    if (sub_sr->parsed()) return cmd_sweep_residual(st_sr->cfg, jobs_sr);
    if (sub_se->parsed()) return cmd_sweep_embeddings(st_se->cfg, jobs_se);
    if (sub_rep->parsed()) return cmd_report(report_dirs);
  } catch (const std::exception& e) {
    const char* category = "internal";
    int code = 1;
    if (dynamic_cast<const ParseError*>(&e)) category = "parse", code = 2;
    else if (dynamic_cast<const SchemaError*>(&e)) category = "schema", code = 3;
    else if (dynamic_cast<const ShapeError*>(&e)) category = "shape", code = 4;
    else if (dynamic_cast<const NumericError*>(&e)) category = "numeric", code = 5;
    else if (dynamic_cast<const CacheInvalidError*>(&e)) category = "cache-invalid", code = 6;
    else if (dynamic_cast<const ConfigError*>(&e)) category = "config", code = 7;
    std::cerr << json{{"error", category}, {"message", e.what()}}.dump() << "\n";
    return code;
  }
  return 0;
}
