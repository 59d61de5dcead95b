#include "graphbert/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace graphbert {

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot write metrics csv: " + path);
  os << "epoch,split,loss,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.8g", r.loss);
    os << r.epoch << ',' << r.split << ',' << buf << ',';
    if (r.accuracy >= 0.0) {
      std::snprintf(buf, sizeof(buf), "%.8g", r.accuracy);
      os << buf;
    }
    os << '\n';
  }
}

namespace {

std::vector<std::uint32_t> all_nodes(const Graph& g) {
  std::vector<std::uint32_t> ids(g.node_count);
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

std::vector<double> maybe_propagated(const Graph& graph, const ModelConfig& cfg) {
  if (cfg.residual_mode == ResidualMode::graph_raw &&
      cfg.residual_variant == ResidualVariant::propagated)
    return propagated_features(graph);
  return {};
}

Tensor<float> target_features(const Graph& graph, const std::vector<std::uint32_t>& nodes) {
  std::size_t dx = graph.feature_dim;
  std::vector<float> data(nodes.size() * dx);
  for (std::size_t b = 0; b < nodes.size(); ++b)
    std::copy_n(graph.features.data() + std::size_t(nodes[b]) * dx, dx, data.data() + b * dx);
  return Tensor<float>::from({nodes.size(), dx}, std::move(data));
}

std::vector<float> snapshot(const ParamSet<float>& params) {
  std::vector<float> out;
  for (const auto& t : params.tensors) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

void restore(ParamSet<float>& params, const std::vector<float>& snap) {
  std::size_t off = 0;
  for (auto& t : params.tensors) {
    std::copy_n(snap.data() + off, t.size(), t.data().begin());
    off += t.size();
  }
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate_classification(Model<float>& model, const BatchInputs<float>& batch,
                                   const std::vector<std::uint32_t>& labels, Rng& rng) {
  NoGradGuard ng;
  auto enc = encode(model, batch, /*training=*/false, rng);
  Tensor<float> logits = classify_logits(model, enc.Z);
  EvalResult r;
  r.loss = double(loss_classify(logits, labels).item());
  std::size_t correct = 0, c = logits.shape()[1];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.data().data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[i]) ++correct;
  }
  r.accuracy = double(correct) / double(labels.size());
  return r;
}

void abort_with_checkpoint(const std::string& path, ParamSet<float>& params,
                           const std::vector<float>& last_good, const std::string& what) {
  restore(params, last_good);
  if (!path.empty()) save_checkpoint(path, params);
  throw NumericError(what + (path.empty() ? "" : "; last good state saved to " + path));
}

}  // namespace

PretrainResult pretrain(Model<float>& model, const Graph& graph, const ContextCache& cache,
                        const IntimacyMatrix& S, const TrainConfig& config,
                        const std::string& abort_checkpoint) {
  auto nodes = all_nodes(graph);
  auto prop = maybe_propagated(graph, model.config);
  BatchInputs<float> batch = make_batch<float>(graph, cache, model.config, nodes, prop);
  Tensor<float> xtgt = target_features(graph, nodes);
  std::size_t n = graph.node_count;
  std::vector<float> sdata(n * n);
  for (std::size_t i = 0; i < n * n; ++i) sdata[i] = float(S.S[i]);
  Tensor<float> s_const = Tensor<float>::from({n, n}, std::move(sdata));

  Rng rng(config.seed);
  PretrainResult result;
  std::vector<float> last_good = snapshot(model.params);

  for (int stage = 0; stage < 2; ++stage) {
    std::size_t epochs = stage == 0 ? config.reconstruct_epochs : config.recover_epochs;
    const char* split = stage == 0 ? "pretrain-reconstruct" : "pretrain-recover";
    AdamW<float> opt;
    opt.lr = config.lr;
    opt.weight_decay = config.weight_decay;
    opt.attach(model.params);
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
      model.params.zero_grad();
      auto enc = encode(model, batch, /*training=*/true, rng);
      Tensor<float> loss;
      if (stage == 0) {
        loss = loss_reconstruction(reconstruct_head(model, enc.Z), xtgt);
      } else {
        loss = loss_structure(enc.Z, s_const);
      }
      double lv = double(loss.item());
      if (std::isnan(lv))
        abort_with_checkpoint(abort_checkpoint, model.params, last_good,
                              std::string("pretraining diverged (NaN loss) in stage '") + split +
                                  "' epoch " + std::to_string(epoch));
      backward(loss);
      opt.step(model.params);
      last_good = snapshot(model.params);
      result.rows.push_back({epoch, split, lv, -1.0});
      if (stage == 0)
        result.final_reconstruction_loss = lv;
      else
        result.final_structure_loss = lv;
    }
  }
  return result;
}

ClassifyResult finetune_classify(Model<float>& model, const Graph& graph,
                                 const ContextCache& cache, const DatasetSplit& split,
                                 const TrainConfig& config) {
  auto prop = maybe_propagated(graph, model.config);
  auto labels_of = [&](const std::vector<std::uint32_t>& nodes) {
    std::vector<std::uint32_t> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = graph.labels[nodes[i]];
    return out;
  };
  BatchInputs<float> train_batch = make_batch<float>(graph, cache, model.config, split.train, prop);
  BatchInputs<float> val_batch =
      make_batch<float>(graph, cache, model.config, split.validation, prop);
  BatchInputs<float> test_batch = make_batch<float>(graph, cache, model.config, split.test, prop);
  auto train_labels = labels_of(split.train);
  auto val_labels = labels_of(split.validation);
  auto test_labels = labels_of(split.test);

  Rng rng(config.seed);
  AdamW<float> opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  opt.attach(model.params);

  ClassifyResult result;
  std::vector<float> best = snapshot(model.params);
  std::vector<float> last_good = best;
  double best_val = -1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.params.zero_grad();
    auto enc = encode(model, train_batch, /*training=*/true, rng);
    Tensor<float> loss = loss_classify(classify_logits(model, enc.Z), train_labels);
    double lv = double(loss.item());
    if (std::isnan(lv))
      abort_with_checkpoint("", model.params, last_good,
                            "classification training diverged (NaN loss) at epoch " +
                                std::to_string(epoch));
    backward(loss);
    opt.step(model.params);
    last_good = snapshot(model.params);

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      EvalResult tr = evaluate_classification(model, train_batch, train_labels, rng);
      EvalResult va = evaluate_classification(model, val_batch, val_labels, rng);
      result.rows.push_back({epoch, "train", tr.loss, tr.accuracy});
      result.rows.push_back({epoch, "validation", va.loss, va.accuracy});
      result.final_train_accuracy = tr.accuracy;
      if (va.accuracy > best_val) {
        best_val = va.accuracy;
        best = snapshot(model.params);
        result.best_epoch = epoch;
      }
    }
  }
  restore(model.params, best);
  result.best_validation_accuracy = best_val;
  EvalResult te = evaluate_classification(model, test_batch, test_labels, rng);
  result.test_accuracy = te.accuracy;
  result.rows.push_back({result.best_epoch, "test", te.loss, te.accuracy});
  return result;
}

std::vector<double> node_embeddings(Model<float>& model, const Graph& graph,
                                    const ContextCache& cache,
                                    const std::vector<std::uint32_t>& nodes) {
  auto prop = maybe_propagated(graph, model.config);
  BatchInputs<float> batch = make_batch<float>(graph, cache, model.config, nodes, prop);
  Rng rng(0);
  NoGradGuard ng;
  auto enc = encode(model, batch, /*training=*/false, rng);
  std::vector<double> out(enc.Z.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = double(enc.Z.data()[i]);
  return out;
}

}  // namespace graphbert
