#pragma once

#include <string>
#include <vector>

#include "graphbert/optimizer.hpp"

namespace graphbert {

// ---- losses ---------------------------------------------------------------

// Mean over nodes of the (unsquared) L2 reconstruction error per row.
template <typename T>
Tensor<T> loss_reconstruction(const Tensor<T>& xhat, const Tensor<T>& x) {
  if (xhat.shape() != x.shape())
    throw ShapeError("loss_reconstruction: shapes " + shape_str(xhat.shape()) + " vs " +
                     shape_str(x.shape()));
  Tensor<T> diff = sub(xhat, x);
  Tensor<T> row_norms = sqrt_guarded(sum_last(square(diff)));
  return mean_all(row_norms);
}

// || S - cos(Z) ||_F^2 / |V|^2, with the predicted intimacy as the pairwise
// cosine similarity of embedding rows.
template <typename T>
Tensor<T> loss_structure(const Tensor<T>& z, const Tensor<T>& S) {
  std::size_t n = z.shape()[0];
  if (S.rank() != 2 || S.shape()[0] != n || S.shape()[1] != n)
    throw ShapeError("loss_structure: intimacy matrix must be " + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + shape_str(S.shape()));
  Tensor<T> shat = cosine_similarity_matrix(z);
  return scalar_mul(squared_frobenius_distance(S, shat), T(1) / T(n * n));
}

// Softmax cross-entropy summed over the batch.
template <typename T>
Tensor<T> loss_classify(const Tensor<T>& logits, const std::vector<std::uint32_t>& labels) {
  return cross_entropy_sum(logits, labels);
}

// ---- run logging ----------------------------------------------------------

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = -1.0;  // negative means "not applicable" (blank CSV cell)
};

// CSV with header epoch,split,loss,accuracy; deterministic formatting.
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

// ---- training loops -------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 150;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1;
  std::size_t reconstruct_epochs = 200;
  std::size_t recover_epochs = 200;
};

struct PretrainResult {
  std::vector<MetricRow> rows;
  double final_reconstruction_loss = 0.0;
  double final_structure_loss = 0.0;
};

// Two-stage label-free schedule: attribute reconstruction, then (same
// weights) structure recovery against the intimacy matrix S. On divergence
// the last good parameters are saved to `abort_checkpoint` (when non-empty)
// before the error propagates.
PretrainResult pretrain(Model<float>& model, const Graph& graph, const ContextCache& cache,
                        const IntimacyMatrix& S, const TrainConfig& config,
                        const std::string& abort_checkpoint = "");

struct ClassifyResult {
  std::vector<MetricRow> rows;
  std::size_t best_epoch = 0;
  double best_validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_train_accuracy = 0.0;
};

// Full-batch classification training on the split's train nodes; model
// selection by best validation accuracy (evaluated every eval_every
// epochs); the model is left holding the selected parameters and test
// accuracy is computed once on them.
ClassifyResult finetune_classify(Model<float>& model, const Graph& graph,
                                 const ContextCache& cache, const DatasetSplit& split,
                                 const TrainConfig& config);

// Inference embeddings z_i for the given nodes (no dropout, no tape).
std::vector<double> node_embeddings(Model<float>& model, const Graph& graph,
                                    const ContextCache& cache,
                                    const std::vector<std::uint32_t>& nodes);

}  // namespace graphbert
