#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphbert/graph.hpp"
#include "graphbert/preprocess.hpp"
#include "graphbert/tensor.hpp"

namespace graphbert {

enum class ResidualMode { none, raw, graph_raw };
enum class ResidualVariant { broadcast, propagated };

ResidualMode residual_mode_from_string(const std::string& s);
std::string to_string(ResidualMode m);
ResidualVariant residual_variant_from_string(const std::string& s);
std::string to_string(ResidualVariant v);

// Embedding source bitmask for the ablation switch.
constexpr std::uint32_t EMBED_RAW = 1, EMBED_WL = 2, EMBED_POSITION = 4, EMBED_HOP = 8;
constexpr std::uint32_t EMBED_ALL = EMBED_RAW | EMBED_WL | EMBED_POSITION | EMBED_HOP;

std::uint32_t embedding_sources_from_string(const std::string& csv);  // "raw,wl,position,hop"
std::string embedding_sources_to_string(std::uint32_t mask);

struct ModelConfig {
  std::size_t feature_dim = 0;
  std::size_t hidden_size = 32;
  std::size_t num_classes = 0;
  std::size_t k = 5;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t intermediate_size = 32;
  double hidden_dropout = 0.5;
  double attention_dropout = 0.3;
  ResidualMode residual_mode = ResidualMode::graph_raw;
  ResidualVariant residual_variant = ResidualVariant::broadcast;
  bool classic_sinusoid = false;
  bool per_head_scaling = false;
  std::uint32_t embedding_sources = EMBED_ALL;

  void validate() const;
};

// Sinusoid code embedding. Entry pair l is
//   [sin(code / 10000^(2l/d)), cos(code / 10000^((2l+1)/d))]
// with the asymmetric cosine exponent; `classic` switches the cosine to the
// conventional 2l exponent.
std::vector<double> position_embed(std::uint64_t code, std::size_t d_h, bool classic = false);

// Raw features propagated once over the normalized adjacency (row i of
// Abar^T X), used by the `propagated` residual variant.
std::vector<double> propagated_features(const Graph& graph);

// Named parameter registry; ordering is creation order and is the
// checkpoint payload order.
template <typename T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  Tensor<T>& add(const std::string& name, Shape shape) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    names.push_back(name);
    tensors.push_back(Tensor<T>::zeros(std::move(shape)));
    tensors.back().set_requires_grad(true);
    return tensors.back();
  }

  Tensor<T>* find(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &tensors[i];
    return nullptr;
  }

  void zero_grad() {
    for (auto& t : tensors) t.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

namespace detail {

template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = T(dist(rng));
}

}  // namespace detail

template <typename T>
struct Model {
  ModelConfig config;
  ParamSet<T> params;

  Tensor<T> embed_w, embed_b;  // raw-feature projection
  Tensor<T> res_w;             // shared residual projection, no bias
  Tensor<T> recon_w, recon_b;  // attribute reconstruction head
  Tensor<T> cls_w, cls_b;      // classification head
  struct Layer {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor<T> ln2_g, ln2_b;
  };
  std::vector<Layer> layers;

  static Model init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.config = cfg;
    std::size_t dx = cfg.feature_dim, dh = cfg.hidden_size, di = cfg.intermediate_size;
    auto affine = [&](const std::string& name, std::size_t in, std::size_t out, Tensor<T>& w,
                      Tensor<T>* b) {
      w = m.params.add(name + ".weight", {in, out});
      detail::xavier_uniform(w, in, out, rng);
      if (b) *b = m.params.add(name + ".bias", {out});
    };
    affine("embed", dx, dh, m.embed_w, &m.embed_b);
    affine("residual", dx, dh, m.res_w, nullptr);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      Layer lay;
      std::string p = "layer" + std::to_string(l) + ".";
      affine(p + "attn.query", dh, dh, lay.wq, &lay.bq);
      affine(p + "attn.key", dh, dh, lay.wk, &lay.bk);
      affine(p + "attn.value", dh, dh, lay.wv, &lay.bv);
      affine(p + "attn.output", dh, dh, lay.wo, &lay.bo);
      lay.ln1_g = m.params.add(p + "ln1.scale", {dh});
      std::fill(lay.ln1_g.data().begin(), lay.ln1_g.data().end(), T(1));
      lay.ln1_b = m.params.add(p + "ln1.shift", {dh});
      affine(p + "ffn.in", dh, di, lay.ff1_w, &lay.ff1_b);
      affine(p + "ffn.out", di, dh, lay.ff2_w, &lay.ff2_b);
      lay.ln2_g = m.params.add(p + "ln2.scale", {dh});
      std::fill(lay.ln2_g.data().begin(), lay.ln2_g.data().end(), T(1));
      lay.ln2_b = m.params.add(p + "ln2.shift", {dh});
      m.layers.push_back(std::move(lay));
    }
    affine("head.reconstruct", dh, dx, m.recon_w, &m.recon_b);
    affine("head.classify", dh, cfg.num_classes, m.cls_w, &m.cls_b);
    return m;
  }
};

// Constant (non-learnable) inputs for a batch of B target nodes, rows
// serialized target-first and context by descending intimacy.
template <typename T>
struct BatchInputs {
  std::vector<std::uint32_t> targets;
  Tensor<T> X;    // (B, k+1, d_x) raw feature rows; defined when needed
  Tensor<T> E;    // (B, k+1, d_h) summed sinusoid embeddings; defined when needed
  Tensor<T> RES;  // (B, 1, d_x) target residual features (graph_raw modes)
};

// `propagated` may be empty unless config.residual_variant == propagated,
// in which case it must hold the node_count x d_x propagated feature rows.
template <typename T>
BatchInputs<T> make_batch(const Graph& graph, const ContextCache& cache, const ModelConfig& cfg,
                          const std::vector<std::uint32_t>& targets,
                          const std::vector<double>& propagated = {}) {
  cfg.validate();
  if (graph.feature_dim != cfg.feature_dim)
    throw ShapeError("make_batch: graph feature width " + std::to_string(graph.feature_dim) +
                     " != configured width " + std::to_string(cfg.feature_dim));
  const std::size_t B = targets.size(), k = cache.k, rows = k + 1;
  const std::size_t dx = cfg.feature_dim, dh = cfg.hidden_size;
  BatchInputs<T> batch;
  batch.targets = targets;

  bool need_x = (cfg.embedding_sources & EMBED_RAW) || cfg.residual_mode == ResidualMode::raw;
  bool need_sinusoid = cfg.embedding_sources & (EMBED_WL | EMBED_POSITION | EMBED_HOP);
  bool need_res = cfg.residual_mode == ResidualMode::graph_raw;
  if (need_res && cfg.residual_variant == ResidualVariant::propagated &&
      propagated.size() != graph.node_count * dx)
    throw ShapeError("make_batch: propagated feature matrix missing or mis-sized");

  std::vector<T> xv(need_x ? B * rows * dx : 0);
  std::vector<T> ev(need_sinusoid ? B * rows * dh : 0);
  std::vector<T> rv(need_res ? B * dx : 0);

  std::unordered_map<std::uint64_t, std::vector<double>> memo;
  auto sinus = [&](std::uint64_t code) -> const std::vector<double>& {
    auto it = memo.find(code);
    if (it == memo.end())
      it = memo.emplace(code, position_embed(code, dh, cfg.classic_sinusoid)).first;
    return it->second;
  };

  for (std::size_t b = 0; b < B; ++b) {
    std::uint32_t tgt = targets[b];
    if (tgt >= graph.node_count) throw ShapeError("make_batch: target index out of range");
    for (std::size_t r = 0; r < rows; ++r) {
      std::uint32_t node = r == 0 ? tgt : cache.contexts[std::size_t(tgt) * k + (r - 1)];
      if (need_x)
        for (std::size_t c = 0; c < dx; ++c)
          xv[(b * rows + r) * dx + c] = T(graph.features[std::size_t(node) * dx + c]);
      if (need_sinusoid) {
        T* e = ev.data() + (b * rows + r) * dh;
        if (cfg.embedding_sources & EMBED_WL) {
          const auto& v = sinus(cache.wl[node]);
          for (std::size_t c = 0; c < dh; ++c) e[c] += T(v[c]);
        }
        if (cfg.embedding_sources & EMBED_POSITION) {
          const auto& v = sinus(r);  // P(target)=0, then 1..k by intimacy rank
          for (std::size_t c = 0; c < dh; ++c) e[c] += T(v[c]);
        }
        if (cfg.embedding_sources & EMBED_HOP) {
          std::uint64_t hop = r == 0 ? 0 : cache.hops[std::size_t(tgt) * k + (r - 1)];
          const auto& v = sinus(hop);
          for (std::size_t c = 0; c < dh; ++c) e[c] += T(v[c]);
        }
      }
    }
    if (need_res) {
      if (cfg.residual_variant == ResidualVariant::propagated) {
        for (std::size_t c = 0; c < dx; ++c)
          rv[b * dx + c] = T(propagated[std::size_t(tgt) * dx + c]);
      } else {
        for (std::size_t c = 0; c < dx; ++c)
          rv[b * dx + c] = T(graph.features[std::size_t(tgt) * dx + c]);
      }
    }
  }

  if (need_x) batch.X = Tensor<T>::from({B, rows, dx}, std::move(xv));
  if (need_sinusoid) batch.E = Tensor<T>::from({B, rows, dh}, std::move(ev));
  if (need_res) batch.RES = Tensor<T>::from({B, 1, dx}, std::move(rv));
  return batch;
}

template <typename T>
struct EncodeResult {
  Tensor<T> Z;  // (B, d_h) fused target representations
  Tensor<T> H;  // (B, k+1, d_h) final layer states
};

// Initial representations H^(0): sum of the selected embedding sources.
template <typename T>
Tensor<T> embed_batch(const Model<T>& m, const BatchInputs<T>& batch) {
  Tensor<T> h0;
  if (m.config.embedding_sources & EMBED_RAW) {
    h0 = add(matmul(batch.X, m.embed_w), m.embed_b);
    if (batch.E.defined()) h0 = add(h0, batch.E);
  } else {
    h0 = batch.E;
  }
  return h0;
}

template <typename T>
EncodeResult<T> encode(Model<T>& m, const BatchInputs<T>& batch, bool training, Rng& rng) {
  const ModelConfig& cfg = m.config;
  const std::size_t dh = cfg.hidden_size, nh = cfg.heads, hd = dh / nh;
  double scale = 1.0 / std::sqrt(double(cfg.per_head_scaling ? hd : dh));

  Tensor<T> h = embed_batch(m, batch);
  Tensor<T> res;  // graph residual term, shape broadcastable to (B, k+1, d_h)
  if (cfg.residual_mode == ResidualMode::raw)
    res = matmul(batch.X, m.res_w);
  else if (cfg.residual_mode == ResidualMode::graph_raw)
    res = matmul(batch.RES, m.res_w);  // (B, 1, d_h), broadcast over rows

  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& lay = m.layers[l];
    Tensor<T> q = add(matmul(h, lay.wq), lay.bq);
    Tensor<T> kk = add(matmul(h, lay.wk), lay.bk);
    Tensor<T> v = add(matmul(h, lay.wv), lay.bv);
    std::vector<Tensor<T>> ctx;
    for (std::size_t hh = 0; hh < nh; ++hh) {
      Tensor<T> qh = slice_last(q, hh * hd, hd);
      Tensor<T> kh = slice_last(kk, hh * hd, hd);
      Tensor<T> vh = slice_last(v, hh * hd, hd);
      Tensor<T> scores = scalar_mul(matmul(qh, transpose_last2(kh)), T(scale));
      for (T s : scores.data())
        if (std::isnan(s))
          throw NumericError("NaN attention score at layer " + std::to_string(l));
      Tensor<T> probs = softmax_last(scores);
      probs = dropout(probs, cfg.attention_dropout, rng, training);
      ctx.push_back(matmul(probs, vh));
    }
    Tensor<T> attn = add(matmul(concat_last(ctx), lay.wo), lay.bo);
    attn = dropout(attn, cfg.hidden_dropout, rng, training);
    Tensor<T> sum1 = add(h, attn);
    if (res.defined()) sum1 = add(sum1, res);
    Tensor<T> h1 = layer_norm(sum1, lay.ln1_g, lay.ln1_b);
    Tensor<T> f = gelu(add(matmul(h1, lay.ff1_w), lay.ff1_b));
    f = add(matmul(f, lay.ff2_w), lay.ff2_b);
    f = dropout(f, cfg.hidden_dropout, rng, training);
    h = layer_norm(add(h1, f), lay.ln2_g, lay.ln2_b);
  }
  EncodeResult<T> out;
  out.H = h;
  out.Z = mean_axis(h, 1);
  return out;
}

template <typename T>
Tensor<T> reconstruct_head(const Model<T>& m, const Tensor<T>& z) {
  return add(matmul(z, m.recon_w), m.recon_b);
}

template <typename T>
Tensor<T> classify_logits(const Model<T>& m, const Tensor<T>& z) {
  return add(matmul(z, m.cls_w), m.cls_b);
}

}  // namespace graphbert
