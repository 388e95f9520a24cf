#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <filesystem>
#include <vector>

#include "only/config.hpp"
#include "only/errors.hpp"
#include "only/kernels.hpp"
#include "only/layout.hpp"

namespace only {

struct LayerWeights {
  std::vector<float> attn_norm;  // [d_model]
  Matrix wq, wk, wv, wo;         // [d_model x d_model]
  std::vector<float> mlp_norm;   // [d_model]
  Matrix w_in;                   // [d_model x d_mlp]
  std::vector<float> b_in;       // [d_mlp]
  Matrix w_out;                  // [d_mlp x d_model]
  std::vector<float> b_out;      // [d_model]
};

// All learned parameters. Operations only ever take these by const reference.
struct ModelWeights {
  ModelConfig config;
  Matrix token_embedding;     // [vocab x d_model]
  Matrix position_embedding;  // [max_seq_len x d_model]
  std::vector<LayerWeights> layers;
  Matrix lm_head;             // [d_model x vocab]

  // Correctly shaped, zero-filled weights (norm gains set to one).
  static ModelWeights zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.config = cfg;
    const std::size_t d = cfg.d_model;
    w.token_embedding = Matrix(cfg.vocab_size, d);
    w.position_embedding = Matrix(cfg.max_seq_len, d);
    w.layers.resize(cfg.n_layers);
    for (auto& l : w.layers) {
      l.attn_norm.assign(d, 1.0f);
      l.wq = Matrix(d, d);
      l.wk = Matrix(d, d);
      l.wv = Matrix(d, d);
      l.wo = Matrix(d, d);
      l.mlp_norm.assign(d, 1.0f);
      l.w_in = Matrix(d, cfg.d_mlp);
      l.b_in.assign(cfg.d_mlp, 0.0f);
      l.w_out = Matrix(cfg.d_mlp, d);
      l.b_out.assign(d, 0.0f);
    }
    w.lm_head = Matrix(d, cfg.vocab_size);
    return w;
  }

  std::span<const float> embed_token(int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= config.vocab_size)
      throw ConfigError("token id " + std::to_string(token) + " outside vocabulary");
    return token_embedding.row(static_cast<std::size_t>(token));
  }

  friend bool operator==(const ModelWeights& a, const ModelWeights& b);
};

enum class TensorRole { Weight, Gain };

template <class T>
struct TensorRef {
  std::string name;
  std::span<T> data;
  std::size_t rows;
  std::size_t cols;
  TensorRole role;
};

// Visits every tensor in canonical serialization order. `W` is ModelWeights
// or const ModelWeights; the span element type follows its constness.
template <class W, class Fn>
void visit_tensors(W& w, Fn&& fn) {
  using T = std::conditional_t<std::is_const_v<W>, const float, float>;
  auto mat = [&](std::string name, auto& m) {
    fn(TensorRef<T>{std::move(name), std::span<T>(m.data), m.rows, m.cols, TensorRole::Weight});
  };
  auto vec = [&](std::string name, auto& v, TensorRole role) {
    fn(TensorRef<T>{std::move(name), std::span<T>(v), 1, v.size(), role});
  };
  mat("token_embedding", w.token_embedding);
  mat("position_embedding", w.position_embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& layer = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    vec(p + "attn_norm", layer.attn_norm, TensorRole::Gain);
    mat(p + "wq", layer.wq);
    mat(p + "wk", layer.wk);
    mat(p + "wv", layer.wv);
    mat(p + "wo", layer.wo);
    vec(p + "mlp_norm", layer.mlp_norm, TensorRole::Gain);
    mat(p + "w_in", layer.w_in);
    vec(p + "b_in", layer.b_in, TensorRole::Weight);
    mat(p + "w_out", layer.w_out);
    vec(p + "b_out", layer.b_out, TensorRole::Weight);
  }
  mat("lm_head", w.lm_head);
}

inline bool operator==(const ModelWeights& a, const ModelWeights& b) {
  if (!(a.config == b.config)) return false;
  std::vector<std::span<const float>> ta, tb;
  visit_tensors(a, [&](const TensorRef<const float>& t) { ta.push_back(t.data); });
  visit_tensors(b, [&](const TensorRef<const float>& t) { tb.push_back(t.data); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!std::equal(ta[i].begin(), ta[i].end(), tb[i].begin(), tb[i].end())) return false;
  return true;
}

inline std::size_t count_parameters(const ModelWeights& w) {
  std::size_t n = 0;
  visit_tensors(w, [&](const TensorRef<const float>& t) { n += t.data.size(); });
  return n;
}

constexpr float kInitRange = 0.08f;

// Draws every weight and bias uniformly from [-0.08, 0.08] in canonical tensor
// order from a single mt19937_64 stream. Norm gains start at one.
inline ModelWeights init_model(ModelConfig cfg, std::uint64_t seed) {
  cfg.rng_seed = seed;
  ModelWeights w = ModelWeights::zeros(cfg);
  std::mt19937_64 rng(seed);
  visit_tensors(w, [&](const TensorRef<float>& t) {
    if (t.role == TensorRole::Gain) return;
    for (float& v : t.data)
      v = static_cast<float>(-static_cast<double>(kInitRange) + 2.0 * kInitRange * kernels::uniform01(rng));
  });
  return w;
}

// -----------------------------------------------------------------------------
// KV cache

class KVCache {
 public:
  explicit KVCache(const ModelConfig& cfg)
      : d_model_(cfg.d_model), capacity_(cfg.max_seq_len), keys_(cfg.n_layers), values_(cfg.n_layers) {}

  std::size_t length() const { return length_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t n_layers() const { return keys_.size(); }

  // Rows [0, rows_in_layer) of layer `l`, each of width d_model.
  std::span<const float> keys(std::size_t l) const { return keys_[l]; }
  std::span<const float> values(std::size_t l) const { return values_[l]; }
  std::size_t rows_in_layer(std::size_t l) const { return keys_[l].size() / d_model_; }

  // Whether later queries may attend to this position.
  bool attendable(std::size_t pos) const { return attendable_[pos] != 0; }

 private:
  friend class CacheWriter;

  std::size_t d_model_;
  std::size_t capacity_;
  std::size_t length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::vector<unsigned char> attendable_;
};

// Scoped appender used by forward_step: commits the new position on completion.
class CacheWriter {
 public:
  CacheWriter(KVCache& c, bool attendable) : cache_(c) { cache_.attendable_.push_back(attendable ? 1 : 0); }
  void append(std::size_t l, std::span<const float> k, std::span<const float> v) {
    cache_.keys_[l].insert(cache_.keys_[l].end(), k.begin(), k.end());
    cache_.values_[l].insert(cache_.values_[l].end(), v.begin(), v.end());
  }
  void commit() { ++cache_.length_; }

 private:
  KVCache& cache_;
};

// -----------------------------------------------------------------------------
// Step outputs

// Attention probabilities of the newest position for every layer and head.
struct AttentionSnapshot {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t length = 0;    // number of key positions (t + 1)
  std::vector<float> probs;  // [n_layers][n_heads][length]

  std::span<const float> row(std::size_t layer, std::size_t head) const {
    return {probs.data() + (layer * n_heads + head) * length, length};
  }
  std::span<float> row(std::size_t layer, std::size_t head) {
    return {probs.data() + (layer * n_heads + head) * length, length};
  }

  std::vector<std::vector<float>> rows_at(std::size_t layer) const {
    std::vector<std::vector<float>> out;
    out.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      auto r = row(layer, h);
      out.emplace_back(r.begin(), r.end());
    }
    return out;
  }
};

struct StepOutput {
  std::size_t position = 0;
  std::vector<float> logits;                      // phi(H^L)
  std::vector<std::vector<float>> hidden_states;  // input of layer l, l in [0, L]; [L] is the final state
  AttentionSnapshot attention;
  std::size_t te_layer = 0;
  std::vector<float> te_head_outputs;  // [n_heads * d_head], a_i V_i at te_layer before W^O
  std::vector<float> te_attn_output;   // [d_model], MHA output at te_layer after W^O
};

struct StepOptions {
  std::optional<std::size_t> te_layer;  // defaults to config.te_layer
  bool attendable = true;
};

// MLP_l(x) including the pre-MLP RMS norm, without the residual.
inline std::vector<float> mlp_forward(const LayerWeights& layer, std::span<const float> x) {
  const auto xn = kernels::rms_norm(x, layer.mlp_norm);
  std::vector<float> h(layer.b_in.begin(), layer.b_in.end());
  kernels::matvec_accumulate(xn, layer.w_in, h);
  for (float& v : h) v = kernels::gelu(v);
  std::vector<float> out(layer.b_out.begin(), layer.b_out.end());
  kernels::matvec_accumulate(h, layer.w_out, out);
  return out;
}

// Processes one new position against the cached keys/values of all earlier
// positions, appending its own keys/values to the cache.
inline StepOutput forward_step(const ModelWeights& w, KVCache& cache, std::span<const float> embedding,
                               const StepOptions& opt = {}) {
  const ModelConfig& cfg = w.config;
  const std::size_t t = cache.length();
  if (t >= cfg.max_seq_len)
    throw CapacityError("KV cache full at " + std::to_string(t) + " positions");
  if (embedding.size() != cfg.d_model) throw ConfigError("embedding width does not match d_model");
  const std::size_t te_layer = opt.te_layer.value_or(cfg.te_layer);
  if (te_layer >= cfg.n_layers) throw ConfigError("te_layer out of range");

  const std::size_t d = cfg.d_model;
  const std::size_t n_heads = cfg.n_heads;
  const std::size_t dk = cfg.d_head();
  const std::size_t n = t + 1;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dk));

  StepOutput out;
  out.position = t;
  out.te_layer = te_layer;
  out.attention.n_layers = cfg.n_layers;
  out.attention.n_heads = n_heads;
  out.attention.length = n;
  out.attention.probs.assign(cfg.n_layers * n_heads * n, 0.0f);
  out.hidden_states.reserve(cfg.n_layers + 1);

  std::vector<float> x = kernels::add(embedding, w.position_embedding.row(t));
  out.hidden_states.push_back(x);

  CacheWriter writer(cache, opt.attendable);
  std::vector<float> scores(n);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& layer = w.layers[l];
    const auto xn = kernels::rms_norm(x, layer.attn_norm);
    const auto q = kernels::matvec(xn, layer.wq);
    const auto k = kernels::matvec(xn, layer.wk);
    const auto v = kernels::matvec(xn, layer.wv);
    writer.append(l, k, v);
    const float* keys = cache.keys(l).data();
    const float* vals = cache.values(l).data();

    std::vector<float> heads(d, 0.0f);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const float* qh = q.data() + h * dk;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t p = 0; p < n; ++p) {
        if (p != t && !cache.attendable(p)) {
          scores[p] = -std::numeric_limits<float>::infinity();
          continue;
        }
        const float* kp = keys + p * d + h * dk;
        float s = 0.0f;
        for (std::size_t j = 0; j < dk; ++j) s += qh[j] * kp[j];
        scores[p] = s * scale;
        mx = std::max(mx, scores[p]);
      }
      auto prow = out.attention.row(l, h);
      float sum = 0.0f;
      for (std::size_t p = 0; p < n; ++p) {
        const float e = std::isinf(scores[p]) ? 0.0f : std::exp(scores[p] - mx);
        prow[p] = e;
        sum += e;
      }
      float* hout = heads.data() + h * dk;
      for (std::size_t p = 0; p < n; ++p) {
        prow[p] /= sum;
        const float a = prow[p];
        if (a == 0.0f) continue;
        const float* vp = vals + p * d + h * dk;
        for (std::size_t j = 0; j < dk; ++j) hout[j] += a * vp[j];
      }
    }

    auto attn = kernels::matvec(heads, layer.wo);
    if (l == te_layer) {
      out.te_head_outputs = heads;
      out.te_attn_output = attn;
    }
    kernels::add_inplace(attn, x);  // attn now holds H-bar
    auto mlp = mlp_forward(layer, attn);
    kernels::add_inplace(mlp, attn);
    x = std::move(mlp);
    out.hidden_states.push_back(x);
  }
  writer.commit();

  out.logits = kernels::matvec(x, w.lm_head);
  return out;
}

struct PrefillOptions {
  std::optional<std::size_t> te_layer;
  // Exclude visual positions from every other position's attention. Yields the
  // information flow of a text-only prompt at unchanged positional indices.
  bool mask_visual = false;
};

struct PrefillResult {
  KVCache cache;
  StepOutput last;
};

// Equivalent to one forward_step per prompt position, in order.
inline PrefillResult prefill(const ModelWeights& w, std::span<const std::vector<float>> prompt,
                             const TokenLayout& layout, const PrefillOptions& opt = {}) {
  if (prompt.empty()) throw ConfigError("prefill requires a non-empty prompt");
  if (prompt.size() > w.config.max_seq_len)
    throw CapacityError("prompt of " + std::to_string(prompt.size()) + " positions exceeds max_seq_len");
  if (layout.size() < prompt.size()) throw LayoutError("layout does not cover every prompt position");
  PrefillResult r{KVCache(w.config), {}};
  for (std::size_t p = 0; p < prompt.size(); ++p) {
    StepOptions so;
    so.te_layer = opt.te_layer;
    so.attendable = !(opt.mask_visual && layout.is_visual(p));
    r.last = forward_step(w, r.cache, prompt[p], so);
  }
  return r;
}

// -----------------------------------------------------------------------------

struct Seed {
  std::uint64_t value = 0;
};

using WeightSource = std::variant<std::filesystem::path, Seed>;

}  // namespace only
