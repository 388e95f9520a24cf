#pragma once

// Textual-enhanced (TE) branch. Re-projects the intervention layer's attention
// with modified per-head rows, then routes the result through the last layer's
// MLP with residuals to obtain a second set of logits. Only cached quantities
// from the main pass are read; nothing is written back.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "only/kernels.hpp"
#include "only/method.hpp"
#include "only/model.hpp"
#include "only/tver.hpp"

namespace only {

struct LogitsPair {
  std::vector<float> original;
  std::vector<float> enhanced;
};

// Input of the output head on the enhanced path.
enum class TeHeadInput {
  ResidualSum,   // phi(H-hat + H^L), "alg1"
  EnhancedOnly,  // phi(H-hat), "eq17"
};

inline const char* te_head_input_name(TeHeadInput m) { return m == TeHeadInput::ResidualSum ? "alg1" : "eq17"; }

inline TeHeadInput parse_te_head_input(std::string_view s) {
  if (s == "alg1") return TeHeadInput::ResidualSum;
  if (s == "eq17") return TeHeadInput::EnhancedOnly;
  throw ConfigError("unknown te mode '" + std::string(s) + "' (expected alg1 or eq17)");
}

// Multiply-accumulate tally for compute accounting.
struct MacCounter {
  std::uint64_t macs = 0;
};

// Concat_i(rows[i] . V_i) W^O for the newest position at `layer`.
inline std::vector<float> te_mha_output(const HeadRows& rows, const KVCache& cache, std::size_t layer,
                                        const ModelWeights& w, MacCounter* counter = nullptr) {
  const ModelConfig& cfg = w.config;
  const std::size_t d = cfg.d_model;
  const std::size_t dk = cfg.d_head();
  if (rows.size() != cfg.n_heads) throw ConfigError("te_mha_output: expected one row per head");
  const std::size_t n = cache.rows_in_layer(layer);
  const float* vals = cache.values(layer).data();

  std::vector<float> heads(d, 0.0f);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    if (rows[h].size() != n) throw ConfigError("te_mha_output: row length does not match cached positions");
    float* out = heads.data() + h * dk;
    for (std::size_t p = 0; p < n; ++p) {
      const float a = rows[h][p];
      const float* vp = vals + p * d + h * dk;
      for (std::size_t j = 0; j < dk; ++j) out[j] += a * vp[j];
    }
  }
  if (counter) counter->macs += cfg.n_heads * n * dk + d * d;
  return kernels::matvec(heads, w.layers[layer].wo);
}

inline LogitsPair te_logits(const StepOutput& step, const ModelWeights& w, std::span<const float> te_attention,
                            TeHeadInput mode = TeHeadInput::ResidualSum, MacCounter* counter = nullptr) {
  const ModelConfig& cfg = w.config;
  const std::size_t L = cfg.n_layers;
  if (step.hidden_states.size() != L + 1) throw ConfigError("te_logits: step lacks hidden states");
  if (te_attention.size() != cfg.d_model) throw ConfigError("te_logits: TE attention width mismatch");

  const LayerWeights& last = w.layers[L - 1];
  auto h_bar = kernels::add(te_attention, step.hidden_states[L - 1]);
  auto h_hat = mlp_forward(last, h_bar);
  kernels::add_inplace(h_hat, h_bar);
  if (mode == TeHeadInput::ResidualSum) kernels::add_inplace(h_hat, step.hidden_states[L]);

  if (counter) counter->macs += 2 * cfg.d_model * cfg.d_mlp + cfg.d_model * cfg.vocab_size;
  return {step.logits, kernels::matvec(h_hat, w.lm_head)};
}

// Extra work per generated token relative to regular decoding.
struct ExtraCompute {
  int extra_mha_evals = 0;
  int extra_mlp_evals = 0;
  int extra_full_forwards = 0;

  friend bool operator==(const ExtraCompute&, const ExtraCompute&) = default;
};

inline ExtraCompute extra_compute_account(Method m) {
  switch (m) {
    case Method::Only: return {1, 1, 0};
    case Method::Vcd:
    case Method::M3id: return {0, 0, 1};
    case Method::Regular: break;
  }
  return {};
}

}  // namespace only
