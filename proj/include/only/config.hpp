#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "only/errors.hpp"

namespace only {

// Architecture hyperparameters of the decoder-only transformer.
struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 8;
  std::size_t d_mlp = 32;
  std::size_t vocab_size = 16;
  std::size_t max_seq_len = 64;
  // Layer whose attention output is re-derived by the textual-enhancement branch.
  std::size_t te_layer = 0;
  std::uint64_t rng_seed = 0;

  std::size_t d_head() const { return d_model / n_heads; }

  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(n_layers > 0, "n_layers must be positive");
    require(n_heads > 0, "n_heads must be positive");
    require(d_model > 0, "d_model must be positive");
    require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(d_mlp > 0, "d_mlp must be positive");
    require(vocab_size > 0, "vocab_size must be positive");
    require(max_seq_len > 0, "max_seq_len must be positive");
    require(te_layer < n_layers, "te_layer must lie in [0, n_layers - 1]");
  }

  // Number of scalars stored in ModelWeights for this configuration.
  std::size_t parameter_count() const {
    const std::size_t d = d_model;
    const std::size_t per_layer = 2 * d                 // attention and MLP norm gains
                                  + 4 * d * d           // Q, K, V, O
                                  + d * d_mlp + d_mlp   // MLP in + bias
                                  + d_mlp * d + d;      // MLP out + bias
    return vocab_size * d + max_seq_len * d + n_layers * per_layer + d * vocab_size;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Reference desk-scale configuration used by the benchmark and acceptance suite.
inline ModelConfig reference_config() {
  ModelConfig c;
  c.n_layers = 8;
  c.n_heads = 8;
  c.d_model = 256;
  c.d_mlp = 1024;
  c.vocab_size = 1024;
  c.max_seq_len = 1024;
  c.te_layer = 0;
  c.rng_seed = 7;
  return c;
}

}  // namespace only
