#pragma once

// Quick structural checks on a small seeded model, run by `only selftest`.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "only/only.hpp"

namespace only::tools {

struct SelftestCase {
  std::string name;
  std::function<bool()> run;
};

inline std::vector<SelftestCase> selftest_cases() {
  ModelConfig cfg;
  cfg.n_layers = 3;
  cfg.n_heads = 4;
  cfg.d_model = 32;
  cfg.d_mlp = 64;
  cfg.vocab_size = 64;
  cfg.max_seq_len = 64;
  const auto w = std::make_shared<const ModelWeights>(init_model(cfg, 1234));
  const auto prompt = std::make_shared<const Prompt>(build_prompt(random_prompt_spec(4, 8, 3, cfg.vocab_size, 5), *w));

  std::vector<SelftestCase> cases;

  cases.push_back({"attention rows are probability vectors", [=] {
                     const auto pre = prefill(*w, prompt->embeddings, prompt->layout);
                     const auto& a = pre.last.attention;
                     for (std::size_t l = 0; l < a.n_layers; ++l)
                       for (std::size_t h = 0; h < a.n_heads; ++h) {
                         double s = 0.0;
                         for (float v : a.row(l, h)) {
                           if (v < 0.0f) return false;
                           s += v;
                         }
                         if (std::abs(s - 1.0) > 1e-6) return false;
                       }
                     return true;
                   }});

  cases.push_back({"TE-MHA with every head kept equals the main attention output", [=] {
                     const auto pre = prefill(*w, prompt->embeddings, prompt->layout);
                     const auto te = te_mha_output(pre.last.attention.rows_at(cfg.te_layer), pre.cache, cfg.te_layer, *w);
                     for (std::size_t i = 0; i < te.size(); ++i)
                       if (std::abs(te[i] - pre.last.te_attn_output[i]) > 1e-6f) return false;
                     return true;
                   }});

  cases.push_back({"eq17 with all heads at the last layer reproduces the original logits", [=] {
                     PrefillOptions po;
                     po.te_layer = cfg.n_layers - 1;
                     const auto pre = prefill(*w, prompt->embeddings, prompt->layout, po);
                     const auto te = te_mha_output(pre.last.attention.rows_at(cfg.n_layers - 1), pre.cache,
                                                   cfg.n_layers - 1, *w);
                     const auto pair = te_logits(pre.last, *w, te, TeHeadInput::EnhancedOnly);
                     for (std::size_t i = 0; i < pair.original.size(); ++i)
                       if (std::abs(pair.original[i] - pair.enhanced[i]) > 1e-5f) return false;
                     return true;
                   }});

  cases.push_back({"zero fusion weights reproduce regular decoding", [=] {
                     DecodeOptions o;
                     o.max_tokens = 12;
                     o.eos_token.reset();
                     o.params.rng_seed = 99;
                     o.params.alpha1 = o.params.alpha2 = 0.0;
                     o.method = Method::Regular;
                     const auto reg = run_decode(*w, *prompt, o);
                     o.method = Method::Only;
                     const auto onl = run_decode(*w, *prompt, o);
                     return reg.tokens == onl.tokens;
                   }});

  cases.push_back({"forward counters follow the closed form", [=] {
                     DecodeOptions o;
                     o.max_tokens = 6;
                     o.eos_token.reset();
                     for (Method m : kAllMethods) {
                       o.method = m;
                       const auto r = run_decode(*w, *prompt, o);
                       if (!counters_match(r.stats, expected_counters(m, prompt->size(), 6))) return false;
                     }
                     return true;
                   }});

  cases.push_back({"seeded runs are deterministic", [=] {
                     DecodeOptions o;
                     o.max_tokens = 10;
                     o.params.rng_seed = 3;
                     return trace_to_jsonl(run_decode(*w, *prompt, o).trace) ==
                            trace_to_jsonl(run_decode(*w, *prompt, o).trace);
                   }});

  return cases;
}

inline int run_selftest() {
  int failed = 0;
  for (const auto& c : selftest_cases()) {
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "  %s: %s\n", c.name.c_str(), e.what());
    }
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", c.name.c_str());
    failed += !ok;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace only::tools
