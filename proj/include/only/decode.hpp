#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "only/adaptive.hpp"
#include "only/baselines.hpp"
#include "only/method.hpp"
#include "only/model.hpp"
#include "only/prompt.hpp"
#include "only/te_branch.hpp"
#include "only/tver.hpp"

namespace only {

struct OnlyOptions {
  std::optional<std::size_t> te_layer;  // defaults to the model's te_layer
  TeHeadInput head_input = TeHeadInput::ResidualSum;
  EnhancementStrategy strategy = strategy::TverMask{};
  EntropyMode entropy_mode = EntropyMode::Resoftmax;
  // Diagnostic: skip head selection and keep every head unmodified.
  bool keep_all_heads = false;
};

struct DecodeOptions {
  Method method = Method::Only;
  DecodeParams params;
  OnlyOptions only;
  baseline::Vcd vcd;
  baseline::M3id m3id;
  bool regular_plausibility = true;
  std::size_t max_tokens = 32;
  std::optional<int> eos_token = 0;
  // Store per-step wall time in the trace. Off keeps traces byte-reproducible.
  bool record_timing = false;
};

struct ForwardStats {
  std::uint64_t prompt_len = 0;
  std::uint64_t n_tokens = 0;
  std::uint64_t full_forwards = 0;
  std::uint64_t extra_mha_evals = 0;
  std::uint64_t extra_mlp_evals = 0;
  std::uint64_t extra_macs = 0;
  std::uint64_t wall_ns_total = 0;
  std::uint64_t wall_ns_decode = 0;
  double wall_ns_per_token = 0.0;
  std::uint64_t peak_alloc_bytes = 0;
};

// One generated token. Fields that do not apply to a method are null/empty.
struct TraceRecord {
  Method method = Method::Regular;
  std::size_t step = 0;
  int token_id = 0;
  std::optional<double> d_t;
  std::optional<Branch> branch;
  std::size_t n_masked = 0;
  double logit_max = 0.0;
  std::vector<double> tver;
  std::vector<bool> keep_mask;
  std::optional<double> layer_avg;
  std::optional<double> logits_l1_distance;
  std::optional<TeHeadInput> te_mode;
  std::uint64_t step_ns = 0;
};

inline nlohmann::json to_json(const TraceRecord& r) {
  auto opt = [](const auto& o) -> nlohmann::json { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  return {
      {"method", method_name(r.method)},
      {"step", r.step},
      {"token_id", r.token_id},
      {"d_t", opt(r.d_t)},
      {"branch", r.branch ? nlohmann::json(branch_name(*r.branch)) : nlohmann::json(nullptr)},
      {"n_masked", r.n_masked},
      {"logit_max", r.logit_max},
      {"tver", r.tver},
      {"keep_mask", r.keep_mask},
      {"layer_avg", opt(r.layer_avg)},
      {"logits_l1_distance", opt(r.logits_l1_distance)},
      {"te_mode", r.te_mode ? nlohmann::json(te_head_input_name(*r.te_mode)) : nlohmann::json(nullptr)},
      {"step_ns", r.step_ns},
  };
}

inline std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<TraceRecord> trace;
  ForwardStats stats;
};

namespace detail {

inline double l1(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s;
}

inline std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - since).count());
}

// Independent stream for strategy noise and visual distortion so the sampling
// stream advances identically for every method.
inline std::uint64_t aux_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

}  // namespace detail

// Prefill plus the autoregressive loop for any method. Every sampled token is
// fed back through the model, so a run of N tokens costs P + N forwards on the
// main sequence (and as many again on the counterpart for VCD / M3ID).
inline DecodeResult run_decode(const ModelWeights& w, const Prompt& prompt, const DecodeOptions& opt) {
  using clock = std::chrono::steady_clock;
  opt.params.validate();
  const ModelConfig& cfg = w.config;
  const std::size_t te_layer = opt.only.te_layer.value_or(cfg.te_layer);
  if (te_layer >= cfg.n_layers) throw ConfigError("te_layer out of range");
  if (prompt.size() + opt.max_tokens > cfg.max_seq_len)
    throw CapacityError("prompt (" + std::to_string(prompt.size()) + ") plus max_tokens (" +
                        std::to_string(opt.max_tokens) + ") exceeds max_seq_len " + std::to_string(cfg.max_seq_len));

  const Method method = opt.method;

  DecodeResult res;
  ForwardStats& st = res.stats;
  st.prompt_len = prompt.size();
  std::mt19937_64 rng(opt.params.rng_seed);
  std::mt19937_64 aux_rng(detail::aux_seed(opt.params.rng_seed));
  TokenLayout layout = prompt.layout;
  MacCounter macs;

  const auto t_start = clock::now();
  PrefillOptions popt;
  popt.te_layer = te_layer;
  PrefillResult main = prefill(w, prompt.embeddings, layout, popt);
  st.full_forwards += prompt.size();

  std::optional<PrefillResult> aux;
  if (method == Method::Vcd) {
    const auto distorted = distort_visual(prompt.embeddings, layout, opt.vcd.noise_std, opt.vcd.noise_steps, aux_rng);
    aux = prefill(w, distorted, layout, popt);
  } else if (method == Method::M3id) {
    PrefillOptions uopt = popt;
    uopt.mask_visual = true;
    aux = prefill(w, prompt.embeddings, layout, uopt);
  }
  if (aux) st.full_forwards += prompt.size();

  const auto t_decode = clock::now();
  for (std::size_t step = 0; step < opt.max_tokens; ++step) {
    const auto t_step = clock::now();
    TraceRecord rec;
    rec.method = method;
    rec.step = step;
    const StepOutput& cur = main.last;
    std::vector<float> fused;

    switch (method) {
      case Method::Regular:
        fused = cur.logits;
        break;
      case Method::Only: {
        HeadRows rows = cur.attention.rows_at(te_layer);
        if (!opt.only.keep_all_heads) {
          std::optional<TverReport> report;
          if (needs_tver_report(opt.only.strategy)) {
            report = compute_tver(rows, layout, opt.only.entropy_mode);
            rec.tver = report->tver;
            rec.keep_mask = report->keep_mask;
            rec.layer_avg = report->layer_average;
          } else if (std::holds_alternative<strategy::SumRatioMask>(opt.only.strategy)) {
            const auto ratios = attention_mass_ratios(rows, layout);
            const auto sel = select_at_or_above_mean(ratios);
            rec.tver = ratios;
            rec.keep_mask = sel.keep;
            rec.layer_avg = sel.average;
          }
          rows = apply_strategy(opt.only.strategy, rows, layout, report ? &*report : nullptr, aux_rng);
        }
        const auto te_attn = te_mha_output(rows, main.cache, te_layer, w, &macs);
        const LogitsPair pair = te_logits(cur, w, te_attn, opt.only.head_input, &macs);
        ++st.extra_mha_evals;
        ++st.extra_mlp_evals;
        FusedLogits f = fuse_logits(pair, opt.params);
        rec.d_t = f.distance;
        rec.branch = f.branch;
        rec.logits_l1_distance = detail::l1(pair.original, pair.enhanced);
        rec.te_mode = opt.only.head_input;
        fused = std::move(f.logits);
        break;
      }
      case Method::Vcd:
      case Method::M3id: {
        const auto& counter = aux->last.logits;
        fused = method == Method::Vcd ? vcd_fuse(cur.logits, counter, opt.vcd.alpha)
                                      : m3id_fuse(cur.logits, counter, opt.m3id.lambda, step);
        rec.d_t = manhattan_distance(kernels::softmax(cur.logits), kernels::softmax(counter));
        rec.logits_l1_distance = detail::l1(cur.logits, counter);
        break;
      }
    }

    const bool constrain = method != Method::Regular || opt.regular_plausibility;
    std::vector<float> masked =
        constrain ? plausibility_mask(fused, kernels::softmax(cur.logits), opt.params.beta) : std::move(fused);
    rec.n_masked = count_masked(masked);
    rec.logit_max = *std::max_element(masked.begin(), masked.end());

    const int token = sample_token(masked, opt.params, rng);
    rec.token_id = token;
    res.tokens.push_back(token);

    layout.append_generated();
    const auto emb = w.embed_token(token);
    StepOptions so;
    so.te_layer = te_layer;
    main.last = forward_step(w, main.cache, emb, so);
    ++st.full_forwards;
    if (aux) {
      aux->last = forward_step(w, aux->cache, emb, so);
      ++st.full_forwards;
    }

    if (opt.record_timing) rec.step_ns = detail::elapsed_ns(t_step);
    res.trace.push_back(std::move(rec));
    if (opt.eos_token && token == *opt.eos_token) break;
  }

  st.wall_ns_decode = detail::elapsed_ns(t_decode);
  st.wall_ns_total = detail::elapsed_ns(t_start);
  st.n_tokens = res.tokens.size();
  st.wall_ns_per_token = st.n_tokens ? static_cast<double>(st.wall_ns_decode) / static_cast<double>(st.n_tokens) : 0.0;
  st.extra_macs = macs.macs;
  return res;
}

inline DecodeResult run_baseline(const BaselineKind& kind, const ModelWeights& w, const Prompt& prompt,
                                 const DecodeParams& params, std::size_t max_tokens, DecodeOptions base = {}) {
  base.params = params;
  base.max_tokens = max_tokens;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, baseline::Regular>) {
          base.method = Method::Regular;
        } else if constexpr (std::is_same_v<K, baseline::Vcd>) {
          base.method = Method::Vcd;
          base.vcd = k;
        } else {
          base.method = Method::M3id;
          base.m3id = k;
        }
      },
      kind);
  return run_decode(w, prompt, base);
}

// Closed-form forward counters for a run of `n_tokens` on a prompt of `prompt_len`.
inline ForwardStats expected_counters(Method m, std::uint64_t prompt_len, std::uint64_t n_tokens) {
  ForwardStats s;
  s.prompt_len = prompt_len;
  s.n_tokens = n_tokens;
  const auto extra = extra_compute_account(m);
  s.full_forwards = (1 + static_cast<std::uint64_t>(extra.extra_full_forwards)) * (prompt_len + n_tokens);
  s.extra_mha_evals = static_cast<std::uint64_t>(extra.extra_mha_evals) * n_tokens;
  s.extra_mlp_evals = static_cast<std::uint64_t>(extra.extra_mlp_evals) * n_tokens;
  return s;
}

inline bool counters_match(const ForwardStats& got, const ForwardStats& want) {
  return got.full_forwards == want.full_forwards && got.extra_mha_evals == want.extra_mha_evals &&
         got.extra_mlp_evals == want.extra_mlp_evals;
}

}  // namespace only
