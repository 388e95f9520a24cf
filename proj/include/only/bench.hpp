#pragma once

#include <sys/resource.h>

#include <algorithm>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <thread>
#include <vector>

#include "only/decode.hpp"

namespace only {

struct BenchOptions {
  std::vector<Method> methods = {Method::Regular, Method::Only};
  std::size_t tokens = 128;
  int repeats = 5;  // first repetition is warm-up and discarded
  bool parallel = false;
};

struct MethodBench {
  Method method = Method::Regular;
  std::vector<std::uint64_t> wall_ns;  // post-warm-up repetitions
  std::uint64_t median_wall_ns = 0;
  ForwardStats counters;  // from the last repetition
  ForwardStats expected;
  bool counters_ok = false;
  std::uint64_t token_hash = 0;
  bool deterministic = true;  // identical token hash on every repetition
  double ratio = 0.0;         // median_wall_ns / regular median_wall_ns
};

struct BenchReport {
  ModelConfig config;
  std::size_t prompt_len = 0;
  std::size_t tokens = 0;
  int repeats = 0;
  std::vector<MethodBench> methods;

  const MethodBench& at(Method m) const {
    for (const auto& mb : methods)
      if (mb.method == m) return mb;
    throw ConfigError(std::string("method not benchmarked: ") + method_name(m));
  }
};

// FNV-1a over the little-endian bytes of each token id.
inline std::uint64_t token_sequence_hash(std::span<const int> tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int t : tokens) {
    const auto u = static_cast<std::uint32_t>(t);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Process-wide high-water mark; best effort.
inline std::uint64_t peak_rss_bytes() {
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) != 0) return 0;
  return static_cast<std::uint64_t>(ru.ru_maxrss) * 1024;
}

inline std::uint64_t median(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

namespace detail {

inline MethodBench bench_one(const ModelWeights& w, const Prompt& prompt, DecodeOptions opt, Method m,
                             const BenchOptions& bo) {
  opt.method = m;
  opt.max_tokens = bo.tokens;
  opt.eos_token.reset();  // fixed token budget
  opt.record_timing = false;

  MethodBench mb;
  mb.method = m;
  for (int r = 0; r < bo.repeats; ++r) {
    const DecodeResult res = run_decode(w, prompt, opt);
    const std::uint64_t h = token_sequence_hash(res.tokens);
    if (r == 0) mb.token_hash = h;
    mb.deterministic = mb.deterministic && h == mb.token_hash;
    mb.counters = res.stats;
    if (r > 0) mb.wall_ns.push_back(res.stats.wall_ns_total);
  }
  mb.counters.peak_alloc_bytes = peak_rss_bytes();
  mb.median_wall_ns = median(mb.wall_ns);
  mb.expected = expected_counters(m, prompt.size(), mb.counters.n_tokens);
  mb.counters_ok = counters_match(mb.counters, mb.expected) && mb.counters.n_tokens == bo.tokens;
  return mb;
}

}  // namespace detail

// Times every method and checks its forward counters against the closed form.
// Regular decoding is always included as the ratio baseline.
inline BenchReport run_bench(const ModelWeights& w, const Prompt& prompt, const DecodeOptions& base,
                             BenchOptions bo) {
  if (bo.repeats < 3) throw ConfigError("bench needs at least 3 repeats");
  if (std::find(bo.methods.begin(), bo.methods.end(), Method::Regular) == bo.methods.end())
    bo.methods.insert(bo.methods.begin(), Method::Regular);

  BenchReport rep;
  rep.config = w.config;
  rep.prompt_len = prompt.size();
  rep.tokens = bo.tokens;
  rep.repeats = bo.repeats;
  rep.methods.resize(bo.methods.size());

  if (bo.parallel) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(bo.methods.size());
    for (std::size_t i = 0; i < bo.methods.size(); ++i)
      pool.emplace_back([&, i] {
        try {
          rep.methods[i] = detail::bench_one(w, prompt, base, bo.methods[i], bo);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < bo.methods.size(); ++i)
      rep.methods[i] = detail::bench_one(w, prompt, base, bo.methods[i], bo);
  }

  const double regular_ns = static_cast<double>(rep.at(Method::Regular).median_wall_ns);
  for (auto& mb : rep.methods) mb.ratio = static_cast<double>(mb.median_wall_ns) / regular_ns;

  for (const auto& mb : rep.methods)
    if (!mb.counters_ok)
      throw Error(std::string("forward counters for ") + method_name(mb.method) +
                  " do not match the closed-form expectation");
  return rep;
}

inline nlohmann::json to_json(const ForwardStats& s) {
  return {{"prompt_len", s.prompt_len},
          {"n_tokens", s.n_tokens},
          {"full_forwards", s.full_forwards},
          {"extra_mha_evals", s.extra_mha_evals},
          {"extra_mlp_evals", s.extra_mlp_evals},
          {"extra_macs", s.extra_macs},
          {"wall_ns_total", s.wall_ns_total},
          {"wall_ns_decode", s.wall_ns_decode},
          {"wall_ns_per_token", s.wall_ns_per_token},
          {"peak_alloc_bytes", s.peak_alloc_bytes}};
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json methods = nlohmann::json::object();
  nlohmann::json ratios = nlohmann::json::object();
  for (const auto& mb : r.methods) {
    methods[method_name(mb.method)] = {
        {"stats", to_json(mb.counters)},
        {"expected_full_forwards", mb.expected.full_forwards},
        {"expected_extra_layer_evals", mb.expected.extra_mha_evals},
        {"counters_ok", mb.counters_ok},
        {"wall_ns_runs", mb.wall_ns},
        {"median_wall_ns", mb.median_wall_ns},
        {"token_hash", mb.token_hash},
        {"deterministic", mb.deterministic},
    };
    ratios[method_name(mb.method)] = mb.ratio;
  }
  const ModelConfig& c = r.config;
  return {{"config",
           {{"n_layers", c.n_layers},
            {"n_heads", c.n_heads},
            {"d_model", c.d_model},
            {"d_mlp", c.d_mlp},
            {"vocab_size", c.vocab_size},
            {"max_seq_len", c.max_seq_len},
            {"te_layer", c.te_layer},
            {"rng_seed", c.rng_seed}}},
          {"prompt_len", r.prompt_len},
          {"tokens", r.tokens},
          {"repeats", r.repeats},
          {"methods", methods},
          {"ratios", ratios}};
}

}  // namespace only
