#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "only/only.hpp"
#include "selftest.hpp"

namespace {

using namespace only;

struct DecodeFlags {
  std::string method = "only";
  double alpha1 = 3.0;
  double alpha2 = 1.0;
  double gamma = 0.2;
  double beta = 0.1;
  int te_layer = -1;
  std::string te_mode = "alg1";
  std::string strategy = "tver";
  double noise_sigma = 0.1;
  std::string entropy_mode = "resoftmax";
  std::size_t max_tokens = 32;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool greedy = false;
  double vcd_alpha = 1.0;
  double noise_std = 0.1;
  int noise_steps = 500;
  double lambda = 0.02;
  bool no_regular_plausibility = false;
  int eos = 0;
};

void add_decode_flags(CLI::App* app, DecodeFlags& f) {
  app->add_option("--alpha1", f.alpha1, "collaborative weight")->capture_default_str();
  app->add_option("--alpha2", f.alpha2, "contrastive weight")->capture_default_str();
  app->add_option("--gamma", f.gamma, "distance threshold in [0,2]")->capture_default_str();
  app->add_option("--beta", f.beta, "plausibility truncation in [0,1]")->capture_default_str();
  app->add_option("--te-layer", f.te_layer, "intervention layer (default: from model file)");
  app->add_option("--te-mode", f.te_mode, "output-head input for the TE branch")
      ->check(CLI::IsMember({"alg1", "eq17"}))
      ->capture_default_str();
  app->add_option("--strategy", f.strategy, "textual enhancement strategy")
      ->check(CLI::IsMember({"tver", "zero-visual", "noise-visual", "double-textual", "sum-ratio"}))
      ->capture_default_str();
  app->add_option("--noise-sigma", f.noise_sigma, "std of noise-visual strategy")->capture_default_str();
  app->add_option("--entropy-mode", f.entropy_mode, "subset distribution for TVER")
      ->check(CLI::IsMember({"resoftmax", "renormalize"}))
      ->capture_default_str();
  app->add_option("--seed", f.seed, "sampling seed")->capture_default_str();
  app->add_option("--temperature", f.temperature)->capture_default_str();
  app->add_flag("--greedy", f.greedy, "argmax instead of sampling");
  app->add_option("--vcd-alpha", f.vcd_alpha)->capture_default_str();
  app->add_option("--noise-std", f.noise_std, "total std of VCD visual distortion")->capture_default_str();
  app->add_option("--noise-steps", f.noise_steps)->capture_default_str();
  app->add_option("--lambda", f.lambda, "M3ID decay rate")->capture_default_str();
  app->add_flag("--no-regular-plausibility", f.no_regular_plausibility,
                "disable the plausibility constraint for regular decoding");
  app->add_option("--eos", f.eos, "end token id, negative disables")->capture_default_str();
}

EnhancementStrategy parse_strategy(const std::string& s, double sigma) {
  if (s == "tver") return strategy::TverMask{};
  if (s == "zero-visual") return strategy::ZeroVisual{};
  if (s == "noise-visual") return strategy::NoiseVisual{sigma};
  if (s == "double-textual") return strategy::DoubleTextual{};
  if (s == "sum-ratio") return strategy::SumRatioMask{};
  throw ConfigError("unknown strategy " + s);
}

EntropyMode parse_entropy_mode(const std::string& s) {
  return s == "renormalize" ? EntropyMode::Renormalize : EntropyMode::Resoftmax;
}

DecodeOptions to_options(const DecodeFlags& f) {
  DecodeOptions o;
  o.method = parse_method(f.method);
  o.params.alpha1 = f.alpha1;
  o.params.alpha2 = f.alpha2;
  o.params.gamma = f.gamma;
  o.params.beta = f.beta;
  o.params.temperature = f.temperature;
  o.params.sampling = f.greedy ? SamplingMode::Greedy : SamplingMode::Sample;
  o.params.rng_seed = f.seed;
  if (f.te_layer >= 0) o.only.te_layer = static_cast<std::size_t>(f.te_layer);
  o.only.head_input = parse_te_head_input(f.te_mode);
  o.only.strategy = parse_strategy(f.strategy, f.noise_sigma);
  o.only.entropy_mode = parse_entropy_mode(f.entropy_mode);
  o.vcd.alpha = f.vcd_alpha;
  o.vcd.noise_std = f.noise_std;
  o.vcd.noise_steps = f.noise_steps;
  o.m3id.lambda = f.lambda;
  o.regular_plausibility = !f.no_regular_plausibility;
  o.max_tokens = f.max_tokens;
  if (f.eos < 0) o.eos_token.reset();
  else o.eos_token = f.eos;
  return o;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw Error("write failed for " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ONLY decoding: one-layer textual enhancement with adaptive logit fusion"};
  app.require_subcommand(1);

  // init-model
  auto* init = app.add_subcommand("init-model", "write a seeded model file");
  ModelConfig icfg = reference_config();
  std::uint64_t iseed = 7;
  std::string iout;
  init->add_option("--layers", icfg.n_layers)->capture_default_str();
  init->add_option("--heads", icfg.n_heads)->capture_default_str();
  init->add_option("--d-model", icfg.d_model)->capture_default_str();
  init->add_option("--d-mlp", icfg.d_mlp)->capture_default_str();
  init->add_option("--vocab", icfg.vocab_size)->capture_default_str();
  init->add_option("--max-seq-len", icfg.max_seq_len)->capture_default_str();
  init->add_option("--te-layer", icfg.te_layer)->capture_default_str();
  init->add_option("--seed", iseed)->capture_default_str();
  init->add_option("--out", iout, "output model file")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "generate tokens with one method");
  std::string model_path, prompt_path, trace_path;
  bool timing = false;
  DecodeFlags df;
  dec->add_option("--model", model_path)->required();
  dec->add_option("--prompt", prompt_path)->required();
  dec->add_option("--method", df.method)
      ->check(CLI::IsMember({"regular", "only", "vcd", "m3id"}))
      ->capture_default_str();
  dec->add_option("--max-tokens", df.max_tokens)->capture_default_str();
  dec->add_option("--trace", trace_path, "per-token JSONL trace");
  dec->add_flag("--timing", timing, "record step_ns in the trace");
  add_decode_flags(dec, df);

  // bench
  auto* bench = app.add_subcommand("bench", "latency and forward-count comparison");
  std::string bmodel, bprompt, bout;
  std::vector<std::string> bmethods = {"regular", "only", "vcd", "m3id"};
  std::size_t btokens = 128;
  int brepeats = 5;
  bool bparallel = false;
  DecodeFlags bf;
  bench->add_option("--model", bmodel)->required();
  bench->add_option("--prompt", bprompt)->required();
  bench->add_option("--methods", bmethods)->delimiter(',')->capture_default_str();
  bench->add_option("--tokens", btokens)->capture_default_str();
  bench->add_option("--repeats", brepeats)->check(CLI::Range(3, 1000))->capture_default_str();
  bench->add_flag("--parallel", bparallel, "run methods on separate threads");
  bench->add_option("--out", bout, "write report JSON here instead of stdout");
  add_decode_flags(bench, bf);

  // entropy-sweep
  auto* sweep = app.add_subcommand("entropy-sweep", "attention entropy vs. visual noise");
  std::string smodel, sprompt, sout, smode = "resoftmax";
  SweepOptions sopt;
  int ste_layer = -1;
  sweep->add_option("--model", smodel)->required();
  sweep->add_option("--prompt", sprompt)->required();
  sweep->add_option("--noise-levels", sopt.noise_levels)->delimiter(',')->capture_default_str();
  sweep->add_option("--samples", sopt.samples)->check(CLI::PositiveNumber)->capture_default_str();
  sweep->add_option("--seed", sopt.seed)->capture_default_str();
  sweep->add_option("--noise-steps", sopt.noise_steps)->capture_default_str();
  sweep->add_option("--te-layer", ste_layer);
  sweep->add_option("--entropy-mode", smode)->check(CLI::IsMember({"resoftmax", "renormalize"}));
  sweep->add_option("--out", sout, "CSV path instead of stdout");

  auto* self = app.add_subcommand("selftest", "run built-in structural checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      save_model(init_model(icfg, iseed), iout);
      std::fprintf(stderr, "wrote %s (%zu parameters)\n", iout.c_str(), icfg.parameter_count());
    } else if (*dec) {
      const auto w = load_model(model_path);
      const auto prompt = build_prompt(load_prompt_spec(prompt_path), w);
      DecodeOptions o = to_options(df);
      o.record_timing = timing;
      const auto res = run_decode(w, prompt, o);
      if (!trace_path.empty()) write_text(trace_path, trace_to_jsonl(res.trace));
      for (std::size_t i = 0; i < res.tokens.size(); ++i) std::printf(i ? " %d" : "%d", res.tokens[i]);
      std::printf("\n");
    } else if (*bench) {
      const auto w = load_model(bmodel);
      const auto prompt = build_prompt(load_prompt_spec(bprompt), w);
      BenchOptions bo;
      bo.methods.clear();
      for (const auto& m : bmethods) bo.methods.push_back(parse_method(m));
      bo.tokens = btokens;
      bo.repeats = brepeats;
      bo.parallel = bparallel;
      const auto rep = run_bench(w, prompt, to_options(bf), bo);
      const std::string text = to_json(rep).dump(2) + "\n";
      if (bout.empty()) std::fputs(text.c_str(), stdout);
      else write_text(bout, text);
    } else if (*sweep) {
      const auto w = load_model(smodel);
      const auto prompt = build_prompt(load_prompt_spec(sprompt), w);
      if (ste_layer >= 0) sopt.te_layer = static_cast<std::size_t>(ste_layer);
      sopt.entropy_mode = parse_entropy_mode(smode);
      const auto rows = run_entropy_sweep(w, prompt, sopt);
      const std::string csv = sweep_csv(rows);
      if (sout.empty()) std::fputs(csv.c_str(), stdout);
      else write_text(sout, csv);
      std::fprintf(stderr, "%s\n", describe_trend(rows).c_str());
    } else if (*self) {
      return tools::run_selftest();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
