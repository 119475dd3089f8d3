// stepconf: per-step confidence estimation, statement mapping, SFT dataset
// construction, calibration rewards, evaluation metrics, and a synthetic PPO
// calibration demo, over JSONL inference traces.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stepconf/align.hpp"
#include "stepconf/error.hpp"
#include "stepconf/metrics.hpp"
#include "stepconf/rewards.hpp"
#include "stepconf/scorer.hpp"
#include "stepconf/sft.hpp"
#include "stepconf/sim.hpp"
#include "stepconf/statements.hpp"
#include "stepconf/trace.hpp"
#include "stepconf/uncertainty.hpp"

namespace {

using nlohmann::json;
using namespace stepconf;

void emit_json_error(const std::string& type, const std::string& message) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << '\n';
}

void require_readable(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw IoError(what + " not found: " + path);
  }
}

// Runs fn(0..n-1) on up to `jobs` threads. Callers store results by index,
// so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path, std::ios::trunc);
  if (!file) throw IoError("cannot open output file: " + path);
  return file;
}

struct CommonOptions {
  std::string scorer = "bow";
  std::string pools_path = "assets/pools.json";
  std::string embeddings_path;
  double match_threshold = kDefaultMatchThreshold;
  int ece_bins = 10;
  int jobs = 1;
  std::uint64_t seed = 0;
  std::vector<double> weights{0.25, 0.25, 0.25, 0.25};
  double alpha = 1.0 / 3.0;
  double beta = 1.0 / 3.0;
  double gamma = 1.0 / 3.0;
};

struct SimOptions {
  int questions = 20;
  int facts_per_question = 4;
  double p_min = 0.85;
  double p_max = 0.995;
  double iv_noise = 0.15;
  int iterations = 300;
  int episodes_per_question = 3;
  int eval_episodes = 60;
  double epsilon = 0.2;
  int epochs = 4;
  double lr = 6.0;
  double discount = 1.0;
  double lambda = 0.95;
  double temperature = 1.0;
  std::uint64_t seed = 7;
  double alpha = 1.0 / 3.0;
  double beta = 1.0 / 3.0;
  double gamma = 1.0 / 3.0;
};

// Minimal TOML subset for sim configs: `key = value` lines, '#' comments,
// optional quotes; section headers are rejected (the file is flat).
std::map<std::string, std::string> read_flat_toml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> entries;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return std::string();
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected key = value");
    }
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty() || value.empty()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": empty key or value");
    }
    std::replace(key.begin(), key.end(), '_', '-');
    entries[key] = value;
  }
  return entries;
}

// Applies config-file entries to sim options; explicit command-line flags win.
void apply_sim_config(const std::string& path, CLI::App* cmd, SimOptions& opts) {
  const auto entries = read_flat_toml(path);

  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"questions", [&](const std::string& v) { opts.questions = std::stoi(v); }},
      {"facts", [&](const std::string& v) { opts.facts_per_question = std::stoi(v); }},
      {"p-min", [&](const std::string& v) { opts.p_min = std::stod(v); }},
      {"p-max", [&](const std::string& v) { opts.p_max = std::stod(v); }},
      {"iv-noise", [&](const std::string& v) { opts.iv_noise = std::stod(v); }},
      {"iterations", [&](const std::string& v) { opts.iterations = std::stoi(v); }},
      {"episodes-per-question",
       [&](const std::string& v) { opts.episodes_per_question = std::stoi(v); }},
      {"eval-episodes", [&](const std::string& v) { opts.eval_episodes = std::stoi(v); }},
      {"epsilon", [&](const std::string& v) { opts.epsilon = std::stod(v); }},
      {"epochs", [&](const std::string& v) { opts.epochs = std::stoi(v); }},
      {"lr", [&](const std::string& v) { opts.lr = std::stod(v); }},
      {"discount", [&](const std::string& v) { opts.discount = std::stod(v); }},
      {"lambda", [&](const std::string& v) { opts.lambda = std::stod(v); }},
      {"temperature", [&](const std::string& v) { opts.temperature = std::stod(v); }},
      {"seed", [&](const std::string& v) { opts.seed = std::stoull(v); }},
      {"alpha", [&](const std::string& v) { opts.alpha = std::stod(v); }},
      {"beta", [&](const std::string& v) { opts.beta = std::stod(v); }},
      {"gamma", [&](const std::string& v) { opts.gamma = std::stod(v); }},
  };

  for (const auto& [key, value] : entries) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ValidationError("config file " + path + ": unknown key \"" + key + "\"");
    }
    const CLI::Option* flag = cmd->get_option_no_throw("--" + key);
    if (flag != nullptr && flag->count() > 0) continue;  // explicit flag wins
    try {
      it->second(value);
    } catch (const std::exception&) {
      throw ValidationError("config file " + path + ": bad value for \"" + key + "\": " + value);
    }
  }
}

EmbeddingStore load_store(const CommonOptions& opts) {
  if (opts.embeddings_path.empty()) return EmbeddingStore{};
  require_readable(opts.embeddings_path, "embedding sidecar");
  return EmbeddingStore::load(opts.embeddings_path);
}

std::array<double, 4> weight_array(const std::vector<double>& weights) {
  if (weights.size() != 4) {
    throw ValidationError("--weights expects exactly 4 values");
  }
  return {weights[0], weights[1], weights[2], weights[3]};
}

std::vector<ComponentScores> corpus_components(const std::vector<InferenceTrace>& traces,
                                               const SentenceScorer& scorer,
                                               const EmbeddingStore& store, int jobs) {
  std::vector<std::vector<ComponentScores>> per_trace(traces.size());
  parallel_for(traces.size(), jobs, [&](std::size_t i) {
    const InferenceTrace& trace = traces[i];
    for (const SentenceSpan& sentence : trace.sentences) {
      per_trace[i].push_back(component_scores(sentence, trace.question,
                                              trace.image_embedding_ref, scorer, store));
    }
  });
  std::vector<ComponentScores> flat;
  for (const auto& group : per_trace) flat.insert(flat.end(), group.begin(), group.end());
  return flat;
}

int run_fit_norm(const CommonOptions& opts, const std::string& traces_path,
                 const std::string& out_path) {
  require_readable(traces_path, "trace file");
  const auto traces = read_traces(traces_path);
  if (traces.empty()) throw ValidationError("no traces in " + traces_path);
  const auto scorer = make_scorer(opts.scorer);
  const EmbeddingStore store = load_store(opts);

  const auto dataset = corpus_components(traces, *scorer, store, opts.jobs);
  const Normalizer norm = fit_normalizer(dataset, weight_array(opts.weights));
  norm.save(out_path);
  std::cerr << "fitted normalizer over " << dataset.size() << " sentences from "
            << traces.size() << " traces -> " << out_path << '\n';
  return 0;
}

int run_estimate(const CommonOptions& opts, const std::string& traces_path,
                 const std::string& norm_path, const std::string& out_path) {
  require_readable(traces_path, "trace file");
  require_readable(norm_path, "normalizer file");
  const auto traces = read_traces(traces_path);
  const Normalizer norm = Normalizer::load(norm_path);
  const auto scorer = make_scorer(opts.scorer);
  const EmbeddingStore store = load_store(opts);

  std::vector<std::vector<ConfidenceRecord>> records(traces.size());
  parallel_for(traces.size(), opts.jobs, [&](std::size_t i) {
    records[i] = score_trace(traces[i], *scorer, store, norm);
  });

  std::ofstream file;
  std::ostream& out = open_output(file, out_path);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (const ConfidenceRecord& record : records[i]) {
      json j = record;
      j["trace_id"] = traces[i].id;
      out << j.dump() << '\n';
    }
  }
  return 0;
}

int run_build_sft(const CommonOptions& opts, const std::string& traces_path,
                  const std::string& norm_path, const std::string& out_path,
                  const std::string& annotated_out, bool print_stats) {
  require_readable(traces_path, "trace file");
  require_readable(norm_path, "normalizer file");
  require_readable(opts.pools_path, "statement pool file");
  const auto traces = read_traces(traces_path);
  const Normalizer norm = Normalizer::load(norm_path);
  const StatementPools pools = StatementPools::load(opts.pools_path);
  const auto scorer = make_scorer(opts.scorer);
  const EmbeddingStore store = load_store(opts);

  // Per-trace seeds derive from (seed, id), so parallel output equals
  // sequential output.
  std::vector<std::optional<SftExample>> built(traces.size());
  std::vector<std::string> reasons(traces.size());
  parallel_for(traces.size(), opts.jobs, [&](std::size_t i) {
    built[i] = build_sft_example(traces[i], norm, pools, *scorer, store, opts.seed, &reasons[i]);
  });

  SftBuildResult result;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (built[i]) {
      result.examples.push_back(std::move(*built[i]));
    } else {
      result.skipped.push_back(SkippedTrace{traces[i].id, reasons[i]});
    }
  }

  write_sft(out_path, result.examples);
  for (const SkippedTrace& skip : result.skipped) {
    std::cerr << json{{"skipped_trace", skip.id}, {"reason", skip.reason}}.dump() << '\n';
  }
  if (!annotated_out.empty()) {
    std::vector<AnnotatedResponse> annotated;
    annotated.reserve(result.examples.size());
    for (const SftExample& example : result.examples) annotated.push_back(to_annotated(example));
    write_annotated(annotated_out, annotated);
  }
  if (print_stats) {
    std::cout << json(sft_stats(result.examples)).dump() << '\n';
  }
  return 0;
}

int run_reward(const CommonOptions& opts, const std::string& traces_path,
               const std::string& refs_path, const std::string& annotated_path,
               const std::string& norm_path, const std::string& out_path) {
  require_readable(traces_path, "trace file");
  require_readable(refs_path, "reference chain file");
  require_readable(annotated_path, "annotated response file");
  require_readable(norm_path, "normalizer file");
  require_readable(opts.pools_path, "statement pool file");

  const auto traces = read_traces(traces_path);
  const auto chains = read_reference_chains(refs_path);
  const auto responses = read_annotated(annotated_path);
  const Normalizer norm = Normalizer::load(norm_path);
  const StatementPools pools = StatementPools::load(opts.pools_path);
  const auto scorer = make_scorer(opts.scorer);
  const EmbeddingStore store = load_store(opts);

  std::map<std::string, const InferenceTrace*> trace_by_id;
  for (const InferenceTrace& trace : traces) trace_by_id[trace.id] = &trace;
  std::map<std::string, const ReferenceChain*> chain_by_id;
  for (const ReferenceChain& chain : chains) chain_by_id[chain.id] = &chain;

  std::vector<RewardBreakdown> breakdowns(responses.size());
  parallel_for(responses.size(), opts.jobs, [&](std::size_t i) {
    const AnnotatedResponse& response = responses[i];
    auto trace_it = trace_by_id.find(response.trace_id);
    if (trace_it == trace_by_id.end()) {
      throw ValidationError("no trace for annotated response \"" + response.trace_id + "\"");
    }
    auto chain_it = chain_by_id.find(response.trace_id);
    if (chain_it == chain_by_id.end()) {
      throw ValidationError("no reference chain for response \"" + response.trace_id + "\"");
    }
    const auto internal = score_trace(*trace_it->second, *scorer, store, norm);
    breakdowns[i] =
        reward_breakdown(response, *chain_it->second, internal, pools, *scorer,
                         opts.match_threshold, opts.alpha, opts.beta, opts.gamma);
  });

  std::ofstream file;
  std::ostream& out = open_output(file, out_path);
  for (const RewardBreakdown& breakdown : breakdowns) {
    out << json(breakdown).dump() << '\n';
  }
  return 0;
}

int run_eval(const CommonOptions& opts, const std::string& annotated_path,
             const std::string& refs_path, const std::string& out_path) {
  require_readable(annotated_path, "annotated response file");
  require_readable(refs_path, "reference chain file");
  require_readable(opts.pools_path, "statement pool file");

  const auto responses = read_annotated(annotated_path);
  const auto chains = read_reference_chains(refs_path);
  const StatementPools pools = StatementPools::load(opts.pools_path);
  const auto scorer = make_scorer(opts.scorer);

  const EvalReport report =
      evaluate(responses, chains, pools, *scorer, opts.match_threshold, opts.ece_bins);

  std::ofstream file;
  std::ostream& out = open_output(file, out_path);
  out << json(report).dump(2) << '\n';
  return 0;
}

int run_ppo_sim(const SimOptions& opts, const std::string& out_path) {
  sim::SynthEnvConfig env_config;
  env_config.n_questions = opts.questions;
  env_config.facts_per_question = opts.facts_per_question;
  env_config.p_min = opts.p_min;
  env_config.p_max = opts.p_max;
  env_config.iv_noise_sigma = opts.iv_noise;
  env_config.seed = opts.seed;

  sim::TrainConfig train_config;
  train_config.rewards = sim::RewardWeights{opts.alpha, opts.beta, opts.gamma};
  train_config.ppo = sim::PpoConfig{opts.epsilon, opts.epochs, opts.lr};
  train_config.discount = opts.discount;
  train_config.lambda = opts.lambda;
  train_config.iterations = opts.iterations;
  train_config.episodes_per_question = opts.episodes_per_question;
  train_config.eval_episodes = opts.eval_episodes;
  train_config.temperature = opts.temperature;
  train_config.seed = opts.seed;

  const sim::SynthEnv env(env_config);
  const sim::TrainResult result = sim::train(env, train_config);
  sim::write_curve_csv(out_path, result.curve);

  const sim::CurveRow& first = result.curve.front();
  const sim::CurveRow& last = result.curve.back();
  std::cerr << "ppo-sim: iterations=" << opts.iterations << " reward " << first.mean_reward
            << " -> " << last.mean_reward << ", eval_mece " << first.eval_mece << " -> "
            << last.eval_mece << '\n';
  return 0;
}

json config_to_json(const CommonOptions& common, const SimOptions& sim_opts) {
  return json{
      {"scorer", common.scorer},
      {"pools", common.pools_path},
      {"embeddings", common.embeddings_path},
      {"match_threshold", common.match_threshold},
      {"ece_bins", common.ece_bins},
      {"jobs", common.jobs},
      {"seed", common.seed},
      {"weights", common.weights},
      {"alpha", common.alpha},
      {"beta", common.beta},
      {"gamma", common.gamma},
      {"ppo_sim",
       {{"questions", sim_opts.questions},
        {"facts_per_question", sim_opts.facts_per_question},
        {"p_min", sim_opts.p_min},
        {"p_max", sim_opts.p_max},
        {"iv_noise", sim_opts.iv_noise},
        {"iterations", sim_opts.iterations},
        {"episodes_per_question", sim_opts.episodes_per_question},
        {"eval_episodes", sim_opts.eval_episodes},
        {"epsilon", sim_opts.epsilon},
        {"epochs", sim_opts.epochs},
        {"lr", sim_opts.lr},
        {"discount", sim_opts.discount},
        {"lambda", sim_opts.lambda},
        {"temperature", sim_opts.temperature},
        {"seed", sim_opts.seed},
        {"alpha", sim_opts.alpha},
        {"beta", sim_opts.beta},
        {"gamma", sim_opts.gamma}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepconf: reasoning-step confidence toolkit"};
  app.require_subcommand(0, 1);

  bool show_config = false;
  app.add_flag("--show-config", show_config, "Print the effective configuration and exit");

  CommonOptions common;
  SimOptions sim_opts;

  std::string traces_path, norm_path, refs_path, annotated_path, out_path, annotated_out;
  bool print_stats = false;

  auto add_scorer = [&](CLI::App* cmd) {
    cmd->add_option("--scorer", common.scorer, "Sentence scorer: bow or embed:<sidecar path>")
        ->capture_default_str();
    cmd->add_option("--embeddings", common.embeddings_path,
                    "Embedding sidecar for image/sentence refs");
  };

  CLI::App* fit = app.add_subcommand("fit-norm", "Fit dataset normalization statistics");
  fit->add_option("--traces", traces_path, "Trace JSONL file")->required();
  fit->add_option("--out", out_path, "Output normalizer JSON")->required();
  fit->add_option("--weights", common.weights, "Fusion weights w0 w1 w2 w3")
      ->expected(4)
      ->capture_default_str();
  fit->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str();
  add_scorer(fit);

  CLI::App* estimate = app.add_subcommand("estimate", "Per-sentence confidence records");
  estimate->add_option("--traces", traces_path, "Trace JSONL file")->required();
  estimate->add_option("--norm", norm_path, "Fitted normalizer JSON")->required();
  estimate->add_option("--out", out_path, "Output JSONL (default stdout)");
  estimate->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str();
  add_scorer(estimate);

  CLI::App* build = app.add_subcommand("build-sft", "Build the statement-interleaved SFT dataset");
  build->add_option("--traces", traces_path, "Trace JSONL file")->required();
  build->add_option("--norm", norm_path, "Fitted normalizer JSON")->required();
  build->add_option("--pools", common.pools_path, "Statement pool JSON")->capture_default_str();
  build->add_option("--seed", common.seed, "Statement sampling seed")->capture_default_str();
  build->add_option("--out", out_path, "Output SFT JSONL")->required();
  build->add_option("--annotated-out", annotated_out,
                    "Also write the annotated-response view of the dataset");
  build->add_flag("--stats", print_stats, "Print level histogram and statement diversity");
  build->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str();
  add_scorer(build);

  CLI::App* reward = app.add_subcommand("reward", "Per-response calibration rewards");
  reward->add_option("--traces", traces_path, "Trace JSONL file")->required();
  reward->add_option("--refs", refs_path, "Reference chain JSONL file")->required();
  reward->add_option("--annotated", annotated_path, "Annotated response JSONL file")->required();
  reward->add_option("--norm", norm_path, "Fitted normalizer JSON")->required();
  reward->add_option("--pools", common.pools_path, "Statement pool JSON")->capture_default_str();
  reward->add_option("--match-threshold", common.match_threshold, "Sentence match threshold")
      ->capture_default_str();
  reward->add_option("--alpha", common.alpha, "Knowledge accuracy weight")->capture_default_str();
  reward->add_option("--beta", common.beta, "Expected calibration weight")->capture_default_str();
  reward->add_option("--gamma", common.gamma, "Self calibration weight")->capture_default_str();
  reward->add_option("--out", out_path, "Output JSONL (default stdout)");
  reward->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str();
  add_scorer(reward);

  CLI::App* eval_cmd = app.add_subcommand("eval", "ECE/MECE/AUROC/chain-F1 report");
  eval_cmd->add_option("--annotated", annotated_path, "Annotated response JSONL file")->required();
  eval_cmd->add_option("--refs", refs_path, "Reference chain JSONL file")->required();
  eval_cmd->add_option("--pools", common.pools_path, "Statement pool JSON")->capture_default_str();
  eval_cmd->add_option("--match-threshold", common.match_threshold, "Sentence match threshold")
      ->capture_default_str();
  eval_cmd->add_option("--ece-bins", common.ece_bins, "Equal-width ECE bin count")
      ->capture_default_str();
  eval_cmd->add_option("--out", out_path, "Output report JSON (default stdout)");
  add_scorer(eval_cmd);

  CLI::App* ppo = app.add_subcommand("ppo-sim", "Synthetic-environment PPO calibration demo");
  std::string sim_config_path;
  ppo->add_option("--config", sim_config_path, "TOML config file (flags override)");
  ppo->add_option("--out", out_path, "Output learning-curve CSV")->required();
  ppo->add_option("--questions", sim_opts.questions, "Question count")->capture_default_str();
  ppo->add_option("--facts", sim_opts.facts_per_question, "Facts per question (episode length)")
      ->capture_default_str();
  ppo->add_option("--p-min", sim_opts.p_min, "Min per-fact correctness probability")
      ->capture_default_str();
  ppo->add_option("--p-max", sim_opts.p_max, "Max per-fact correctness probability")
      ->capture_default_str();
  ppo->add_option("--iv-noise", sim_opts.iv_noise, "Internal confidence noise sigma")
      ->capture_default_str();
  ppo->add_option("--iterations", sim_opts.iterations, "Training iterations")
      ->capture_default_str();
  ppo->add_option("--episodes-per-question", sim_opts.episodes_per_question,
                  "Rollout samples per question per iteration")
      ->capture_default_str();
  ppo->add_option("--eval-episodes", sim_opts.eval_episodes, "Held-out evaluation episodes")
      ->capture_default_str();
  ppo->add_option("--epsilon", sim_opts.epsilon, "PPO clip range")->capture_default_str();
  ppo->add_option("--epochs", sim_opts.epochs, "Update epochs per batch")->capture_default_str();
  ppo->add_option("--lr", sim_opts.lr, "Logit learning rate")->capture_default_str();
  ppo->add_option("--discount", sim_opts.discount, "Reward discount")->capture_default_str();
  ppo->add_option("--lambda", sim_opts.lambda, "GAE lambda")->capture_default_str();
  ppo->add_option("--temperature", sim_opts.temperature, "Policy softmax temperature")
      ->capture_default_str();
  ppo->add_option("--seed", sim_opts.seed, "Environment and training seed")
      ->capture_default_str();
  ppo->add_option("--alpha", sim_opts.alpha, "Knowledge accuracy weight")->capture_default_str();
  ppo->add_option("--beta", sim_opts.beta, "Expected calibration weight")->capture_default_str();
  ppo->add_option("--gamma", sim_opts.gamma, "Self calibration weight")->capture_default_str();

  try {
    app.parse(argc, argv);

    if (show_config) {
      std::cout << config_to_json(common, sim_opts).dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }

    if (fit->parsed()) return run_fit_norm(common, traces_path, out_path);
    if (estimate->parsed()) return run_estimate(common, traces_path, norm_path, out_path);
    if (build->parsed()) {
      return run_build_sft(common, traces_path, norm_path, out_path, annotated_out, print_stats);
    }
    if (reward->parsed()) {
      return run_reward(common, traces_path, refs_path, annotated_path, norm_path, out_path);
    }
    if (eval_cmd->parsed()) return run_eval(common, annotated_path, refs_path, out_path);
    if (ppo->parsed()) {
      if (!sim_config_path.empty()) {
        require_readable(sim_config_path, "config file");
        apply_sim_config(sim_config_path, ppo, sim_opts);
      }
      return run_ppo_sim(sim_opts, out_path);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    emit_json_error("validation", e.what());
    if (dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr) {
      std::cerr << app.help();  // unknown subcommand: include usage
    }
    return 1;
  } catch (const ValidationError& e) {
    emit_json_error("validation", e.what());
    return 1;
  } catch (const IoError& e) {
    emit_json_error("io", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_json_error("internal", e.what());
    return 1;
  }
}
