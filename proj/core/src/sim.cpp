#include "stepconf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stepconf/error.hpp"
#include "stepconf/metrics.hpp"
#include "stepconf/rewards.hpp"
#include "stepconf/uncertainty.hpp"

namespace stepconf::sim {

SynthEnv::SynthEnv(const SynthEnvConfig& config) {
  if (config.n_questions < 1 || config.facts_per_question < 1) {
    throw ValidationError("synthetic environment needs at least one question and one fact");
  }
  if (config.p_min < 0.0 || config.p_max > 1.0 || config.p_min > config.p_max) {
    throw ValidationError("fact probability range must satisfy 0 <= p_min <= p_max <= 1");
  }
  steps_ = config.facts_per_question;
  iv_noise_sigma_ = config.iv_noise_sigma;
  Rng rng(mix_seed(config.seed, 0x5e9f));
  questions_.resize(config.n_questions);
  for (Question& question : questions_) {
    question.fact_probs.resize(steps_);
    for (double& p : question.fact_probs) {
      p = rng.uniform_in(config.p_min, config.p_max);
    }
  }
}

SynthEnv::SynthEnv(std::vector<Question> questions, double iv_noise_sigma)
    : questions_(std::move(questions)), iv_noise_sigma_(iv_noise_sigma) {
  if (questions_.empty()) throw ValidationError("synthetic environment has no questions");
  steps_ = static_cast<int>(questions_.front().fact_probs.size());
  if (steps_ < 1) throw ValidationError("synthetic environment questions need >= 1 fact");
  for (const Question& question : questions_) {
    if (static_cast<int>(question.fact_probs.size()) != steps_) {
      throw ValidationError("all questions must have the same number of facts");
    }
    for (double p : question.fact_probs) {
      if (p < 0.0 || p > 1.0) throw ValidationError("fact probabilities must be in [0, 1]");
    }
  }
}

TabularPolicy TabularPolicy::zeros(int n_states, double temperature) {
  TabularPolicy policy;
  policy.n_states = n_states;
  policy.temperature = temperature;
  policy.logits.assign(static_cast<std::size_t>(n_states) * kNumActions, 0.0);
  return policy;
}

std::array<double, kNumActions> TabularPolicy::probs(int state) const {
  const double* row = logits.data() + static_cast<std::size_t>(state) * kNumActions;
  std::array<double, kNumActions> out{};
  double max_logit = row[0];
  for (int a = 1; a < kNumActions; ++a) max_logit = std::max(max_logit, row[a]);
  double z = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    out[a] = std::exp((row[a] - max_logit) / temperature);
    z += out[a];
  }
  for (int a = 0; a < kNumActions; ++a) out[a] /= z;
  return out;
}

double TabularPolicy::logprob(int state, int action) const {
  return std::log(probs(state)[action]);
}

int TabularPolicy::sample(int state, Rng& rng) const {
  const auto p = probs(state);
  double u = rng.uniform();
  for (int a = 0; a < kNumActions; ++a) {
    u -= p[a];
    if (u < 0.0) return a;
  }
  return kNumActions - 1;  // guard against accumulated rounding
}

int TabularPolicy::argmax(int state) const {
  const double* row = logits.data() + static_cast<std::size_t>(state) * kNumActions;
  return static_cast<int>(std::max_element(row, row + kNumActions) - row);
}

bool TabularPolicy::finite() const {
  for (double x : logits) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double EpisodeBatch::mean_combined() const {
  double sum = 0.0;
  for (const EpisodeStats& e : episodes) sum += e.combined;
  return sum / static_cast<double>(episodes.size());
}

double EpisodeBatch::mean_r_ka() const {
  double sum = 0.0;
  for (const EpisodeStats& e : episodes) sum += e.r_ka;
  return sum / static_cast<double>(episodes.size());
}

double EpisodeBatch::mean_r_ec() const {
  double sum = 0.0;
  for (const EpisodeStats& e : episodes) sum += e.r_ec;
  return sum / static_cast<double>(episodes.size());
}

double EpisodeBatch::mean_r_cs() const {
  double sum = 0.0;
  for (const EpisodeStats& e : episodes) sum += e.r_cs;
  return sum / static_cast<double>(episodes.size());
}

int quantize_confidence(double confidence) {
  const double c = std::clamp(confidence, 0.0, 1.0);
  // Level value grid 0, .25, .5, .75, 1; boundaries at the midpoints, with
  // exact midpoints going to the lower level.
  for (int level = 1; level <= 4; ++level) {
    const double boundary = (static_cast<double>(level - 1) / 4.0 + static_cast<double>(level) / 4.0) / 2.0;
    if (c <= boundary) return level;
  }
  return 5;
}

EpisodeBatch rollout(const SynthEnv& env, const TabularPolicy& policy, int n_episodes,
                     std::uint64_t seed, const RewardWeights& weights) {
  if (n_episodes < 1) throw ValidationError("rollout: n_episodes must be >= 1");
  const int steps = env.steps_per_episode();
  const double inv_steps = 1.0 / static_cast<double>(steps);

  EpisodeBatch batch;
  batch.steps.reserve(static_cast<std::size_t>(n_episodes) * steps);
  batch.episode_offsets.reserve(n_episodes + 1);

  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    const int q = e % env.n_questions();
    const Question& question = env.question(q);
    batch.episode_offsets.push_back(static_cast<int>(batch.steps.size()));

    double ka_sum = 0.0, ec_sum = 0.0, cs_sum = 0.0;
    for (int k = 0; k < steps; ++k) {
      StepSample sample;
      sample.state = env.state_id(q, k);
      sample.action = policy.sample(sample.state, rng);
      sample.logprob_old = policy.logprob(sample.state, sample.action);

      const Action action = decode_action(sample.action);
      sample.indicator = !action.wrong && rng.bernoulli(question.fact_probs[k]) ? 1 : 0;
      sample.ev = level_to_value(action.level);
      const double iv_raw = std::clamp(
          static_cast<double>(sample.indicator) + rng.normal(0.0, env.iv_noise_sigma()), 0.0, 1.0);
      sample.iv = level_to_value(quantize_confidence(iv_raw));

      const double ec = ec_term(sample.indicator, sample.ev);
      const double cs = cs_term(sample.iv, sample.ev);
      sample.reward =
          (weights.alpha * sample.indicator + weights.beta * ec + weights.gamma * cs) * inv_steps;

      ka_sum += sample.indicator;
      ec_sum += ec;
      cs_sum += cs;
      batch.steps.push_back(sample);
    }

    EpisodeStats stats;
    stats.r_ka = ka_sum * inv_steps;
    stats.r_ec = ec_sum * inv_steps;
    stats.r_cs = cs_sum * inv_steps;
    stats.combined = combine(stats.r_ka, stats.r_ec, stats.r_cs, weights.alpha, weights.beta,
                             weights.gamma);
    batch.episodes.push_back(stats);
  }
  batch.episode_offsets.push_back(static_cast<int>(batch.steps.size()));
  return batch;
}

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        double discount, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw ValidationError("gae: values must hold one bootstrap entry more than rewards");
  }
  std::vector<double> advantages(rewards.size(), 0.0);
  double running = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    const double delta = rewards[t] + discount * values[t + 1] - values[t];
    running = delta + discount * lambda * running;
    advantages[t] = running;
  }
  return advantages;
}

ValueTable ValueTable::zeros(int n_states) {
  ValueTable table;
  table.values.assign(n_states, 0.0);
  return table;
}

void ValueTable::fit(const EpisodeBatch& batch) {
  std::vector<double> sums(values.size(), 0.0);
  std::vector<int> counts(values.size(), 0);
  for (const StepSample& step : batch.steps) {
    sums[step.state] += step.reward_to_go;
    ++counts[step.state];
  }
  for (std::size_t s = 0; s < values.size(); ++s) {
    if (counts[s] > 0) values[s] = sums[s] / counts[s];
  }
}

void compute_advantages(EpisodeBatch& batch, const ValueTable& critic, double discount,
                        double lambda) {
  for (std::size_t e = 0; e + 1 < batch.episode_offsets.size(); ++e) {
    const int begin = batch.episode_offsets[e];
    const int end = batch.episode_offsets[e + 1];

    std::vector<double> rewards, values;
    for (int t = begin; t < end; ++t) {
      rewards.push_back(batch.steps[t].reward);
      values.push_back(critic.values[batch.steps[t].state]);
    }
    values.push_back(0.0);  // terminal bootstrap

    const std::vector<double> advantages = gae(rewards, values, discount, lambda);
    double rtg = 0.0;
    for (int t = end - 1; t >= begin; --t) {
      rtg = batch.steps[t].reward + discount * rtg;
      batch.steps[t].reward_to_go = rtg;
      batch.steps[t].advantage = advantages[t - begin];
    }
  }
}

namespace {

// Shared walk over the batch for the objective, gradient, and diagnostics.
template <typename Visit>
void for_each_sample(const TabularPolicy& policy, const EpisodeBatch& batch, double epsilon,
                     Visit&& visit) {
  for (const StepSample& step : batch.steps) {
    const auto probs = policy.probs(step.state);
    const double logprob_new = std::log(probs[step.action]);
    const double ratio = std::exp(logprob_new - step.logprob_old);
    const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    visit(step, probs, ratio, ratio * step.advantage, clipped_ratio * step.advantage);
  }
}

}  // namespace

double surrogate_objective(const TabularPolicy& policy, const EpisodeBatch& batch,
                           double epsilon) {
  double sum = 0.0;
  for_each_sample(policy, batch, epsilon,
                  [&](const StepSample&, const auto&, double, double unclipped, double clipped) {
                    sum += std::min(unclipped, clipped);
                  });
  return sum / static_cast<double>(batch.steps.size());
}

std::vector<double> surrogate_gradient(const TabularPolicy& policy, const EpisodeBatch& batch,
                                       double epsilon) {
  std::vector<double> grad(policy.logits.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.steps.size());
  const double inv_temp = 1.0 / policy.temperature;

  for_each_sample(
      policy, batch, epsilon,
      [&](const StepSample& step, const std::array<double, kNumActions>& probs, double ratio,
          double unclipped, double clipped) {
        // Inside the clip region the objective is constant in theta, so only
        // samples on the unclipped branch contribute gradient.
        if (unclipped > clipped) return;
        const double coeff = ratio * step.advantage * inv_n * inv_temp;
        double* row = grad.data() + static_cast<std::size_t>(step.state) * kNumActions;
        for (int a = 0; a < kNumActions; ++a) {
          row[a] += coeff * ((a == step.action ? 1.0 : 0.0) - probs[a]);
        }
      });
  return grad;
}

std::vector<BranchTerms> surrogate_terms(const TabularPolicy& policy, const EpisodeBatch& batch,
                                         double epsilon) {
  std::vector<BranchTerms> terms;
  terms.reserve(batch.steps.size());
  for_each_sample(policy, batch, epsilon,
                  [&](const StepSample&, const auto&, double ratio, double unclipped,
                      double clipped) {
                    terms.push_back(BranchTerms{ratio, unclipped, clipped,
                                                std::min(unclipped, clipped)});
                  });
  return terms;
}

UpdateReport ppo_update(TabularPolicy& policy, const EpisodeBatch& batch,
                        const PpoConfig& config) {
  if (config.epsilon <= 0.0 || config.epsilon >= 1.0) {
    throw ValidationError("ppo epsilon must be in (0, 1)");
  }
  if (batch.steps.empty()) throw ValidationError("ppo_update: empty batch");

  UpdateReport report;
  report.no_op = std::all_of(batch.steps.begin(), batch.steps.end(),
                             [](const StepSample& s) { return s.advantage == 0.0; });
  if (report.no_op) return report;

  EpisodeBatch working = batch;
  double mean = 0.0;
  for (const StepSample& step : working.steps) mean += step.advantage;
  mean /= static_cast<double>(working.steps.size());
  double var = 0.0;
  for (const StepSample& step : working.steps) {
    var += (step.advantage - mean) * (step.advantage - mean);
  }
  const double stddev = std::sqrt(var / static_cast<double>(working.steps.size()));
  if (stddev > 1e-12) {
    for (StepSample& step : working.steps) {
      step.advantage = (step.advantage - mean) / stddev;
    }
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> grad = surrogate_gradient(policy, working, config.epsilon);
    for (std::size_t i = 0; i < policy.logits.size(); ++i) {
      policy.logits[i] += config.lr * grad[i];
    }
    report.surrogate.push_back(surrogate_objective(policy, working, config.epsilon));
  }
  return report;
}

double eval_mece(const SynthEnv& env, const TabularPolicy& policy, int n_episodes,
                 std::uint64_t seed) {
  const EpisodeBatch batch = rollout(env, policy, n_episodes, seed);
  std::vector<std::vector<ConfidencePair>> responses;
  responses.reserve(batch.episodes.size());
  for (std::size_t e = 0; e + 1 < batch.episode_offsets.size(); ++e) {
    std::vector<ConfidencePair> steps;
    for (int t = batch.episode_offsets[e]; t < batch.episode_offsets[e + 1]; ++t) {
      steps.push_back(ConfidencePair{batch.steps[t].ev, batch.steps[t].indicator});
    }
    responses.push_back(std::move(steps));
  }
  return mece(responses);
}

TrainResult train(const SynthEnv& env, const TrainConfig& config) {
  if (config.iterations < 0) throw ValidationError("train: iterations must be >= 0");
  if (config.episodes_per_question < 1) {
    throw ValidationError("train: episodes_per_question must be >= 1");
  }

  TrainResult result;
  result.policy = TabularPolicy::zeros(env.n_states(), config.temperature);
  ValueTable critic = ValueTable::zeros(env.n_states());
  const int episodes_per_iter = env.n_questions() * config.episodes_per_question;

  for (int it = 0; it <= config.iterations; ++it) {
    EpisodeBatch batch = rollout(env, result.policy, episodes_per_iter,
                                 mix_seed(config.seed, 0x726f6c6cULL + it), config.rewards);

    CurveRow row;
    row.iteration = it;
    row.mean_reward = batch.mean_combined();
    row.r_ka = batch.mean_r_ka();
    row.r_ec = batch.mean_r_ec();
    row.r_cs = batch.mean_r_cs();
    row.eval_mece = eval_mece(env, result.policy, config.eval_episodes,
                              mix_seed(config.seed, 0x6576616cULL + it));
    result.curve.push_back(row);

    if (it == config.iterations) break;

    compute_advantages(batch, critic, config.discount, config.lambda);
    critic.fit(batch);
    ppo_update(result.policy, batch, config.ppo);

    if (!result.policy.finite()) {
      std::ostringstream msg;
      msg << "policy diverged at iteration " << it << ": non-finite logits";
      throw std::runtime_error(msg.str());
    }
  }
  return result;
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open curve file for writing: " + path);
  out << "iteration,mean_reward,r_ka,r_ec,r_cs,eval_mece\n";
  out.precision(17);
  for (const CurveRow& row : curve) {
    out << row.iteration << ',' << row.mean_reward << ',' << row.r_ka << ',' << row.r_ec << ','
        << row.r_cs << ',' << row.eval_mece << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace stepconf::sim
