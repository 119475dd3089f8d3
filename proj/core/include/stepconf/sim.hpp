#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stepconf/rng.hpp"

namespace stepconf::sim {

// Synthetic reasoning-chain environment. Each question carries K reference
// facts; at step k a "correct" sentence actually matches the reference with
// probability p_k, a "wrong" sentence never does. The internal confidence
// signal is the indicator plus clamped Gaussian noise, quantized to a level.
struct Question {
  std::vector<double> fact_probs;  // p_k per step
};

struct SynthEnvConfig {
  int n_questions = 20;
  int facts_per_question = 4;  // K, the episode length
  double p_min = 0.85;
  double p_max = 0.995;
  double iv_noise_sigma = 0.15;
  std::uint64_t seed = 7;
};

class SynthEnv {
 public:
  explicit SynthEnv(const SynthEnvConfig& config);
  SynthEnv(std::vector<Question> questions, double iv_noise_sigma);

  int n_questions() const { return static_cast<int>(questions_.size()); }
  int steps_per_episode() const { return steps_; }
  int n_states() const { return n_questions() * steps_; }
  double iv_noise_sigma() const { return iv_noise_sigma_; }
  const Question& question(int q) const { return questions_[q]; }
  int state_id(int question, int step) const { return question * steps_ + step; }

 private:
  std::vector<Question> questions_;
  int steps_ = 0;
  double iv_noise_sigma_ = 0.15;
};

// Action space: {correct-sentence, wrong-sentence} x {level 1..5}.
inline constexpr int kNumActions = 10;

struct Action {
  bool wrong = false;
  int level = 5;
};

inline int encode_action(bool wrong, int level) { return (wrong ? 5 : 0) + level - 1; }
inline Action decode_action(int action) { return Action{action >= 5, action % 5 + 1}; }

// Softmax policy over a state x action logit table.
struct TabularPolicy {
  int n_states = 0;
  double temperature = 1.0;
  std::vector<double> logits;  // n_states * kNumActions

  static TabularPolicy zeros(int n_states, double temperature = 1.0);

  std::array<double, kNumActions> probs(int state) const;
  double logprob(int state, int action) const;
  int sample(int state, Rng& rng) const;
  int argmax(int state) const;
  bool finite() const;
};

struct StepSample {
  int state = 0;
  int action = 0;
  double logprob_old = 0.0;  // log pi at collection time
  double reward = 0.0;       // per-step share of the combined reward
  double reward_to_go = 0.0;
  double advantage = 0.0;
  int indicator = 0;
  double ev = 0.0;
  double iv = 0.0;
};

struct EpisodeStats {
  double combined = 0.0;
  double r_ka = 0.0;
  double r_ec = 0.0;
  double r_cs = 0.0;
};

struct EpisodeBatch {
  std::vector<StepSample> steps;
  std::vector<int> episode_offsets;  // per-episode start index, plus end sentinel
  std::vector<EpisodeStats> episodes;

  int n_episodes() const { return static_cast<int>(episodes.size()); }
  double mean_combined() const;
  double mean_r_ka() const;
  double mean_r_ec() const;
  double mean_r_cs() const;
};

struct RewardWeights {
  double alpha = 1.0 / 3.0;
  double beta = 1.0 / 3.0;
  double gamma = 1.0 / 3.0;
};

// Nearest level value to a confidence in [0, 1]; ties go to the lower level.
int quantize_confidence(double confidence);

// Runs n_episodes episodes, cycling questions round-robin; episode e uses the
// rng stream mix_seed(seed, e), so rollouts parallelize deterministically.
EpisodeBatch rollout(const SynthEnv& env, const TabularPolicy& policy, int n_episodes,
                     std::uint64_t seed, const RewardWeights& weights = {});

// Generalized advantage estimation; values has one bootstrap entry more than
// rewards.
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        double discount = 1.0, double lambda = 0.95);

// Tabular critic: per-state average of observed reward-to-go.
struct ValueTable {
  std::vector<double> values;

  static ValueTable zeros(int n_states);
  void fit(const EpisodeBatch& batch);
};

// Fills reward_to_go and advantage on every step of the batch.
void compute_advantages(EpisodeBatch& batch, const ValueTable& critic, double discount = 1.0,
                        double lambda = 0.95);

struct PpoConfig {
  double epsilon = 0.2;
  int epochs = 4;
  double lr = 6.0;
};

struct UpdateReport {
  bool no_op = false;                 // every advantage was zero
  std::vector<double> surrogate;      // mean clipped objective per epoch
};

// Gradient ascent on the clipped surrogate with analytic softmax gradients.
// Advantages are standardized per batch (zero mean, unit variance) before
// the ascent so the learning rate is batch-scale free; the clip stays exact.
UpdateReport ppo_update(TabularPolicy& policy, const EpisodeBatch& batch,
                        const PpoConfig& config);

// Diagnostics used by the update and exposed for tests: the mean clipped
// objective, its exact gradient, and the per-sample branch values.
double surrogate_objective(const TabularPolicy& policy, const EpisodeBatch& batch,
                           double epsilon);
std::vector<double> surrogate_gradient(const TabularPolicy& policy, const EpisodeBatch& batch,
                                       double epsilon);

struct BranchTerms {
  double ratio = 1.0;
  double unclipped = 0.0;  // ratio * advantage
  double clipped = 0.0;    // clip(ratio) * advantage
  double applied = 0.0;    // what the objective actually used
};

std::vector<BranchTerms> surrogate_terms(const TabularPolicy& policy, const EpisodeBatch& batch,
                                         double epsilon);

struct TrainConfig {
  RewardWeights rewards;
  PpoConfig ppo;
  double discount = 1.0;
  double lambda = 0.95;
  int iterations = 300;
  int episodes_per_question = 3;  // rollout samples per question per iteration
  int eval_episodes = 60;
  double temperature = 1.0;
  std::uint64_t seed = 7;
};

struct CurveRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double r_ka = 0.0;
  double r_ec = 0.0;
  double r_cs = 0.0;
  double eval_mece = 0.0;
};

struct TrainResult {
  std::vector<CurveRow> curve;  // row 0 is the untrained policy
  TabularPolicy policy;
};

// Iterates rollout -> advantages -> critic fit -> clipped update, recording
// one curve row per iteration (plus the final policy). Throws if the policy
// diverges to non-finite logits.
TrainResult train(const SynthEnv& env, const TrainConfig& config);

// MECE of sampled episodes under the given policy (held-out rng stream).
double eval_mece(const SynthEnv& env, const TabularPolicy& policy, int n_episodes,
                 std::uint64_t seed);

// CSV with header iteration,mean_reward,r_ka,r_ec,r_cs,eval_mece.
void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve);

}  // namespace stepconf::sim
