#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vtagent::grpo {

// Miniature locate-and-focus task. Every frame carries a scene-text symbol;
// only the gold frame is flagged by the marker feature and shows the answer.
// Feature layout per frame: [marker, one_hot(symbol, vocab), 1].
struct ToyEnv {
  int n_frames = 8;
  int vocab = 4;
  int gold_frame = 0;
  int gold_answer = 0;
  std::vector<int> frame_symbols;
  std::vector<double> features;  // n_frames x feature_dim, row-major

  int feature_dim() const { return vocab + 2; }
  std::span<const double> frame(int j) const {
    return {features.data() + static_cast<std::size_t>(j) * feature_dim(),
            static_cast<std::size_t>(feature_dim())};
  }
};

ToyEnv make_env(std::mt19937_64& rng, int n_frames, int vocab, double feature_scale = 1.0);
std::vector<ToyEnv> make_env_suite(std::uint64_t seed, int count, int n_frames, int vocab,
                                   double feature_scale = 1.0);

inline constexpr int kNoSelect = -1;

struct ToyTrajectory {
  int choice = kNoSelect;  // selected frame, or kNoSelect when the tool is skipped
  int answer = 0;
  double old_logp = 0.0;

  bool used_tool() const { return choice != kNoSelect; }
};

// Flat parameter vector:
//   [select weights (D) | no-select logit (1) | answer matrix (vocab x D)]
// Frame j scores w_sel . phi_j; the no-select option scores its own logit.
// The answer head reads the selected frame's features, or the mean frame
// when no frame is selected.
class ToyPolicy {
 public:
  ToyPolicy(int vocab, int feature_dim);

  static ToyPolicy uniform(int vocab, int feature_dim) { return ToyPolicy(vocab, feature_dim); }

  int vocab() const { return vocab_; }
  int feature_dim() const { return dim_; }
  std::size_t size() const { return theta.size(); }

  // Probabilities over n_frames selections followed by no-select.
  std::vector<double> select_probs(const ToyEnv& env) const;
  std::vector<double> answer_probs(const ToyEnv& env, int choice) const;

  double log_prob(const ToyEnv& env, const ToyTrajectory& traj) const;
  // grad += scale * d log pi(traj) / d theta
  void add_grad_log_prob(const ToyEnv& env, const ToyTrajectory& traj, double scale,
                         std::span<double> grad) const;

  ToyTrajectory sample(const ToyEnv& env, std::mt19937_64& rng) const;

  std::vector<double> theta;

 private:
  std::vector<double> answer_input(const ToyEnv& env, int choice) const;
  int vocab_;
  int dim_;
};

// ---- reward and objective ------------------------------------------------------

inline constexpr double kToolReward = 0.5;

// R = R_acc + R_tool with R_acc in {0,1} and R_tool in {0, 0.5}.
double compute_reward(bool answer_correct, bool tool_used, bool tool_reward_enabled = true);
double compute_reward(const ToyTrajectory& traj, const ToyEnv& env,
                      bool tool_reward_enabled = true);

// A_i = (R_i - mean R) / (population std R + delta).
std::vector<double> group_advantages(std::span<const double> rewards, double delta = 1e-8);

// (1/G) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i), rho_i = exp(new - old).
double grpo_objective(std::span<const double> new_logp, std::span<const double> old_logp,
                      std::span<const double> advantages, double eps);

// d objective / d new_logp_i; zero for trajectories the clip has cut off.
std::vector<double> grpo_objective_logp_grad(std::span<const double> new_logp,
                                             std::span<const double> old_logp,
                                             std::span<const double> advantages, double eps);

bool clipped_away(double ratio, double advantage, double eps);

// One group of rollouts for one environment with everything the update needs.
struct TrajectoryGroup {
  const ToyEnv* env = nullptr;
  std::vector<ToyTrajectory> trajs;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

TrajectoryGroup rollout_group(const ToyPolicy& policy, const ToyEnv& env, int group_size,
                              std::mt19937_64& rng, bool tool_reward, double delta);

// Batch objective: mean over groups of grpo_objective at the policy's theta.
double batch_objective(const ToyPolicy& policy, std::span<const TrajectoryGroup> groups,
                       double eps);
// Analytic gradient of batch_objective w.r.t. theta. Clip fraction is
// written to *clip_frac when non-null.
std::vector<double> batch_objective_grad(const ToyPolicy& policy,
                                         std::span<const TrajectoryGroup> groups, double eps,
                                         double* clip_frac = nullptr, bool parallel = true);

struct StepConfig {
  int group_size = 4;
  double eps = 0.2;
  double lr = 0.1;
  double delta = 1e-8;
  bool tool_reward = true;
  int inner_steps = 1;  // gradient steps per sampled batch
};

struct StepStats {
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
  double tool_rate = 0.0;
  double clip_frac = 0.0;
};

// Samples G trajectories per env under the current (old) policy, then takes
// inner_steps gradient-ascent steps on the clipped objective. Rollouts and
// per-group gradients run on OpenMP threads; reductions use a fixed order, so
// the result is bit-identical to grpo_step_serial.
StepStats grpo_step(ToyPolicy& policy, std::span<const ToyEnv* const> envs,
                    const StepConfig& config, std::uint64_t rollout_seed);
StepStats grpo_step_serial(ToyPolicy& policy, std::span<const ToyEnv* const> envs,
                           const StepConfig& config, std::uint64_t rollout_seed);

// Analytic E[R_acc] of the policy over the given environments.
double expected_accuracy(const ToyPolicy& policy, std::span<const ToyEnv> envs);

struct TrainConfig {
  int steps = 500;
  int n_frames = 8;
  int vocab = 4;
  int suite_size = 32;
  int envs_per_step = 8;
  double feature_scale = 2.0;
  std::uint64_t seed = 7;
  StepConfig step;
};

void validate(const TrainConfig& config);  // throws ConfigError

struct CurvePoint {
  int step = 0;
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
  double tool_rate = 0.0;
  double clip_frac = 0.0;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  double chance_accuracy = 0.0;  // analytic E[R_acc] at initialization
  double final_accuracy = 0.0;   // analytic E[R_acc] after training

  // Mean of the last `window` points.
  CurvePoint tail_mean(std::size_t window) const;
};

LearningCurve train(std::span<const ToyEnv> env_suite, const TrainConfig& config);
LearningCurve train(const TrainConfig& config);  // builds the suite from config.seed

// CSV with header step,mean_reward,tool_rate,clip_frac.
std::string curve_csv(const LearningCurve& curve);

// Stable per-stream seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace vtagent::grpo
