#include "vtagent/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "vtagent/error.hpp"

namespace vtagent::grpo {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::vector<double> softmax(std::vector<double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : logits) v /= z;
  return logits;
}

double log_softmax_at(const std::vector<double>& logits, std::size_t k) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return logits[k] - m - std::log(z);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- environment ---------------------------------------------------------------

ToyEnv make_env(std::mt19937_64& rng, int n_frames, int vocab, double feature_scale) {
  ToyEnv env;
  env.n_frames = n_frames;
  env.vocab = vocab;
  env.gold_frame = static_cast<int>(rng() % static_cast<std::uint64_t>(n_frames));
  env.gold_answer = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
  env.frame_symbols.resize(static_cast<std::size_t>(n_frames));
  const int dim = env.feature_dim();
  env.features.assign(static_cast<std::size_t>(n_frames * dim), 0.0);
  for (int j = 0; j < n_frames; ++j) {
    const bool gold = j == env.gold_frame;
    const int symbol = gold ? env.gold_answer
                            : static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
    env.frame_symbols[static_cast<std::size_t>(j)] = symbol;
    double* row = env.features.data() + static_cast<std::size_t>(j * dim);
    row[0] = gold ? feature_scale : 0.0;
    row[1 + symbol] = feature_scale;
    row[dim - 1] = 1.0;
  }
  return env;
}

std::vector<ToyEnv> make_env_suite(std::uint64_t seed, int count, int n_frames, int vocab,
                                   double feature_scale) {
  std::mt19937_64 rng(seed);
  std::vector<ToyEnv> suite;
  suite.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) suite.push_back(make_env(rng, n_frames, vocab, feature_scale));
  return suite;
}

// ---- policy ----------------------------------------------------------------------

ToyPolicy::ToyPolicy(int vocab, int feature_dim)
    : theta(static_cast<std::size_t>(feature_dim + 1 + vocab * feature_dim), 0.0),
      vocab_(vocab),
      dim_(feature_dim) {}

std::vector<double> ToyPolicy::select_probs(const ToyEnv& env) const {
  std::vector<double> logits(static_cast<std::size_t>(env.n_frames + 1));
  const std::span<const double> w(theta.data(), static_cast<std::size_t>(dim_));
  for (int j = 0; j < env.n_frames; ++j) logits[static_cast<std::size_t>(j)] = dot(w, env.frame(j));
  logits.back() = theta[static_cast<std::size_t>(dim_)];
  return softmax(std::move(logits));
}

std::vector<double> ToyPolicy::answer_input(const ToyEnv& env, int choice) const {
  if (choice != kNoSelect) {
    auto f = env.frame(choice);
    return {f.begin(), f.end()};
  }
  std::vector<double> mean(static_cast<std::size_t>(dim_), 0.0);
  for (int j = 0; j < env.n_frames; ++j) {
    auto f = env.frame(j);
    for (int k = 0; k < dim_; ++k) mean[static_cast<std::size_t>(k)] += f[static_cast<std::size_t>(k)];
  }
  for (auto& v : mean) v /= env.n_frames;
  return mean;
}

namespace {
std::vector<double> answer_logits(const std::vector<double>& theta, int vocab, int dim,
                                  const std::vector<double>& x) {
  std::vector<double> logits(static_cast<std::size_t>(vocab));
  const double* W = theta.data() + dim + 1;
  for (int a = 0; a < vocab; ++a)
    logits[static_cast<std::size_t>(a)] =
        dot({W + static_cast<std::size_t>(a * dim), static_cast<std::size_t>(dim)}, x);
  return logits;
}
}  // namespace

std::vector<double> ToyPolicy::answer_probs(const ToyEnv& env, int choice) const {
  return softmax(answer_logits(theta, vocab_, dim_, answer_input(env, choice)));
}

double ToyPolicy::log_prob(const ToyEnv& env, const ToyTrajectory& traj) const {
  std::vector<double> sel(static_cast<std::size_t>(env.n_frames + 1));
  const std::span<const double> w(theta.data(), static_cast<std::size_t>(dim_));
  for (int j = 0; j < env.n_frames; ++j) sel[static_cast<std::size_t>(j)] = dot(w, env.frame(j));
  sel.back() = theta[static_cast<std::size_t>(dim_)];
  const std::size_t sel_idx =
      traj.choice == kNoSelect ? sel.size() - 1 : static_cast<std::size_t>(traj.choice);
  const auto ans = answer_logits(theta, vocab_, dim_, answer_input(env, traj.choice));
  return log_softmax_at(sel, sel_idx) + log_softmax_at(ans, static_cast<std::size_t>(traj.answer));
}

void ToyPolicy::add_grad_log_prob(const ToyEnv& env, const ToyTrajectory& traj, double scale,
                                  std::span<double> grad) const {
  const auto p = select_probs(env);
  for (int j = 0; j < env.n_frames; ++j) {
    const double coef = scale * ((j == traj.choice ? 1.0 : 0.0) - p[static_cast<std::size_t>(j)]);
    auto f = env.frame(j);
    for (int k = 0; k < dim_; ++k) grad[static_cast<std::size_t>(k)] += coef * f[static_cast<std::size_t>(k)];
  }
  grad[static_cast<std::size_t>(dim_)] +=
      scale * ((traj.choice == kNoSelect ? 1.0 : 0.0) - p.back());

  const auto x = answer_input(env, traj.choice);
  const auto q = softmax(answer_logits(theta, vocab_, dim_, x));
  double* gW = grad.data() + dim_ + 1;
  for (int a = 0; a < vocab_; ++a) {
    const double coef = scale * ((a == traj.answer ? 1.0 : 0.0) - q[static_cast<std::size_t>(a)]);
    for (int k = 0; k < dim_; ++k) gW[a * dim_ + k] += coef * x[static_cast<std::size_t>(k)];
  }
}

ToyTrajectory ToyPolicy::sample(const ToyEnv& env, std::mt19937_64& rng) const {
  ToyTrajectory t;
  const auto p = select_probs(env);
  const int pick = sample_categorical(p, rng);
  t.choice = pick == env.n_frames ? kNoSelect : pick;
  t.answer = sample_categorical(answer_probs(env, t.choice), rng);
  t.old_logp = log_prob(env, t);
  return t;
}

// ---- reward, advantage, objective --------------------------------------------------

double compute_reward(bool answer_correct, bool tool_used, bool tool_reward_enabled) {
  const double r_acc = answer_correct ? 1.0 : 0.0;
  const double r_tool = tool_reward_enabled && tool_used ? kToolReward : 0.0;
  return r_acc + r_tool;
}

double compute_reward(const ToyTrajectory& traj, const ToyEnv& env, bool tool_reward_enabled) {
  return compute_reward(traj.answer == env.gold_answer, traj.used_tool(), tool_reward_enabled);
}

std::vector<double> group_advantages(std::span<const double> rewards, double delta) {
  if (rewards.size() < 2) throw ConfigError("group size must be >= 2");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back((r - mean) / (sd + delta));
  return adv;
}

bool clipped_away(double ratio, double advantage, double eps) {
  return (advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
}

namespace {
void check_lengths(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  if (a.size() != b.size() || a.size() != c.size() || a.empty())
    throw ConfigError("objective inputs must have equal non-zero length");
}
double ratio_of(double new_logp, double old_logp) {
  const double rho = std::exp(new_logp - old_logp);
  if (!std::isfinite(rho)) throw NonFinite("importance ratio is not finite");
  return rho;
}
}  // namespace

double grpo_objective(std::span<const double> new_logp, std::span<const double> old_logp,
                      std::span<const double> advantages, double eps) {
  check_lengths(new_logp, old_logp, advantages);
  double total = 0.0;
  for (std::size_t i = 0; i < new_logp.size(); ++i) {
    const double rho = ratio_of(new_logp[i], old_logp[i]);
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);
    total += std::min(rho * advantages[i], clipped * advantages[i]);
  }
  return total / static_cast<double>(new_logp.size());
}

std::vector<double> grpo_objective_logp_grad(std::span<const double> new_logp,
                                             std::span<const double> old_logp,
                                             std::span<const double> advantages, double eps) {
  check_lengths(new_logp, old_logp, advantages);
  const double g = static_cast<double>(new_logp.size());
  std::vector<double> out(new_logp.size(), 0.0);
  for (std::size_t i = 0; i < new_logp.size(); ++i) {
    const double rho = ratio_of(new_logp[i], old_logp[i]);
    if (!clipped_away(rho, advantages[i], eps)) out[i] = advantages[i] * rho / g;
  }
  return out;
}

TrajectoryGroup rollout_group(const ToyPolicy& policy, const ToyEnv& env, int group_size,
                              std::mt19937_64& rng, bool tool_reward, double delta) {
  TrajectoryGroup group;
  group.env = &env;
  for (int i = 0; i < group_size; ++i) {
    group.trajs.push_back(policy.sample(env, rng));
    group.rewards.push_back(compute_reward(group.trajs.back(), env, tool_reward));
  }
  group.advantages = group_advantages(group.rewards, delta);
  return group;
}

namespace {

std::vector<double> new_logps(const ToyPolicy& policy, const TrajectoryGroup& g) {
  std::vector<double> out;
  out.reserve(g.trajs.size());
  for (const auto& t : g.trajs) out.push_back(policy.log_prob(*g.env, t));
  return out;
}

std::vector<double> old_logps(const TrajectoryGroup& g) {
  std::vector<double> out;
  out.reserve(g.trajs.size());
  for (const auto& t : g.trajs) out.push_back(t.old_logp);
  return out;
}

}  // namespace

double batch_objective(const ToyPolicy& policy, std::span<const TrajectoryGroup> groups,
                       double eps) {
  double total = 0.0;
  for (const auto& g : groups)
    total += grpo_objective(new_logps(policy, g), old_logps(g), g.advantages, eps);
  return total / static_cast<double>(groups.size());
}

std::vector<double> batch_objective_grad(const ToyPolicy& policy,
                                         std::span<const TrajectoryGroup> groups, double eps,
                                         double* clip_frac, bool parallel) {
  const std::size_t n = groups.size();
  std::vector<std::vector<double>> partial(n, std::vector<double>(policy.size(), 0.0));
  std::vector<int> clipped(n, 0);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t b = 0; b < count; ++b) {
    const auto idx = static_cast<std::size_t>(b);
    try {
      const auto& g = groups[idx];
      const auto nl = new_logps(policy, g);
      const auto ol = old_logps(g);
      const auto coef = grpo_objective_logp_grad(nl, ol, g.advantages, eps);
      for (std::size_t i = 0; i < g.trajs.size(); ++i) {
        if (clipped_away(std::exp(nl[i] - ol[i]), g.advantages[i], eps)) ++clipped[idx];
        if (coef[i] != 0.0)
          policy.add_grad_log_prob(*g.env, g.trajs[i], coef[i] / static_cast<double>(n),
                                   partial[idx]);
      }
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> grad(policy.size(), 0.0);
  std::size_t total_trajs = 0, total_clipped = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += partial[b][k];
    total_trajs += groups[b].trajs.size();
    total_clipped += static_cast<std::size_t>(clipped[b]);
  }
  if (clip_frac)
    *clip_frac = total_trajs ? static_cast<double>(total_clipped) / static_cast<double>(total_trajs)
                             : 0.0;
  return grad;
}

namespace {

StepStats step_impl(ToyPolicy& policy, std::span<const ToyEnv* const> envs,
                    const StepConfig& config, std::uint64_t rollout_seed, bool parallel) {
  if (config.group_size < 2) throw ConfigError("group size must be >= 2");
  const std::size_t n = envs.size();
  std::vector<TrajectoryGroup> groups(n);
  const auto count = static_cast<std::ptrdiff_t>(n);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t b = 0; b < count; ++b) {
    const auto idx = static_cast<std::size_t>(b);
    std::mt19937_64 rng(mix_seed(rollout_seed, idx));
    groups[idx] = rollout_group(policy, *envs[idx], config.group_size, rng, config.tool_reward,
                                config.delta);
  }

  StepStats stats;
  std::size_t total = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.trajs.size(); ++i) {
      stats.mean_reward += g.rewards[i];
      stats.mean_accuracy += g.trajs[i].answer == g.env->gold_answer ? 1.0 : 0.0;
      stats.tool_rate += g.trajs[i].used_tool() ? 1.0 : 0.0;
      ++total;
    }
  }
  if (total) {
    stats.mean_reward /= static_cast<double>(total);
    stats.mean_accuracy /= static_cast<double>(total);
    stats.tool_rate /= static_cast<double>(total);
  }

  for (int k = 0; k < config.inner_steps; ++k) {
    const auto grad = batch_objective_grad(policy, groups, config.eps, &stats.clip_frac, parallel);
    for (std::size_t i = 0; i < grad.size(); ++i) policy.theta[i] += config.lr * grad[i];
  }
  return stats;
}

}  // namespace

StepStats grpo_step(ToyPolicy& policy, std::span<const ToyEnv* const> envs,
                    const StepConfig& config, std::uint64_t rollout_seed) {
  return step_impl(policy, envs, config, rollout_seed, true);
}

StepStats grpo_step_serial(ToyPolicy& policy, std::span<const ToyEnv* const> envs,
                           const StepConfig& config, std::uint64_t rollout_seed) {
  return step_impl(policy, envs, config, rollout_seed, false);
}

double expected_accuracy(const ToyPolicy& policy, std::span<const ToyEnv> envs) {
  double total = 0.0;
  for (const auto& env : envs) {
    const auto p = policy.select_probs(env);
    double acc = 0.0;
    for (int c = 0; c <= env.n_frames; ++c) {
      const int choice = c == env.n_frames ? kNoSelect : c;
      acc += p[static_cast<std::size_t>(c)] *
             policy.answer_probs(env, choice)[static_cast<std::size_t>(env.gold_answer)];
    }
    total += acc;
  }
  return envs.empty() ? 0.0 : total / static_cast<double>(envs.size());
}

// ---- training ------------------------------------------------------------------------

void validate(const TrainConfig& c) {
  if (c.step.group_size < 2) throw ConfigError("group size must be >= 2");
  if (!(c.step.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(c.step.lr > 0.0) || !std::isfinite(c.step.lr)) throw ConfigError("lr must be positive");
  if (!(c.step.delta > 0.0)) throw ConfigError("delta must be positive");
  if (c.step.inner_steps < 1) throw ConfigError("inner steps must be >= 1");
  if (c.steps < 1) throw ConfigError("steps must be >= 1");
  if (c.n_frames < 1 || c.vocab < 2) throw ConfigError("need >= 1 frame and >= 2 symbols");
  if (c.suite_size < 1 || c.envs_per_step < 1) throw ConfigError("empty environment batch");
}

CurvePoint LearningCurve::tail_mean(std::size_t window) const {
  CurvePoint out;
  if (points.empty()) return out;
  const std::size_t w = std::min(window, points.size());
  for (std::size_t i = points.size() - w; i < points.size(); ++i) {
    out.mean_reward += points[i].mean_reward;
    out.mean_accuracy += points[i].mean_accuracy;
    out.tool_rate += points[i].tool_rate;
    out.clip_frac += points[i].clip_frac;
  }
  const double d = static_cast<double>(w);
  out.mean_reward /= d;
  out.mean_accuracy /= d;
  out.tool_rate /= d;
  out.clip_frac /= d;
  out.step = points.back().step;
  return out;
}

LearningCurve train(std::span<const ToyEnv> env_suite, const TrainConfig& config) {
  validate(config);
  if (env_suite.empty()) throw ConfigError("empty environment suite");
  const int dim = env_suite.front().feature_dim();
  ToyPolicy policy = ToyPolicy::uniform(env_suite.front().vocab, dim);

  LearningCurve curve;
  curve.chance_accuracy = expected_accuracy(policy, env_suite);

  std::mt19937_64 master(mix_seed(config.seed, 2));
  std::vector<const ToyEnv*> batch(static_cast<std::size_t>(config.envs_per_step));
  for (int step = 1; step <= config.steps; ++step) {
    for (auto& e : batch) e = &env_suite[master() % env_suite.size()];
    const auto stats = grpo_step(policy, batch, config.step, master());
    curve.points.push_back(
        {step, stats.mean_reward, stats.mean_accuracy, stats.tool_rate, stats.clip_frac});
  }
  curve.final_accuracy = expected_accuracy(policy, env_suite);
  return curve;
}

LearningCurve train(const TrainConfig& config) {
  validate(config);
  const auto suite = make_env_suite(mix_seed(config.seed, 1), config.suite_size, config.n_frames,
                                    config.vocab, config.feature_scale);
  return train(suite, config);
}

std::string curve_csv(const LearningCurve& curve) {
  std::ostringstream os;
  os << "step,mean_reward,tool_rate,clip_frac\n";
  char buf[128];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", p.step, p.mean_reward, p.tool_rate,
                  p.clip_frac);
    os << buf;
  }
  return os.str();
}

}  // namespace vtagent::grpo
