#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vtagent/grpo.hpp"

namespace oracle {

// Minimum cost over every edit script turning a[i..] into b[j..], by plain
// recursion over match/substitute, delete and insert without a table.
inline std::size_t script_cost(const std::u32string& a, std::size_t i, const std::u32string& b,
                               std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t keep_or_sub = (a[i] != b[j]) + script_cost(a, i + 1, b, j + 1);
  const std::size_t del = 1 + script_cost(a, i + 1, b, j);
  const std::size_t ins = 1 + script_cost(a, i, b, j + 1);
  return std::min({keep_or_sub, del, ins});
}

inline std::size_t edit_distance(const std::u32string& a, const std::u32string& b) {
  return script_cost(a, 0, b, 0);
}

// ANLS for a single gold on already-normalized code points.
inline double anls_single(const std::u32string& pred, const std::u32string& gold, double tau) {
  const std::size_t longest = std::max(pred.size(), gold.size());
  if (longest == 0) return 1.0;
  const double s = 1.0 - static_cast<double>(edit_distance(pred, gold)) / static_cast<double>(longest);
  return s >= tau ? s : 0.0;
}

// Flat layout [w_sel (D) | b_none | W (V x D)], written out from the model
// definition: log pi = log softmax_sel(choice) + log softmax_ans(answer).
inline std::vector<double> grad_log_prob(const std::vector<double>& theta,
                                         const vtagent::grpo::ToyEnv& env,
                                         const vtagent::grpo::ToyTrajectory& t) {
  const int D = env.feature_dim(), V = env.vocab, N = env.n_frames;
  std::vector<double> g(theta.size(), 0.0);
  auto phi = [&](int j, int k) { return env.features[static_cast<std::size_t>(j * D + k)]; };

  std::vector<double> s(static_cast<std::size_t>(N + 1));
  for (int j = 0; j < N; ++j) {
    double v = 0;
    for (int k = 0; k < D; ++k) v += theta[static_cast<std::size_t>(k)] * phi(j, k);
    s[static_cast<std::size_t>(j)] = v;
  }
  s[static_cast<std::size_t>(N)] = theta[static_cast<std::size_t>(D)];
  double mx = *std::max_element(s.begin(), s.end()), z = 0;
  for (double v : s) z += std::exp(v - mx);
  const int c = t.choice < 0 ? N : t.choice;
  for (int j = 0; j <= N; ++j) {
    const double p = std::exp(s[static_cast<std::size_t>(j)] - mx) / z;
    const double coef = (j == c ? 1.0 : 0.0) - p;
    if (j == N) g[static_cast<std::size_t>(D)] += coef;
    else
      for (int k = 0; k < D; ++k) g[static_cast<std::size_t>(k)] += coef * phi(j, k);
  }

  std::vector<double> x(static_cast<std::size_t>(D), 0.0);
  if (t.choice >= 0) {
    for (int k = 0; k < D; ++k) x[static_cast<std::size_t>(k)] = phi(t.choice, k);
  } else {
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < D; ++k) x[static_cast<std::size_t>(k)] += phi(j, k) / N;
  }
  std::vector<double> u(static_cast<std::size_t>(V));
  for (int a = 0; a < V; ++a) {
    double v = 0;
    for (int k = 0; k < D; ++k) v += theta[static_cast<std::size_t>(D + 1 + a * D + k)] * x[static_cast<std::size_t>(k)];
    u[static_cast<std::size_t>(a)] = v;
  }
  mx = *std::max_element(u.begin(), u.end());
  z = 0;
  for (double v : u) z += std::exp(v - mx);
  for (int a = 0; a < V; ++a) {
    const double q = std::exp(u[static_cast<std::size_t>(a)] - mx) / z;
    const double coef = (a == t.answer ? 1.0 : 0.0) - q;
    for (int k = 0; k < D; ++k) g[static_cast<std::size_t>(D + 1 + a * D + k)] += coef * x[static_cast<std::size_t>(k)];
  }
  return g;
}

inline double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Central finite differences of the batch objective.
inline std::vector<double> fd_gradient(const vtagent::grpo::ToyPolicy& at,
                                       const std::vector<vtagent::grpo::TrajectoryGroup>& groups,
                                       double eps, double h) {
  vtagent::grpo::ToyPolicy p = at;
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double keep = p.theta[k];
    p.theta[k] = keep + h;
    const double up = vtagent::grpo::batch_objective(p, groups, eps);
    p.theta[k] = keep - h;
    const double down = vtagent::grpo::batch_objective(p, groups, eps);
    p.theta[k] = keep;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

struct FdPoint {
  double rel_error = 0;
  bool interior = false;
};

// One random point: groups sampled at theta_old, gradient taken at a nearby
// theta. Points with a ratio within `margin` of a clip edge are not interior.
inline FdPoint fd_check_point(std::mt19937_64& rng, double eps = 0.2, double h = 1e-5,
                              double margin = 1e-3) {
  using namespace vtagent::grpo;
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto suite = make_env_suite(rng(), 4, 6, 4, 1.5);
  ToyPolicy old_policy(4, suite[0].feature_dim());
  for (auto& v : old_policy.theta) v = 0.5 * normal(rng);
  std::vector<TrajectoryGroup> groups;
  for (const auto& env : suite) groups.push_back(rollout_group(old_policy, env, 4, rng, true, 1e-8));

  ToyPolicy policy = old_policy;
  for (auto& v : policy.theta) v += 0.08 * normal(rng);

  FdPoint out;
  out.interior = true;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.trajs.size(); ++i) {
      const double rho = std::exp(policy.log_prob(*g.env, g.trajs[i]) - g.trajs[i].old_logp);
      if (std::abs(rho - (1 + eps)) < margin || std::abs(rho - (1 - eps)) < margin) out.interior = false;
    }
  const auto analytic = batch_objective_grad(policy, groups, eps, nullptr, false);
  const auto numeric = fd_gradient(policy, groups, eps, h);
  std::vector<double> diff(analytic.size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
  const double scale = std::max(norm(analytic), norm(numeric));
  out.rel_error = scale < 1e-12 ? norm(diff) : norm(diff) / scale;
  return out;
}

}  // namespace oracle
