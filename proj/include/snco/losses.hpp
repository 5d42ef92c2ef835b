#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "snco/policy.hpp"
#include "snco/symmetry.hpp"

namespace snco {

// Weights and sample counts of the symmetric REINFORCE objective.
struct SymConfig {
  double alpha = 0.1;
  double beta = 0.0;
  std::size_t K = 1;
  std::size_t L = 10;

  void validate() const;
};

SymConfig am_preset();             // alpha .1, beta 0, K 1, L 10
SymConfig pomo_preset(Task task);  // beta 1, K 100, L 2; alpha .2 on CVRP

// Mean-centered advantages, computed on deltas against rewards[0] so that a
// constant shift of every reward cancels before any rounding.
std::vector<double> advantages_of(const std::vector<double>& rewards);

// acc += c * g, creating entries missing from acc.
void grad_axpy(GradMap& acc, const GradMap& g, double c);

struct GradEstimate {
  GradMap grads;
  double baseline = 0.0;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double advantage_sum = 0.0;
  std::vector<std::vector<int>> sequences;
  std::vector<Orthogonal2> transforms;  // the sampled views, when any

  double mean_reward() const;
  double best_reward() const;
};

struct InvResult {
  double value = 0.0;
  GradMap grads;
};

using OrthogonalSampler = std::function<Orthogonal2(Rng&)>;

// -S_cos(g(h(P)), g(h(Q(P)))); both encodings and projections live on one
// tape so the gradient flows through every shared parameter.
InvResult loss_inv(const ParamSet& params, const Instance& inst,
                   const Orthogonal2& q);

// REINFORCE over K sampled rollouts of one instance with the group-mean
// baseline. Optional distinct forced first nodes, one per rollout.
GradEstimate grad_ss(const ParamSet& params, const Instance& inst,
                     std::size_t K, Rng& rng,
                     const std::vector<int>* first_nodes = nullptr);

// K rollouts on each of L orthogonal views of the instance, one shared
// baseline across all L*K. Rewards are computed on the view each rollout ran
// on and cross-checked against the original within 1e-9. Rollout k of view l
// draws from the child stream tagged l*K + k, so grad_ps with an identity
// sampler and L=1 replays grad_ss exactly.
GradEstimate grad_ps(const ParamSet& params, const Instance& inst,
                     std::size_t L, std::size_t K, Rng& rng,
                     const OrthogonalSampler& sampler = {});

enum class BaselineMode { kShared, kNone };

struct StepResult {
  GradMap grads;
  double loss_inv_value = 0.0;
  double mean_reward = 0.0;
  double best_reward = 0.0;
  double baseline = 0.0;
  double advantage_sum = 0.0;
};

// grads = grad_ps + beta * grad_ss + alpha * grad(L_inv); L_inv reuses the
// first transform grad_ps sampled. kNone drops the baselines (plain
// REINFORCE), the trainer's comparison arm.
StepResult total_loss_step(const ParamSet& params, const Instance& inst,
                           const SymConfig& cfg, Rng& rng,
                           BaselineMode baseline_mode = BaselineMode::kShared);

}  // namespace snco
