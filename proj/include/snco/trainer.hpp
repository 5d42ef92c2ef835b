#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snco/instgen.hpp"
#include "snco/losses.hpp"

namespace snco {

struct TrainConfig {
  Task task = Task::kTsp;
  std::size_t n = 10;
  std::size_t batch = 32;
  std::size_t steps = 200;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  SymConfig sym;
  std::size_t d = 16;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t dff = 32;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string out_dir;               // empty: nothing written
  BaselineMode baseline_mode = BaselineMode::kShared;

  void validate() const;
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

// Adam moments per parameter plus the update count.
struct OptState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam with decoupled weight decay. Parameters missing from
// `grads` decay their moments as if the gradient were zero.
void adam_update(ParamSet& params, const GradMap& grads, OptState& opt,
                 double lr, double beta1, double beta2, double eps,
                 double weight_decay);

// Policy checkpoint container with the optimizer state appended under the
// same manifest; load_params() on such a file skips the optimizer section.
void save_train_checkpoint(const ParamSet& params, const OptState& opt,
                           const std::string& path);
std::pair<ParamSet, OptState> load_train_checkpoint(const std::string& path);

struct StepMetrics {
  std::size_t step = 0;
  double mean_cost = 0.0;
  double best_cost = 0.0;
  double loss_inv = 0.0;
  double baseline = 0.0;
  double seconds = 0.0;
};

std::string metrics_csv(const std::vector<StepMetrics>& rows);

struct TrainResult {
  ParamSet params;
  OptState opt;
  std::vector<StepMetrics> metrics;
  bool aborted = false;
  std::size_t completed_steps = 0;
};

// Online-generation REINFORCE loop: each step draws a fresh batch, averages
// total_loss_step gradients over it, applies one Adam update. Deterministic
// for a given config; per-step streams derive from (seed, step, item) alone,
// so resuming from a checkpoint replays the uninterrupted run bit for bit.
// A non-finite batch aborts the run and keeps the last finite parameters.
TrainResult train(const TrainConfig& cfg,
                  const std::string& resume_checkpoint = {});

// Held-out instances drawn from a stream disjoint from every training tag.
Dataset eval_set(const TrainConfig& cfg, std::size_t count = 256);

}  // namespace snco
