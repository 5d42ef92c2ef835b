#include "snco/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "snco/comdp.hpp"

namespace snco {

void SymConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("SymConfig: alpha " + std::to_string(alpha) +
                                " outside [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("SymConfig: beta " + std::to_string(beta) +
                                " outside [0, 1]");
  if (K < 1) throw std::invalid_argument("SymConfig: K must be >= 1");
  if (L < 1) throw std::invalid_argument("SymConfig: L must be >= 1");
  if (beta > 0.0 && K < 2)
    throw std::invalid_argument(
        "SymConfig: beta > 0 needs K >= 2, a one-sample shared baseline "
        "zeroes every advantage");
}

SymConfig am_preset() { return SymConfig{0.1, 0.0, 1, 10}; }

SymConfig pomo_preset(Task task) {
  SymConfig cfg{0.1, 1.0, 100, 2};
  if (task == Task::kCvrp) cfg.alpha = 0.2;
  return cfg;
}

std::vector<double> advantages_of(const std::vector<double>& rewards) {
  if (rewards.empty()) return {};
  // Center deltas against rewards[0] so a constant shift of every reward
  // cancels before any rounding can depend on it.
  const double r0 = rewards[0];
  double mean_delta = 0.0;
  for (double r : rewards) mean_delta += r - r0;
  mean_delta /= static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    adv[i] = (rewards[i] - r0) - mean_delta;
  return adv;
}

double GradEstimate::mean_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return rewards.empty() ? 0.0 : s / static_cast<double>(rewards.size());
}

double GradEstimate::best_reward() const {
  return rewards.empty() ? 0.0
                         : *std::max_element(rewards.begin(), rewards.end());
}

InvResult loss_inv(const ParamSet& params, const Instance& inst,
                   const Orthogonal2& q) {
  const double defect = q.max_orthogonality_defect();
  if (defect > 1e-9)
    throw std::invalid_argument("loss_inv: transform is not orthogonal "
                                "(defect " + std::to_string(defect) + ")");
  Tape t;
  Encoding ea = encode(t, params, inst);
  Encoding eb = encode(t, params, transform(inst, q));
  Tape::Id ga = project(t, params, ea.graph_embedding);
  Tape::Id gb = project(t, params, eb.graph_embedding);
  Tape::Id loss = t.scale(t.cosine_similarity(ga, gb), -1.0);
  InvResult out;
  out.value = t.value(loss).data[0];
  out.grads = t.backward(loss);
  return out;
}

namespace {

constexpr std::uint64_t kRollTag = 0x726f6c6cull;  // rollout streams
constexpr std::uint64_t kQTag = 0x71726e64ull;     // transform streams
constexpr std::uint64_t kSsTag = 0x73736c6full;    // grad_ss root inside a step

// Surrogate -(1/n) sum_k A_k * ll_k with the advantages held constant;
// backward of this scalar IS the REINFORCE estimator.
GradEstimate finish_group(Tape& tape, const std::vector<RolloutResult>& rolls,
                          bool subtract_baseline) {
  GradEstimate est;
  est.rewards.reserve(rolls.size());
  est.sequences.reserve(rolls.size());
  for (const RolloutResult& r : rolls) {
    est.rewards.push_back(r.reward_value);
    est.sequences.push_back(r.sequence);
  }
  if (subtract_baseline) {
    est.advantages = advantages_of(est.rewards);
    est.baseline = est.mean_reward();
  } else {
    est.advantages = est.rewards;
    est.baseline = 0.0;
  }
  for (double a : est.advantages) est.advantage_sum += a;

  const double inv_n = 1.0 / static_cast<double>(rolls.size());
  Tape::Id surrogate = -1;
  for (std::size_t k = 0; k < rolls.size(); ++k) {
    Tape::Id term = tape.scale(rolls[k].ll, -est.advantages[k] * inv_n);
    surrogate = surrogate < 0 ? term : tape.add(surrogate, term);
  }
  est.grads = tape.backward(surrogate);
  return est;
}

GradEstimate ss_impl(const ParamSet& params, const Instance& inst,
                     std::size_t K, const Rng& rng,
                     const std::vector<int>* first_nodes,
                     bool subtract_baseline) {
  if (K < 1) throw std::invalid_argument("grad_ss: K must be >= 1");
  if (first_nodes != nullptr) {
    if (first_nodes->size() != K)
      throw std::invalid_argument(
          "grad_ss: " + std::to_string(first_nodes->size()) +
          " first nodes for K=" + std::to_string(K));
    std::set<int> uniq(first_nodes->begin(), first_nodes->end());
    if (uniq.size() != first_nodes->size())
      throw std::invalid_argument("grad_ss: first nodes must be distinct");
  }
  Tape tape;
  PolicyContext ctx = make_context(tape, params, inst);
  std::vector<RolloutResult> rolls;
  rolls.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng stream = rng.split(kRollTag + k);
    const int first = first_nodes != nullptr ? (*first_nodes)[k] : -1;
    rolls.push_back(rollout(ctx, DecodeMode::kSample, &stream, first));
  }
  return finish_group(tape, rolls, subtract_baseline);
}

GradEstimate ps_impl(const ParamSet& params, const Instance& inst,
                     std::size_t L, std::size_t K, const Rng& rng,
                     const OrthogonalSampler& sampler,
                     bool subtract_baseline) {
  if (L < 1) throw std::invalid_argument("grad_ps: L must be >= 1");
  if (K < 1) throw std::invalid_argument("grad_ps: K must be >= 1");
  if (subtract_baseline && L * K < 2)
    throw std::invalid_argument(
        "grad_ps: L*K must be >= 2, a one-sample shared baseline zeroes the "
        "advantage");
  Tape tape;
  std::vector<RolloutResult> rolls;
  std::vector<Orthogonal2> transforms;
  rolls.reserve(L * K);
  transforms.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    Rng qstream = rng.split(kQTag + l);
    const Orthogonal2 q =
        sampler ? sampler(qstream) : sample_orthogonal(qstream);
    transforms.push_back(q);
    const Instance view = transform(inst, q);
    PolicyContext ctx = make_context(tape, params, view);
    for (std::size_t k = 0; k < K; ++k) {
      Rng stream = rng.split(kRollTag + l * K + k);
      RolloutResult r = rollout(ctx, DecodeMode::kSample, &stream);
      const double on_original = reward(inst, r.sequence);
      if (std::abs(on_original - r.reward_value) > 1e-9)
        throw std::logic_error(
            "grad_ps: reward " + std::to_string(r.reward_value) +
            " on the transformed view differs from " +
            std::to_string(on_original) + " on the original instance");
      rolls.push_back(std::move(r));
    }
  }
  GradEstimate est = finish_group(tape, rolls, subtract_baseline);
  est.transforms = std::move(transforms);
  return est;
}

}  // namespace

void grad_axpy(GradMap& acc, const GradMap& g, double c) {
  if (c == 0.0) return;
  for (const auto& [name, t] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      Tensor scaled = t;
      for (double& v : scaled.data) v *= c;
      acc.emplace(name, std::move(scaled));
    } else {
      for (std::size_t i = 0; i < t.numel(); ++i)
        it->second.data[i] += c * t.data[i];
    }
  }
}

GradEstimate grad_ss(const ParamSet& params, const Instance& inst,
                     std::size_t K, Rng& rng,
                     const std::vector<int>* first_nodes) {
  return ss_impl(params, inst, K, rng, first_nodes, true);
}

GradEstimate grad_ps(const ParamSet& params, const Instance& inst,
                     std::size_t L, std::size_t K, Rng& rng,
                     const OrthogonalSampler& sampler) {
  return ps_impl(params, inst, L, K, rng, sampler, true);
}

StepResult total_loss_step(const ParamSet& params, const Instance& inst,
                           const SymConfig& cfg, Rng& rng,
                           BaselineMode baseline_mode) {
  cfg.validate();
  const bool shared = baseline_mode == BaselineMode::kShared;

  GradEstimate ps = ps_impl(params, inst, cfg.L, cfg.K, rng, {}, shared);
  StepResult out;
  out.grads = std::move(ps.grads);
  out.mean_reward = ps.mean_reward();
  out.best_reward = ps.best_reward();
  out.baseline = ps.baseline;
  out.advantage_sum = ps.advantage_sum;

  if (cfg.beta > 0.0) {
    Rng ss_rng = rng.split(kSsTag);
    GradEstimate ss = ss_impl(params, inst, cfg.K, ss_rng, nullptr, shared);
    grad_axpy(out.grads, ss.grads, cfg.beta);
  }
  if (cfg.alpha > 0.0) {
    InvResult inv = loss_inv(params, inst, ps.transforms.front());
    out.loss_inv_value = inv.value;
    grad_axpy(out.grads, inv.grads, cfg.alpha);
  }
  return out;
}

}  // namespace snco
