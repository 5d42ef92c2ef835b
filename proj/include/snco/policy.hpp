#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snco/comdp.hpp"
#include "snco/instance.hpp"
#include "snco/rng.hpp"
#include "snco/tensor.hpp"

namespace snco {

// Named parameter tensors of the attention policy plus the projection head.
struct ParamSet {
  Task task = Task::kTsp;
  std::size_t d = 16;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t dff = 32;
  double logit_clip = 10.0;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;
  std::size_t numel() const;
};

std::size_t feature_width(Task task);

// Node feature matrix fed to the input projection: coordinates first, then
// task features (CVRP demand; PCTSP prize, penalty; OP prize).
Tensor node_features(const Instance& inst);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, unit norm
// gains; one deterministic stream per seed.
ParamSet init_params(Task task, std::size_t d, std::size_t heads,
                     std::size_t layers, std::size_t dff, std::uint64_t seed);

struct Encoding {
  Tape::Id node_embeddings = -1;  // N x d
  Tape::Id graph_embedding = -1;  // 1 x d, columnwise mean
};

// Registers every touched parameter as a named leaf on the tape; repeated
// encodes on one tape accumulate gradients per name.
Encoding encode(Tape& tape, const ParamSet& params, const Instance& inst);

// Two-layer ReLU MLP head used only by the invariance loss.
Tape::Id project(Tape& tape, const ParamSet& params, Tape::Id vec);

// Per-instance decoding context: encoder output plus the state-independent
// decoder keys/values, all living on one tape.
struct PolicyContext {
  Tape* tape = nullptr;
  const ParamSet* params = nullptr;
  const Instance* inst = nullptr;
  Encoding enc;
  std::vector<Tape::Id> keys;       // per head, N x d/H
  std::vector<Tape::Id> values;     // per head, N x d/H
  Tape::Id pointer_keys = -1;       // N x d
  std::vector<Tape::Id> wq;         // per head decoder query weights
  Tape::Id wctx = -1;
  Tape::Id wo = -1;
  Tape::Id first_ph = -1;
  Tape::Id cur_ph = -1;
};

PolicyContext make_context(Tape& tape, const ParamSet& params,
                           const Instance& inst);

// Log-probability row over all nodes; illegal actions sit near kMaskValue.
Tape::Id decode_step(PolicyContext& ctx, const DecodingState& state);

enum class DecodeMode { kGreedy, kSample };

struct RolloutResult {
  std::vector<int> sequence;
  std::vector<double> chosen_logp;
  double log_likelihood = 0.0;
  double reward_value = 0.0;
  Tape::Id ll = -1;  // tape node holding the summed chosen log-probs
};

// Greedy takes argmax (ties to the lowest index); sampling draws from the
// categorical using `rng`. A forced first node is not scored (its choice was
// not the policy's). Passing `forced` replays that exact action sequence,
// scoring each action; used for gradient checks and likelihood replay.
RolloutResult rollout(PolicyContext& ctx, DecodeMode mode, Rng* rng,
                      int first_node = -1,
                      const std::vector<int>* forced = nullptr);

// Checkpoint: JSON manifest + little-endian f64 blob per parameter.
void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

}  // namespace snco
