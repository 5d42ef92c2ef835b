#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snco/instance.hpp"
#include "snco/policy.hpp"
#include "snco/rng.hpp"

namespace snco {

// minimize: 100*(cost - ref)/ref; maximize: 100*(ref - cost)/ref.
// Arguments are objective values in the task's natural orientation, so a
// maximization reference is the (positive) best objective.
double gap_percent(double cost, double reference_cost, bool maximize);

struct EvalMode {
  enum class Kind { kGreedy, kSample, kDihedral8, kOrtho } kind = Kind::kGreedy;
  std::size_t M = 1;  // samples or random images; fixed 8 for dihedral

  // "greedy" | "sample:M" | "dihedral8" | "ortho:M"
  static EvalMode parse(const std::string& text);
  std::string tag() const;  // greedy | sample-M | augment-8 | augment-M
};

// Every candidate's cost, scored on the original instance (cost = -reward,
// so OP entries are negative). Image strategies re-score each transformed
// rollout on the original and assert the rewards agree within 1e-9.
struct MultistartResult {
  std::vector<int> best_sequence;
  double best_cost = 0.0;
  std::vector<double> costs;  // candidate order: identity/greedy first
};

// sample:M adds M sampled rollouts to the greedy one; dihedral8 decodes the
// 8 dihedral images; ortho:M decodes identity plus M Haar-random images.
// Candidate m draws from rng.split(m)-derived streams, so candidate sets
// nest as M grows and the best cost is non-increasing in M.
MultistartResult multistart(const ParamSet& params, const Instance& inst,
                            const EvalMode& mode, Rng& rng);

enum class OraclePolicy { kNone, kExactIfSmall, kFile };

struct EvalConfig {
  EvalMode mode;
  OraclePolicy oracle = OraclePolicy::kNone;
  std::string reference_file;  // CSV index,cost,sequence when kFile
  std::uint64_t seed = 0;      // roots the sample/ortho streams
};

struct EvalReport {
  std::string mode_tag;
  std::string fingerprint;  // one-line json: task, n, count, model, mode, seed
  std::vector<double> costs;
  std::vector<std::vector<int>> sequences;
  std::vector<double> gaps;  // empty without references
  double mean_cost = 0.0;
  double mean_gap = 0.0;
  double seconds = 0.0;
};

// Per-instance best-of costs via multistart; gaps against the chosen
// references. Instances run in parallel; greedy and dihedral8 reports are
// deterministic, sample and ortho are deterministic in cfg.seed.
EvalReport evaluate(const ParamSet& params, const Dataset& ds,
                    const EvalConfig& cfg);

// Reference costs in oracle convention (cost = -reward) from a CSV whose
// rows are index,cost[,sequence]; row count must match `expected`.
std::vector<double> load_references(const std::string& path,
                                    std::size_t expected);

std::string eval_csv(const EvalReport& rep);   // fingerprint comment + rows
std::string eval_json(const EvalReport& rep);  // summary object

}  // namespace snco
