#include "snco/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "snco/comdp.hpp"
#include "snco/oracle.hpp"
#include "snco/parallel.hpp"
#include "snco/symmetry.hpp"

namespace snco {

namespace {

constexpr std::uint64_t kCandTag = 0x63616e64;  // one stream per candidate
constexpr std::uint64_t kInstTag = 0x696e7374;  // one stream per instance

void admit(const ParamSet& params, const Instance& original,
           const Instance& image, bool check_theorem, Rng* rng, bool sampled,
           MultistartResult& out) {
  Tape tape;
  PolicyContext ctx = make_context(tape, params, image);
  RolloutResult r =
      rollout(ctx, sampled ? DecodeMode::kSample : DecodeMode::kGreedy, rng);
  const double on_original = reward(original, r.sequence);
  if (check_theorem && std::abs(on_original - r.reward_value) > 1e-9)
    throw std::logic_error(
        "multistart: reward " + std::to_string(r.reward_value) +
        " on the transformed image differs from " +
        std::to_string(on_original) + " on the original instance");
  Feasibility f = is_feasible(original, r.sequence);
  if (!f.ok)
    throw std::logic_error("multistart: infeasible candidate: " + f.violation);
  const double cost = -on_original;
  if (out.costs.empty() || cost < out.best_cost) {
    out.best_cost = cost;
    out.best_sequence = r.sequence;
  }
  out.costs.push_back(cost);
}

}  // namespace

double gap_percent(double cost, double reference_cost, bool maximize) {
  if (!(reference_cost > 0.0))
    throw std::invalid_argument("gap_percent: reference must be positive, got " +
                                std::to_string(reference_cost));
  return maximize ? 100.0 * (reference_cost - cost) / reference_cost
                  : 100.0 * (cost - reference_cost) / reference_cost;
}

EvalMode EvalMode::parse(const std::string& text) {
  EvalMode m;
  if (text == "greedy") {
    m.kind = Kind::kGreedy;
    return m;
  }
  if (text == "dihedral8") {
    m.kind = Kind::kDihedral8;
    m.M = 8;
    return m;
  }
  for (auto [prefix, kind] : {std::pair{std::string("sample:"), Kind::kSample},
                              std::pair{std::string("ortho:"), Kind::kOrtho}}) {
    if (text.rfind(prefix, 0) != 0) continue;
    const std::string digits = text.substr(prefix.size());
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("eval mode: bad count in '" + text + "'");
    m.kind = kind;
    m.M = std::stoull(digits);
    if (m.M < 1)
      throw std::invalid_argument("eval mode: count must be >= 1 in '" + text +
                                  "'");
    return m;
  }
  throw std::invalid_argument(
      "eval mode: expected greedy, sample:M, dihedral8, or ortho:M, got '" +
      text + "'");
}

std::string EvalMode::tag() const {
  switch (kind) {
    case Kind::kGreedy: return "greedy";
    case Kind::kSample: return "sample-" + std::to_string(M);
    case Kind::kDihedral8: return "augment-8";
    case Kind::kOrtho: return "augment-" + std::to_string(M);
  }
  return "greedy";
}

MultistartResult multistart(const ParamSet& params, const Instance& inst,
                            const EvalMode& mode, Rng& rng) {
  MultistartResult out;
  switch (mode.kind) {
    case EvalMode::Kind::kGreedy:
      admit(params, inst, inst, false, nullptr, false, out);
      break;
    case EvalMode::Kind::kSample: {
      admit(params, inst, inst, false, nullptr, false, out);
      for (std::size_t m = 0; m < mode.M; ++m) {
        Rng stream = rng.split(kCandTag + m);
        admit(params, inst, inst, false, &stream, true, out);
      }
      break;
    }
    case EvalMode::Kind::kDihedral8: {
      for (const Instance& image : dihedral_augment(inst))
        admit(params, inst, image, true, nullptr, false, out);
      break;
    }
    case EvalMode::Kind::kOrtho: {
      admit(params, inst, inst, false, nullptr, false, out);
      for (std::size_t m = 0; m < mode.M; ++m) {
        Rng stream = rng.split(kCandTag + m);
        Orthogonal2 q = sample_orthogonal(stream);
        admit(params, inst, transform(inst, q), true, nullptr, false, out);
      }
      break;
    }
  }
  return out;
}

std::vector<double> load_references(const std::string& path,
                                    std::size_t expected) {
  std::ifstream in(path);
  if (!in.good())
    throw std::runtime_error("references: cannot open " + path);
  std::vector<double> refs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("index", 0) == 0) continue;
    std::istringstream row(line);
    std::string index_field, cost_field;
    if (!std::getline(row, index_field, ',') ||
        !std::getline(row, cost_field, ','))
      throw std::runtime_error("references: bad row '" + line + "'");
    const std::size_t index = std::stoull(index_field);
    if (index != refs.size())
      throw std::runtime_error("references: row " + std::to_string(refs.size()) +
                               " has index " + std::to_string(index));
    refs.push_back(std::stod(cost_field));
  }
  if (refs.size() != expected)
    throw std::runtime_error("references: " + path + " has " +
                             std::to_string(refs.size()) + " rows, expected " +
                             std::to_string(expected));
  return refs;
}

EvalReport evaluate(const ParamSet& params, const Dataset& ds,
                    const EvalConfig& cfg) {
  if (ds.task != params.task)
    throw std::invalid_argument("eval: dataset task does not match the "
                                "checkpoint's");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<double> refs;  // oracle convention: cost = -reward
  bool has_refs = false;
  if (cfg.oracle == OraclePolicy::kFile) {
    refs = load_references(cfg.reference_file, ds.count());
    has_refs = true;
  } else if (cfg.oracle == OraclePolicy::kExactIfSmall) {
    refs.resize(ds.count());
    parallel_for(ds.count(), [&](std::size_t i) {
      refs[i] = ds.task == Task::kTsp ? held_karp(ds.instances[i]).cost
                                      : exhaustive_search(ds.instances[i]).cost;
    });
    has_refs = true;
  }

  EvalReport rep;
  rep.mode_tag = cfg.mode.tag();
  rep.costs.resize(ds.count());
  rep.sequences.resize(ds.count());
  if (has_refs) rep.gaps.resize(ds.count());
  const bool maximize = ds.task == Task::kOp;
  Rng root(cfg.seed);
  parallel_for(ds.count(), [&](std::size_t i) {
    Rng irng = root.split(kInstTag + i);
    MultistartResult mr = multistart(params, ds.instances[i], cfg.mode, irng);
    rep.costs[i] = mr.best_cost;
    rep.sequences[i] = std::move(mr.best_sequence);
    if (has_refs)
      rep.gaps[i] = maximize ? gap_percent(-mr.best_cost, -refs[i], true)
                             : gap_percent(mr.best_cost, refs[i], false);
  });

  double cost_sum = 0.0, gap_sum = 0.0;
  for (double c : rep.costs) cost_sum += c;
  for (double g : rep.gaps) gap_sum += g;
  rep.mean_cost = cost_sum / double(ds.count());
  rep.mean_gap = rep.gaps.empty() ? 0.0 : gap_sum / double(rep.gaps.size());
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  nlohmann::json fp;
  fp["task"] = task_name(ds.task);
  fp["n"] = ds.n;
  fp["count"] = ds.count();
  fp["model"] = {{"d", params.d},
                 {"heads", params.heads},
                 {"layers", params.layers},
                 {"dff", params.dff}};
  fp["mode"] = rep.mode_tag;
  fp["seed"] = cfg.seed;
  fp["oracle"] = cfg.oracle == OraclePolicy::kNone ? "none"
                 : cfg.oracle == OraclePolicy::kExactIfSmall
                     ? "exact"
                     : "file:" + cfg.reference_file;
  rep.fingerprint = fp.dump();
  return rep;
}

std::string eval_csv(const EvalReport& rep) {
  std::string out = "# fingerprint: " + rep.fingerprint + "\n";
  out += "index,cost,gap,sequence\n";
  char buf[64];
  for (std::size_t i = 0; i < rep.costs.size(); ++i) {
    out += std::to_string(i);
    std::snprintf(buf, sizeof buf, ",%.17g,", rep.costs[i]);
    out += buf;
    if (!rep.gaps.empty()) {
      std::snprintf(buf, sizeof buf, "%.17g", rep.gaps[i]);
      out += buf;
    }
    out += ',';
    for (std::size_t j = 0; j < rep.sequences[i].size(); ++j) {
      if (j) out += ' ';
      out += std::to_string(rep.sequences[i][j]);
    }
    out += '\n';
  }
  return out;
}

std::string eval_json(const EvalReport& rep) {
  nlohmann::json j;
  j["fingerprint"] = nlohmann::json::parse(rep.fingerprint);
  j["mode"] = rep.mode_tag;
  j["count"] = rep.costs.size();
  j["mean_cost"] = rep.mean_cost;
  if (rep.gaps.empty())
    j["mean_gap"] = nullptr;
  else
    j["mean_gap"] = rep.mean_gap;
  j["seconds"] = rep.seconds;
  j["costs"] = rep.costs;
  j["gaps"] = rep.gaps;
  return j.dump(2) + "\n";
}

}  // namespace snco
