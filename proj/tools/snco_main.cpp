#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snco/eval.hpp"
#include "snco/gradcheck.hpp"
#include "snco/instgen.hpp"
#include "snco/oracle.hpp"
#include "snco/parallel.hpp"
#include "snco/symmetry.hpp"
#include "snco/trainer.hpp"

namespace {

using namespace snco;

constexpr std::uint64_t kVerInstTag = 0x76696e73;
constexpr std::uint64_t kVerPairTag = 0x76706169;
constexpr std::size_t kPairsPerInstance = 10;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  out << text;
}

int run_gen(const std::string& task_s, std::size_t n, std::size_t count,
            std::uint64_t seed, const std::string& out) {
  Dataset ds = make_dataset(task_from_name(task_s), n, count, seed);
  save_dataset(ds, out);
  std::printf("wrote %zu %s instances (n=%zu, seed=%llu) to %s\n", ds.count(),
              task_s.c_str(), n, static_cast<unsigned long long>(seed),
              out.c_str());
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir) {
  TrainConfig cfg = TrainConfig::from_json(read_text(config_path));
  cfg.out_dir = out_dir;  // the flag wins over any out_dir in the file
  TrainResult res = train(cfg);
  if (res.aborted) {
    std::fprintf(stderr,
                 "aborted at step %zu on a non-finite batch; last finite "
                 "checkpoint retained in %s\n",
                 res.completed_steps, out_dir.c_str());
    return 1;
  }
  std::printf("trained %zu steps", res.completed_steps);
  if (!res.metrics.empty())
    std::printf(", final mean_cost %.6g", res.metrics.back().mean_cost);
  std::printf("; artifacts in %s\n", out_dir.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& mode_s, const std::string& oracle_s,
             std::uint64_t seed, const std::string& out_dir) {
  ParamSet params = load_params(ckpt);
  Dataset ds = load_dataset(data);
  EvalConfig cfg;
  cfg.mode = EvalMode::parse(mode_s);
  cfg.seed = seed;
  if (oracle_s == "none") {
    cfg.oracle = OraclePolicy::kNone;
  } else if (oracle_s == "exact") {
    cfg.oracle = OraclePolicy::kExactIfSmall;
  } else if (oracle_s.rfind("file:", 0) == 0) {
    cfg.oracle = OraclePolicy::kFile;
    cfg.reference_file = oracle_s.substr(5);
  } else {
    throw std::invalid_argument(
        "--oracle expects none, exact, or file:PATH, got '" + oracle_s + "'");
  }
  EvalReport rep = evaluate(params, ds, cfg);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/eval.csv", eval_csv(rep));
  write_text(out_dir + "/eval.json", eval_json(rep));
  std::printf("mode %s on %zu instances: mean_cost %.6g", rep.mode_tag.c_str(),
              rep.costs.size(), rep.mean_cost);
  if (!rep.gaps.empty()) std::printf(", mean_gap %.4g%%", rep.mean_gap);
  std::printf(" (%.2fs); reports in %s\n", rep.seconds, out_dir.c_str());
  return 0;
}

int run_verify(const std::string& task_s, std::size_t n, std::size_t trials,
               std::uint64_t seed, bool use_oracle) {
  const Task task = task_from_name(task_s);
  Rng root(seed);
  SymmetryReport merged;
  merged.task = task_s;
  merged.n = n;
  merged.trials = trials;
  merged.oracle_used = use_oracle;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng row = root.split(t);
    const Instance inst = generate(task, n, row.derive(kVerInstTag));
    Rng pairs = row.split(kVerPairTag);
    SymmetryReport one =
        verify_problem_symmetry(inst, kPairsPerInstance, pairs, use_oracle);
    merged.deltas.insert(merged.deltas.end(), one.deltas.begin(),
                         one.deltas.end());
    merged.max_abs_delta = std::max(merged.max_abs_delta, one.max_abs_delta);
    merged.optimal_set_match = merged.optimal_set_match && one.optimal_set_match;
  }
  std::printf("%s\n", merged.to_json().c_str());
  const bool ok = merged.max_abs_delta <= 1e-9 && merged.optimal_set_match;
  return ok ? 0 : 1;
}

int run_oracle(const std::string& data, const std::string& method,
               const std::string& out) {
  Dataset ds = load_dataset(data);
  if (ds.task != Task::kTsp && method != "exhaustive")
    throw std::invalid_argument("method " + method + " handles tsp only; use "
                                "exhaustive for " + task_name(ds.task));
  std::vector<OracleResult> results(ds.count());
  parallel_for(ds.count(), [&](std::size_t i) {
    const Instance& inst = ds.instances[i];
    results[i] = method == "brute"      ? brute_force_tsp(inst)
                 : method == "heldkarp" ? held_karp(inst)
                                        : exhaustive_search(inst);
  });
  std::string csv = "index,cost,sequence\n";
  char buf[48];
  for (std::size_t i = 0; i < results.size(); ++i) {
    csv += std::to_string(i);
    std::snprintf(buf, sizeof buf, ",%.17g,", results[i].cost);
    csv += buf;
    const std::vector<int>& seq = results[i].sequence;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      if (j) csv += ' ';
      csv += std::to_string(seq[j]);
    }
    csv += '\n';
  }
  write_text(out, csv);
  std::printf("solved %zu instances with %s; references in %s\n", ds.count(),
              method.c_str(), out.c_str());
  return 0;
}

int run_gradcheck_cmd(std::uint64_t seed) {
  GradCheck gc = run_gradcheck(seed);
  std::printf("%s", gradcheck_text(gc).c_str());
  return gc.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-regularized neural solvers for routing problems"};
  app.require_subcommand(1);
  int rc = 0;

  const std::vector<std::string> tasks = {"tsp", "cvrp", "pctsp", "op"};

  auto* gen = app.add_subcommand("gen", "Generate a dataset file");
  std::string gen_task = "tsp", gen_out;
  std::size_t gen_n = 10, gen_count = 100;
  std::uint64_t gen_seed = 1;
  gen->add_option("--task", gen_task)->check(CLI::IsMember(tasks))->required();
  gen->add_option("--n", gen_n, "nodes per instance")->required();
  gen->add_option("--count", gen_count)->required();
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--out", gen_out)->required();
  gen->callback([&] { rc = run_gen(gen_task, gen_n, gen_count, gen_seed,
                                   gen_out); });

  auto* tr = app.add_subcommand("train", "Train from a JSON config");
  std::string tr_config, tr_out;
  tr->add_option("--config", tr_config, "TrainConfig JSON")
      ->check(CLI::ExistingFile)
      ->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->callback([&] { rc = run_train(tr_config, tr_out); });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_mode = "greedy", ev_oracle = "none", ev_out;
  std::uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt)->check(CLI::ExistingFile)->required();
  ev->add_option("--data", ev_data)->check(CLI::ExistingFile)->required();
  ev->add_option("--mode", ev_mode, "greedy | sample:M | dihedral8 | ortho:M");
  ev->add_option("--oracle", ev_oracle, "none | exact | file:PATH");
  ev->add_option("--seed", ev_seed, "stream for sample/ortho modes");
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->callback([&] {
    rc = run_eval(ev_ckpt, ev_data, ev_mode, ev_oracle, ev_seed, ev_out);
  });

  auto* vf = app.add_subcommand(
      "verify", "Check reward invariance under random orthogonal maps");
  std::string vf_task = "tsp";
  std::size_t vf_n = 20, vf_trials = 100;
  std::uint64_t vf_seed = 1;
  bool vf_oracle = false;
  vf->add_option("--task", vf_task)->check(CLI::IsMember(tasks))->required();
  vf->add_option("--n", vf_n)->required();
  vf->add_option("--trials", vf_trials,
                 "instances tried, 10 random (Q, pi) pairs each")
      ->required();
  vf->add_option("--seed", vf_seed)->required();
  vf->add_flag("--oracle", vf_oracle,
               "also compare brute-force optimal sets (small n)");
  vf->callback([&] { rc = run_verify(vf_task, vf_n, vf_trials, vf_seed,
                                     vf_oracle); });

  auto* orc = app.add_subcommand("oracle", "Write exact reference costs");
  std::string orc_data, orc_method = "heldkarp", orc_out;
  orc->add_option("--data", orc_data)->check(CLI::ExistingFile)->required();
  orc->add_option("--method", orc_method)
      ->check(CLI::IsMember({"brute", "heldkarp", "exhaustive"}))
      ->required();
  orc->add_option("--out", orc_out)->required();
  orc->callback([&] { rc = run_oracle(orc_data, orc_method, orc_out); });

  auto* gd = app.add_subcommand("gradcheck", "Finite-difference audit");
  std::uint64_t gd_seed = 1;
  gd->add_option("--seed", gd_seed)->required();
  gd->callback([&] { rc = run_gradcheck_cmd(gd_seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
