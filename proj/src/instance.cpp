#include "snco/instance.hpp"

#include <cmath>
#include <stdexcept>

namespace snco {

std::string task_name(Task t) {
  switch (t) {
    case Task::kTsp: return "tsp";
    case Task::kCvrp: return "cvrp";
    case Task::kPctsp: return "pctsp";
    case Task::kOp: return "op";
  }
  throw std::invalid_argument("task_name: bad enum value");
}

Task task_from_name(const std::string& name) {
  if (name == "tsp") return Task::kTsp;
  if (name == "cvrp") return Task::kCvrp;
  if (name == "pctsp") return Task::kPctsp;
  if (name == "op") return Task::kOp;
  throw std::invalid_argument("unknown task '" + name +
                              "' (expected tsp, cvrp, pctsp or op)");
}

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("instance: " + what);
}

}  // namespace

void Instance::validate() const {
  const std::size_t nn = n();
  check(nn >= 2, "need at least 2 nodes, got " + std::to_string(nn));
  check(ys.size() == nn, "xs/ys length mismatch");
  for (std::size_t i = 0; i < nn; ++i)
    check(std::isfinite(xs[i]) && std::isfinite(ys[i]),
          "non-finite coordinate at node " + std::to_string(i));
  const bool depot_task = task != Task::kTsp;
  if (depot_task) {
    check(nn >= 3, task_name(task) + " needs depot plus 2 customers");
    check(depot_index == 0, "depot must be node 0");
  } else {
    check(depot_index < 0, "tsp has no depot");
  }
  switch (task) {
    case Task::kTsp:
      check(demands.empty() && prizes.empty() && penalties.empty(),
            "tsp carries no node features");
      break;
    case Task::kCvrp: {
      check(demands.size() == nn, "demands length mismatch");
      check(globals.count("capacity") && globals.at("capacity") == 1.0,
            "normalized capacity must be 1");
      check(demands[0] == 0.0, "depot demand must be 0");
      for (std::size_t i = 1; i < nn; ++i)
        check(demands[i] > 0.0 && demands[i] <= 1.0,
              "demand out of (0,1] at node " + std::to_string(i));
      break;
    }
    case Task::kPctsp: {
      check(prizes.size() == nn && penalties.size() == nn,
            "prizes/penalties length mismatch");
      check(globals.count("prize_threshold") &&
                globals.at("prize_threshold") > 0.0,
            "prize threshold must be positive");
      check(prizes[0] == 0.0 && penalties[0] == 0.0,
            "depot prize and penalty must be 0");
      for (std::size_t i = 1; i < nn; ++i)
        check(prizes[i] >= 0.0 && penalties[i] >= 0.0,
              "negative prize or penalty at node " + std::to_string(i));
      break;
    }
    case Task::kOp: {
      check(prizes.size() == nn, "prizes length mismatch");
      check(globals.count("t_max") && globals.at("t_max") > 0.0,
            "t_max must be positive");
      check(prizes[0] == 0.0, "depot prize must be 0");
      for (std::size_t i = 1; i < nn; ++i)
        check(prizes[i] >= 0.0, "negative prize at node " + std::to_string(i));
      break;
    }
  }
}

void Dataset::validate() const {
  if (instances.empty())
    throw std::invalid_argument("dataset: no instances");
  for (const Instance& inst : instances) {
    inst.validate();
    if (inst.task != task)
      throw std::invalid_argument("dataset: mixed tasks (" + task_name(task) +
                                  " vs " + task_name(inst.task) + ")");
    if (inst.n() != n)
      throw std::invalid_argument(
          "dataset: mixed node counts (" + std::to_string(n) + " vs " +
          std::to_string(inst.n()) + ")");
  }
}

}  // namespace snco
