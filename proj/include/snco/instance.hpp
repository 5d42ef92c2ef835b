#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace snco {

enum class Task { kTsp, kCvrp, kPctsp, kOp };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// A single routing problem. Node 0 is the depot for CVRP/PCTSP/OP; TSP has
// no depot. Coordinates are dimensionless, nominally in [0,1]^2.
struct Instance {
  Task task = Task::kTsp;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> demands;    // CVRP, fraction of capacity
  std::vector<double> prizes;     // PCTSP, OP
  std::vector<double> penalties;  // PCTSP
  std::map<std::string, double> globals;
  int depot_index = -1;
  std::string name;

  std::size_t n() const { return xs.size(); }
  bool has_depot() const { return depot_index >= 0; }

  double dist(std::size_t i, std::size_t j) const {
    const double dx = xs[i] - xs[j], dy = ys[i] - ys[j];
    return std::sqrt(dx * dx + dy * dy);
  }

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;

  bool operator==(const Instance& o) const = default;
};

// Homogeneous collection: all instances share task and node count.
struct Dataset {
  Task task = Task::kTsp;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<Instance> instances;

  std::size_t count() const { return instances.size(); }
  void validate() const;
};

}  // namespace snco
