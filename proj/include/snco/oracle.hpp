#pragma once

#include <string>
#include <vector>

#include "snco/instance.hpp"

namespace snco {

struct OracleResult {
  double cost = 0.0;
  std::vector<int> sequence;
  std::vector<std::vector<int>> optimal_set;  // filled when collected
  std::size_t n = 0;
  std::string method;
};

// Enumerates the (N-1)!/2 distinct tours with node 0 fixed and orientation
// canonicalized. With collect_all, returns every tour class whose length is
// within 1e-9 of the minimum, in canonical form.
OracleResult brute_force_tsp(const Instance& inst, bool collect_all = false);

// Exact subset DP, N <= 18.
OracleResult held_karp(const Instance& inst);

// Greedy nearest-unvisited from node 0, ties to the lowest index.
OracleResult nearest_neighbor(const Instance& inst);

// Task-generic exact search: enumerates every action sequence reachable via
// legal comdp steps and returns the best reward as a cost (cost = -reward).
// Usable for all four tasks at very small N.
OracleResult exhaustive_search(const Instance& inst, bool collect_all = false);

// Rotates a TSP permutation to start at its smallest index and orients it
// toward the smaller second element; two tours are reward-equivalent iff
// their canonical forms are equal.
std::vector<int> canonical_tour(const std::vector<int>& tour);

}  // namespace snco
