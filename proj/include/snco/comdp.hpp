#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snco/instance.hpp"

namespace snco {

// Constructive decoding state. For CVRP/PCTSP/OP the tour starts at the
// depot implicitly; `sequence` holds only the chosen actions.
struct DecodingState {
  std::vector<std::uint8_t> visited;
  std::vector<int> sequence;
  int current = -1;
  bool terminal = false;
  double remaining_capacity = 0.0;  // CVRP
  double consumed_length = 0.0;     // OP
  double collected_prize = 0.0;     // PCTSP
  std::size_t customers_done = 0;

  std::size_t t() const { return sequence.size(); }
};

struct Feasibility {
  bool ok = false;
  std::string violation;
};

// first_node < 0 leaves the start free (TSP) or at the depot (others).
// Forcing a first node is how multistart rollouts diversify; forcing the
// depot itself is rejected.
DecodingState reset(const Instance& inst, int first_node = -1);

// Mask over nodes, 1 = selectable. Throws on terminal states.
std::vector<std::uint8_t> legal_actions(const DecodingState& st,
                                        const Instance& inst);

// Applies one action. Throws std::invalid_argument describing the violated
// rule if the action is illegal (policies must mask first).
void step(DecodingState& st, int action, const Instance& inst);

// Replays the sequence through reset/step. ok only if every action was
// legal and the final state is terminal.
Feasibility is_feasible(const Instance& inst, const std::vector<int>& sequence);

// TSP/CVRP/PCTSP: negative cost. OP: collected prize. Throws on infeasible
// sequences, naming the violated constraint.
double reward(const Instance& inst, const std::vector<int>& sequence);

// Closed-tour length of a TSP permutation (no feasibility check).
double tour_length(const Instance& inst, const std::vector<int>& seq);

}  // namespace snco
