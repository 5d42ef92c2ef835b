#include "snco/comdp.hpp"

#include <stdexcept>

namespace snco {

namespace {

bool in_range(const Instance& inst, int a) {
  return a >= 0 && static_cast<std::size_t>(a) < inst.n();
}

// Why an action is off the mask, for error messages.
std::string explain(const DecodingState& st, const Instance& inst, int a) {
  if (!in_range(inst, a))
    return "node " + std::to_string(a) + " out of range";
  const std::string node = "node " + std::to_string(a);
  switch (inst.task) {
    case Task::kTsp:
      return "revisit of " + node;
    case Task::kCvrp:
      if (a == 0) return "depot repeat (current node is the depot)";
      if (st.visited[a]) return "revisit of " + node;
      return "capacity exceeded at " + node + " (demand " +
             std::to_string(inst.demands[a]) + " > remaining " +
             std::to_string(st.remaining_capacity) + ")";
    case Task::kPctsp:
      if (a == 0)
        return "prize threshold not met (collected " +
               std::to_string(st.collected_prize) + " < " +
               std::to_string(inst.globals.at("prize_threshold")) + ")";
      return "revisit of " + node;
    case Task::kOp:
      if (st.visited[a]) return "revisit of " + node;
      return "length budget exceeded at " + node;
  }
  return "illegal action";
}

}  // namespace

DecodingState reset(const Instance& inst, int first_node) {
  inst.validate();
  DecodingState st;
  st.visited.assign(inst.n(), 0);
  if (inst.has_depot()) {
    if (first_node == inst.depot_index)
      throw std::invalid_argument("reset: forced first node must not be the depot");
    st.current = inst.depot_index;
    st.visited[inst.depot_index] = 1;
    if (inst.task == Task::kCvrp) st.remaining_capacity = 1.0;
    if (first_node >= 0) step(st, first_node, inst);
  } else if (first_node >= 0) {
    if (!in_range(inst, first_node))
      throw std::invalid_argument("reset: first node " +
                                  std::to_string(first_node) + " out of range");
    st.current = first_node;
    st.visited[first_node] = 1;
    st.sequence.push_back(first_node);
    st.customers_done = 1;
  }
  return st;
}

std::vector<std::uint8_t> legal_actions(const DecodingState& st,
                                        const Instance& inst) {
  if (st.terminal)
    throw std::invalid_argument("legal_actions: state is terminal");
  const std::size_t n = inst.n();
  std::vector<std::uint8_t> mask(n, 0);
  switch (inst.task) {
    case Task::kTsp:
      for (std::size_t j = 0; j < n; ++j) mask[j] = !st.visited[j];
      break;
    case Task::kCvrp: {
      for (std::size_t j = 1; j < n; ++j)
        mask[j] = !st.visited[j] && inst.demands[j] <= st.remaining_capacity;
      mask[0] = st.current != 0;
      break;
    }
    case Task::kPctsp: {
      for (std::size_t j = 1; j < n; ++j) mask[j] = !st.visited[j];
      const bool all_done = st.customers_done == n - 1;
      mask[0] =
          st.collected_prize >= inst.globals.at("prize_threshold") || all_done;
      break;
    }
    case Task::kOp: {
      const double budget = inst.globals.at("t_max");
      for (std::size_t j = 1; j < n; ++j) {
        if (st.visited[j]) continue;
        const double need = st.consumed_length + inst.dist(st.current, j) +
                            inst.dist(j, 0);
        mask[j] = need <= budget;
      }
      mask[0] = 1;
      break;
    }
  }
  return mask;
}

void step(DecodingState& st, int action, const Instance& inst) {
  std::vector<std::uint8_t> mask = legal_actions(st, inst);
  if (!in_range(inst, action) || !mask[action])
    throw std::invalid_argument("step: " + explain(st, inst, action));
  switch (inst.task) {
    case Task::kTsp:
      st.customers_done++;
      break;
    case Task::kCvrp:
      if (action == 0) {
        st.remaining_capacity = 1.0;
      } else {
        st.remaining_capacity -= inst.demands[action];
        st.customers_done++;
      }
      break;
    case Task::kPctsp:
      if (action != 0) {
        st.collected_prize += inst.prizes[action];
        st.customers_done++;
      }
      break;
    case Task::kOp:
      st.consumed_length += inst.dist(st.current, action);
      if (action != 0) {
        st.collected_prize += inst.prizes[action];
        st.customers_done++;
      }
      break;
  }
  st.visited[action] = 1;
  st.sequence.push_back(action);
  st.current = action;
  switch (inst.task) {
    case Task::kTsp:
      st.terminal = st.customers_done == inst.n();
      break;
    case Task::kCvrp:
      st.terminal = st.customers_done == inst.n() - 1 && st.current == 0;
      break;
    case Task::kPctsp:
    case Task::kOp:
      st.terminal = action == 0;
      break;
  }
}

namespace {

Feasibility replay(const Instance& inst, const std::vector<int>& sequence,
                   DecodingState& out) {
  std::size_t start = 0;
  if (!inst.has_depot()) {
    if (sequence.empty()) return {false, "empty sequence"};
    if (!in_range(inst, sequence[0]))
      return {false, "node " + std::to_string(sequence[0]) + " out of range"};
    out = reset(inst, sequence[0]);
    start = 1;
  } else {
    out = reset(inst);
  }
  for (std::size_t i = start; i < sequence.size(); ++i) {
    if (out.terminal)
      return {false, "action after terminal state at position " +
                         std::to_string(i)};
    if (!in_range(inst, sequence[i]))
      return {false, "node " + std::to_string(sequence[i]) + " out of range"};
    std::vector<std::uint8_t> mask = legal_actions(out, inst);
    if (!mask[sequence[i]]) return {false, explain(out, inst, sequence[i])};
    step(out, sequence[i], inst);
  }
  if (!out.terminal) return {false, "incomplete solution"};
  return {true, ""};
}

}  // namespace

Feasibility is_feasible(const Instance& inst, const std::vector<int>& sequence) {
  DecodingState final_state;
  return replay(inst, sequence, final_state);
}

double tour_length(const Instance& inst, const std::vector<int>& seq) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i)
    len += inst.dist(seq[i], seq[i + 1]);
  if (seq.size() > 1) len += inst.dist(seq.back(), seq.front());
  return len;
}

double reward(const Instance& inst, const std::vector<int>& sequence) {
  DecodingState final_state;
  Feasibility f = replay(inst, sequence, final_state);
  if (!f.ok)
    throw std::invalid_argument("reward: infeasible solution: " + f.violation);
  switch (inst.task) {
    case Task::kTsp:
      return -tour_length(inst, sequence);
    case Task::kCvrp: {
      double len = 0.0;
      int prev = 0;
      for (int a : sequence) {
        len += inst.dist(prev, a);
        prev = a;
      }
      return -len;
    }
    case Task::kPctsp: {
      double len = 0.0;
      int prev = 0;
      for (int a : sequence) {
        len += inst.dist(prev, a);
        prev = a;
      }
      double penalty = 0.0;
      for (std::size_t j = 1; j < inst.n(); ++j)
        if (!final_state.visited[j]) penalty += inst.penalties[j];
      return -(len + penalty);
    }
    case Task::kOp:
      return final_state.collected_prize;
  }
  throw std::invalid_argument("reward: bad task");
}

}  // namespace snco
