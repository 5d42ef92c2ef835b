#include "snco/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "snco/comdp.hpp"

namespace snco {

namespace {

constexpr double kTieTol = 1e-9;

void require_tsp(const Instance& inst, const char* who) {
  if (inst.task != Task::kTsp)
    throw std::invalid_argument(std::string(who) + ": tsp instances only, got " +
                                task_name(inst.task));
}

}  // namespace

std::vector<int> canonical_tour(const std::vector<int>& tour) {
  const std::size_t n = tour.size();
  if (n == 0) return {};
  const std::size_t pivot = static_cast<std::size_t>(
      std::min_element(tour.begin(), tour.end()) - tour.begin());
  std::vector<int> fwd(n), bwd(n);
  for (std::size_t i = 0; i < n; ++i) {
    fwd[i] = tour[(pivot + i) % n];
    bwd[i] = tour[(pivot + n - i) % n];
  }
  return (n > 1 && bwd[1] < fwd[1]) ? bwd : fwd;
}

OracleResult brute_force_tsp(const Instance& inst, bool collect_all) {
  require_tsp(inst, "brute_force_tsp");
  const std::size_t n = inst.n();
  const std::size_t cap = collect_all ? 8 : 10;
  if (n > cap)
    throw std::invalid_argument("brute_force_tsp: n=" + std::to_string(n) +
                                " exceeds limit " + std::to_string(cap));
  std::vector<int> rest(n - 1);
  std::iota(rest.begin(), rest.end(), 1);

  OracleResult res;
  res.n = n;
  res.method = "brute";
  res.cost = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::vector<int>>> near_best;
  std::vector<int> tour(n);
  tour[0] = 0;
  do {
    // Orientation canonicalized: skip the mirror of each tour.
    if (n > 2 && rest.front() > rest.back()) continue;
    std::copy(rest.begin(), rest.end(), tour.begin() + 1);
    const double len = tour_length(inst, tour);
    if (len < res.cost) {
      res.cost = len;
      res.sequence = tour;
    }
    if (collect_all && len <= res.cost + kTieTol)
      near_best.emplace_back(len, canonical_tour(tour));
  } while (std::next_permutation(rest.begin(), rest.end()));

  if (collect_all) {
    for (auto& [len, t] : near_best)
      if (len <= res.cost + kTieTol) res.optimal_set.push_back(std::move(t));
    std::sort(res.optimal_set.begin(), res.optimal_set.end());
    res.optimal_set.erase(
        std::unique(res.optimal_set.begin(), res.optimal_set.end()),
        res.optimal_set.end());
  }
  return res;
}

OracleResult held_karp(const Instance& inst) {
  require_tsp(inst, "held_karp");
  const std::size_t n = inst.n();
  if (n < 2 || n > 18)
    throw std::invalid_argument("held_karp: n=" + std::to_string(n) +
                                " outside 2..18");
  const std::size_t m = n - 1;  // customers 1..n-1
  const std::size_t full = std::size_t(1) << m;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * m, inf);
  std::vector<std::int8_t> parent(full * m, -1);
  for (std::size_t j = 0; j < m; ++j)
    dp[(std::size_t(1) << j) * m + j] = inst.dist(0, j + 1);
  for (std::size_t s = 1; s < full; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!(s >> j & 1)) continue;
      const double base = dp[s * m + j];
      if (base == inf) continue;
      for (std::size_t k = 0; k < m; ++k) {
        if (s >> k & 1) continue;
        const std::size_t ns = s | (std::size_t(1) << k);
        const double cand = base + inst.dist(j + 1, k + 1);
        if (cand < dp[ns * m + k]) {
          dp[ns * m + k] = cand;
          parent[ns * m + k] = static_cast<std::int8_t>(j);
        }
      }
    }
  }
  OracleResult res;
  res.n = n;
  res.method = "heldkarp";
  res.cost = inf;
  std::size_t best_j = 0;
  const std::size_t last = full - 1;
  for (std::size_t j = 0; j < m; ++j) {
    const double total = dp[last * m + j] + inst.dist(j + 1, 0);
    if (total < res.cost) {
      res.cost = total;
      best_j = j;
    }
  }
  std::vector<int> rev;
  std::size_t s = last, j = best_j;
  while (true) {
    rev.push_back(static_cast<int>(j + 1));
    const std::int8_t p = parent[s * m + j];
    s &= ~(std::size_t(1) << j);
    if (p < 0) break;
    j = static_cast<std::size_t>(p);
  }
  res.sequence.push_back(0);
  res.sequence.insert(res.sequence.end(), rev.rbegin(), rev.rend());
  return res;
}

OracleResult nearest_neighbor(const Instance& inst) {
  require_tsp(inst, "nearest_neighbor");
  const std::size_t n = inst.n();
  if (n < 2) throw std::invalid_argument("nearest_neighbor: n < 2");
  std::vector<std::uint8_t> visited(n, 0);
  OracleResult res;
  res.n = n;
  res.method = "nn";
  res.sequence.push_back(0);
  visited[0] = 1;
  std::size_t cur = 0;
  for (std::size_t k = 1; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (visited[j]) continue;
      const double d = inst.dist(cur, j);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    visited[arg] = 1;
    res.sequence.push_back(static_cast<int>(arg));
    cur = arg;
  }
  res.cost = tour_length(inst, res.sequence);
  return res;
}

namespace {

void exhaust(const Instance& inst, const DecodingState& st, OracleResult& res,
             bool collect_all,
             std::vector<std::pair<double, std::vector<int>>>& near_best) {
  if (st.terminal) {
    const double cost = -reward(inst, st.sequence);
    if (cost < res.cost) {
      res.cost = cost;
      res.sequence = st.sequence;
    }
    if (collect_all && cost <= res.cost + kTieTol)
      near_best.emplace_back(cost, st.sequence);
    return;
  }
  const std::vector<std::uint8_t> mask = legal_actions(st, inst);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    DecodingState next = st;
    step(next, static_cast<int>(a), inst);
    exhaust(inst, next, res, collect_all, near_best);
  }
}

}  // namespace

OracleResult exhaustive_search(const Instance& inst, bool collect_all) {
  if (inst.n() > 7)
    throw std::invalid_argument("exhaustive_search: n=" +
                                std::to_string(inst.n()) + " exceeds limit 7");
  OracleResult res;
  res.n = inst.n();
  res.method = "exhaustive";
  res.cost = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::vector<int>>> near_best;
  DecodingState st =
      inst.task == Task::kTsp ? reset(inst, 0) : reset(inst);
  exhaust(inst, st, res, collect_all, near_best);
  if (collect_all) {
    for (auto& [cost, seq] : near_best)
      if (cost <= res.cost + kTieTol) res.optimal_set.push_back(std::move(seq));
    std::sort(res.optimal_set.begin(), res.optimal_set.end());
    res.optimal_set.erase(
        std::unique(res.optimal_set.begin(), res.optimal_set.end()),
        res.optimal_set.end());
  }
  return res;
}

}  // namespace snco
