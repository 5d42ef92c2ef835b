#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snco/instance.hpp"

namespace snco {

// Every distribution constant in one place. Size-banded values are lookup
// tables of (max_n, value) pairs, first band whose max_n >= n wins.
struct GenConfig {
  struct Band {
    std::size_t max_n;
    double value;
  };

  double coord_lo = 0.0;
  double coord_hi = 1.0;
  int demand_levels = 9;  // CVRP demand ~ Uniform{1..demand_levels} / capacity
  std::vector<Band> cvrp_capacity = {{10, 20}, {20, 30}, {50, 40}, {~0ull, 50}};
  double pctsp_prize_scale = 4.0;       // prize ~ U(0,1) * scale / n
  double pctsp_penalty_max = 3.0;       // penalty ~ U(0,max) * factor(n) / n
  std::vector<Band> pctsp_penalty_factor = {{20, 2}, {50, 3}, {~0ull, 4}};
  double pctsp_threshold = 1.0;
  double op_prize_max = 1.0;
  std::vector<Band> op_tmax = {{20, 2}, {~0ull, 4}};

  double band(const std::vector<Band>& table, std::size_t n) const;
};

// Deterministic in (task, n, seed, cfg); draws one splitmix64 stream.
Instance generate(Task task, std::size_t n, std::uint64_t seed,
                  const GenConfig& cfg = {});

// Instance i uses the child stream split(i) of Rng(seed).
Dataset make_dataset(Task task, std::size_t n, std::size_t count,
                     std::uint64_t seed, const GenConfig& cfg = {});

// TSPLIB EUC_2D subset. Coordinates are min-max rescaled into [0,1]^2 with a
// single scale on both axes; the inverse map is kept in globals
// ("scale", "offset_x", "offset_y") so costs can be de-normalized.
Instance parse_tsplib(const std::string& text);
std::string to_tsplib(const Instance& inst, const std::string& name = "");

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace snco
