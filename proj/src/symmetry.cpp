#include "snco/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "snco/comdp.hpp"
#include "snco/oracle.hpp"

namespace snco {

Orthogonal2 Orthogonal2::from(double theta, bool reflect) {
  const double c = std::cos(theta), s = std::sin(theta);
  Orthogonal2 q;
  q.theta = theta;
  q.reflect = reflect;
  q.m00 = c;
  q.m10 = s;
  if (reflect) {
    q.m01 = s;
    q.m11 = -c;
  } else {
    q.m01 = -s;
    q.m11 = c;
  }
  return q;
}

Orthogonal2 Orthogonal2::compose(const Orthogonal2& o) const {
  Orthogonal2 q;
  q.m00 = m00 * o.m00 + m01 * o.m10;
  q.m01 = m00 * o.m01 + m01 * o.m11;
  q.m10 = m10 * o.m00 + m11 * o.m10;
  q.m11 = m10 * o.m01 + m11 * o.m11;
  q.reflect = reflect != o.reflect;
  q.theta = std::atan2(q.m10, q.m00);
  return q;
}

double Orthogonal2::max_orthogonality_defect() const {
  const double a = m00 * m00 + m10 * m10 - 1.0;
  const double b = m00 * m01 + m10 * m11;
  const double c = m01 * m01 + m11 * m11 - 1.0;
  return std::max({std::abs(a), std::abs(b), std::abs(c)});
}

Orthogonal2 sample_orthogonal(Rng& rng) {
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return Orthogonal2::from(theta, rng.coin());
}

Instance transform(const Instance& inst, const Orthogonal2& q,
                   std::array<double, 2> center) {
  Instance out = inst;
  const bool is_identity =
      q.m00 == 1.0 && q.m01 == 0.0 && q.m10 == 0.0 && q.m11 == 1.0;
  if (is_identity) return out;
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const double x = inst.xs[i] - center[0];
    const double y = inst.ys[i] - center[1];
    auto [qx, qy] = q.apply(x, y);
    out.xs[i] = qx + center[0];
    out.ys[i] = qy + center[1];
  }
  return out;
}

std::vector<Orthogonal2> dihedral_group() {
  // cos/sin of k*90 degrees, exact
  static const int rc[4] = {1, 0, -1, 0};
  static const int rs[4] = {0, 1, 0, -1};
  std::vector<Orthogonal2> group;
  group.reserve(8);
  for (int reflect = 0; reflect < 2; ++reflect) {
    for (int k = 0; k < 4; ++k) {
      Orthogonal2 q;
      q.theta = k * (std::numbers::pi / 2.0);
      q.reflect = reflect != 0;
      q.m00 = rc[k];
      q.m10 = rs[k];
      q.m01 = reflect ? rs[k] : -rs[k];
      q.m11 = reflect ? -rc[k] : rc[k];
      group.push_back(q);
    }
  }
  return group;
}

std::vector<Instance> dihedral_augment(const Instance& inst) {
  std::vector<Instance> images;
  images.reserve(8);
  for (const Orthogonal2& q : dihedral_group())
    images.push_back(transform(inst, q, {0.5, 0.5}));
  return images;
}

namespace {

std::vector<int> random_feasible(const Instance& inst, Rng& rng) {
  DecodingState st = reset(inst);
  if (inst.task == Task::kTsp)
    st = reset(inst, static_cast<int>(rng.below(inst.n())));
  while (!st.terminal) {
    const std::vector<std::uint8_t> mask = legal_actions(st, inst);
    std::vector<int> options;
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) options.push_back(static_cast<int>(j));
    step(st, options[rng.below(options.size())], inst);
  }
  return st.sequence;
}

std::vector<std::vector<int>> optimal_set(const Instance& inst) {
  if (inst.task == Task::kTsp) {
    if (inst.n() > 8)
      throw std::invalid_argument(
          "verify_problem_symmetry: oracle needs n <= 8 for tsp, got " +
          std::to_string(inst.n()));
    return brute_force_tsp(inst, true).optimal_set;
  }
  if (inst.n() > 7)
    throw std::invalid_argument(
        "verify_problem_symmetry: oracle needs n <= 7 for " +
        task_name(inst.task) + ", got " + std::to_string(inst.n()));
  return exhaustive_search(inst, true).optimal_set;
}

}  // namespace

SymmetryReport verify_problem_symmetry(const Instance& inst, std::size_t trials,
                                       Rng& rng, bool use_oracle) {
  SymmetryReport report;
  report.task = task_name(inst.task);
  report.n = inst.n();
  report.trials = trials;
  report.deltas.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const Orthogonal2 q = sample_orthogonal(rng);
    const Instance image = transform(inst, q);
    const std::vector<int> pi = random_feasible(inst, rng);
    const double delta = reward(inst, pi) - reward(image, pi);
    report.deltas.push_back(delta);
    report.max_abs_delta = std::max(report.max_abs_delta, std::abs(delta));
  }
  if (use_oracle) {
    report.oracle_used = true;
    const Orthogonal2 q = sample_orthogonal(rng);
    report.optimal_set_match =
        optimal_set(inst) == optimal_set(transform(inst, q));
  }
  return report;
}

std::string SymmetryReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["n"] = n;
  j["trials"] = trials;
  j["max_abs_delta"] = max_abs_delta;
  j["oracle_used"] = oracle_used;
  j["optimal_set_match"] = optimal_set_match;
  j["deltas"] = deltas;
  return j.dump(2);
}

}  // namespace snco
