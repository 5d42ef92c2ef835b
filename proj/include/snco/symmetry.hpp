#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "snco/instance.hpp"
#include "snco/rng.hpp"

namespace snco {

// 2x2 orthogonal map, kept with its provenance.
struct Orthogonal2 {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  double theta = 0.0;
  bool reflect = false;

  static Orthogonal2 identity() { return {}; }
  static Orthogonal2 from(double theta, bool reflect);

  std::array<double, 2> apply(double x, double y) const {
    return {m00 * x + m01 * y, m10 * x + m11 * y};
  }
  double det() const { return m00 * m11 - m01 * m10; }
  Orthogonal2 compose(const Orthogonal2& o) const;  // this after o
  double max_orthogonality_defect() const;          // max |Q^T Q - I| entry
};

// Haar-uniform on O(2): theta ~ U[0,2pi), reflection ~ Bernoulli(1/2).
Orthogonal2 sample_orthogonal(Rng& rng);

// coords' = Q (coords - center) + center; features untouched.
Instance transform(const Instance& inst, const Orthogonal2& q,
                   std::array<double, 2> center = {0.5, 0.5});

// The 8 dihedral images about (0.5, 0.5), identity first.
std::vector<Instance> dihedral_augment(const Instance& inst);
std::vector<Orthogonal2> dihedral_group();

struct SymmetryReport {
  std::string task;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::vector<double> deltas;
  double max_abs_delta = 0.0;
  bool oracle_used = false;
  bool optimal_set_match = true;

  std::string to_json() const;
};

// Records R(pi;P) - R(pi;Q(P)) over `trials` random (Q, feasible pi) pairs.
// With use_oracle, additionally compares brute-force optimal solution sets
// of P and Q(P) (needs small n).
SymmetryReport verify_problem_symmetry(const Instance& inst, std::size_t trials,
                                       Rng& rng, bool use_oracle = false);

}  // namespace snco
