#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace snco {

// Finite-difference audit of every gradient path: each tensor op, the
// rollout log-likelihood, the invariance loss, and frozen-trajectory
// surrogates of both REINFORCE estimators, on a d=8 / N=6 / one-layer model.
struct GradCheck {
  struct Entry {
    std::string name;
    double max_ratio = 0.0;  // |bp - fd| / max(|bp|, |fd|, 1e-3)
    bool pass = false;
  };
  std::vector<Entry> entries;
  double worst = 0.0;
  bool pass = false;
};

// Passes when every ratio is <= 1e-4; the 1e-3 scale floor makes that an
// absolute tolerance of 1e-7 for near-zero gradients.
GradCheck run_gradcheck(std::uint64_t seed);

std::string gradcheck_text(const GradCheck& gc);  // one line per entry

}  // namespace snco
