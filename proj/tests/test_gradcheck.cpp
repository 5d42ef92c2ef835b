#include <string>

#include "doctest.h"
#include "snco/gradcheck.hpp"

using namespace snco;

TEST_CASE("the gradient audit passes at its tolerance") {
  GradCheck gc = run_gradcheck(7);
  CHECK(gc.pass);
  CHECK(gc.worst <= 1e-4);
  CHECK(gc.entries.size() >= 24);
  for (const GradCheck::Entry& e : gc.entries) {
    INFO(e.name);
    CHECK(e.pass);
  }

  GradCheck again = run_gradcheck(7);
  CHECK(again.worst == gc.worst);

  const std::string text = gradcheck_text(gc);
  CHECK(text.find("gradcheck pass") != std::string::npos);
  CHECK(text.find("rollout_ll_tsp") != std::string::npos);
  CHECK(text.find("grad_ps_surrogate") != std::string::npos);
}

TEST_CASE("the gradient audit holds across seeds") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    GradCheck gc = run_gradcheck(seed);
    INFO("seed ", seed, " worst ", gc.worst);
    CHECK(gc.pass);
  }
}
