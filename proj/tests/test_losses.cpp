#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "snco/comdp.hpp"
#include "snco/instgen.hpp"
#include "snco/losses.hpp"

using namespace snco;

namespace {

Instance plain_tsp(std::vector<double> xs, std::vector<double> ys) {
  Instance p;
  p.task = Task::kTsp;
  p.xs = std::move(xs);
  p.ys = std::move(ys);
  p.name = "handmade";
  return p;
}

bool all_zero(const GradMap& g) {
  for (const auto& [name, t] : g)
    for (double v : t.data)
      if (v != 0.0) return false;
  return true;
}

bool grads_equal(const GradMap& a, const GradMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.data != t.data) return false;
  }
  return true;
}

// The estimator contract, rebuilt from outside: replay the frozen
// trajectories, weight each log-likelihood by its constant advantage.
GradMap surrogate_grads(const ParamSet& params, const Instance& inst,
                        const GradEstimate& est) {
  Tape tape;
  PolicyContext ctx = make_context(tape, params, inst);
  Tape::Id s = -1;
  const double inv_n = 1.0 / static_cast<double>(est.sequences.size());
  for (std::size_t k = 0; k < est.sequences.size(); ++k) {
    RolloutResult r = rollout(ctx, DecodeMode::kGreedy, nullptr, -1,
                              &est.sequences[k]);
    Tape::Id term = tape.scale(r.ll, -est.advantages[k] * inv_n);
    s = s < 0 ? term : tape.add(s, term);
  }
  return tape.backward(s);
}

}  // namespace

TEST_CASE("sym config validation and presets") {
  SymConfig am = am_preset();
  CHECK(am.alpha == 0.1);
  CHECK(am.beta == 0.0);
  CHECK(am.K == 1);
  CHECK(am.L == 10);
  CHECK_NOTHROW(am.validate());

  SymConfig pt = pomo_preset(Task::kTsp);
  CHECK(pt.alpha == 0.1);
  CHECK(pt.beta == 1.0);
  CHECK(pt.K == 100);
  CHECK(pt.L == 2);
  CHECK_NOTHROW(pt.validate());
  CHECK(pomo_preset(Task::kCvrp).alpha == 0.2);

  SymConfig bad = am;
  bad.alpha = 1.2;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("outside"),
                       std::invalid_argument);
  bad = am;
  bad.beta = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = am;
  bad.K = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = am;
  bad.L = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = am;
  bad.beta = 0.5;
  bad.K = 1;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("K >= 2"),
                       std::invalid_argument);
}

TEST_CASE("advantages center on the shared mean") {
  CHECK(advantages_of({3.0, 1.0, 2.0}) == std::vector<double>{1.0, -1.0, 0.0});
  CHECK(advantages_of({4.0, 2.0, 3.0, 3.0}) ==
        std::vector<double>{1.0, -1.0, 0.0, 0.0});

  SUBCASE("integer reward shift cancels bit for bit") {
    const std::vector<double> r = {-5.0, -3.0, -4.0};
    std::vector<double> shifted = r;
    for (double& v : shifted) v += 7.0;
    CHECK(advantages_of(r) == advantages_of(shifted));
  }

  SUBCASE("shift cancels even when the mean itself rounds") {
    // Plain mean subtraction fails bitwise on this set: (sum + n*c)/n and
    // sum/n + c round differently.
    const std::vector<double> r = {47.0, 3.0, -45.0, -17.0, 15.0};
    std::vector<double> shifted = r;
    for (double& v : shifted) v += 24.0;
    CHECK(advantages_of(r) == advantages_of(shifted));
  }
}

TEST_CASE("invariance loss on the identity transform is exactly minus one") {
  Instance inst = generate(Task::kTsp, 7, 101);
  ParamSet p = init_params(Task::kTsp, 16, 2, 2, 32, 55);
  InvResult r = loss_inv(p, inst, Orthogonal2::identity());
  CHECK(r.value == -1.0);
}

TEST_CASE("constant projection head pins the loss and kills the gradient") {
  Instance inst = generate(Task::kCvrp, 6, 102);
  ParamSet p = init_params(Task::kCvrp, 8, 2, 1, 16, 56);
  for (double& v : p.tensors.at("proj.W1").data) v = 0.0;
  for (double& v : p.tensors.at("proj.W2").data) v = 0.0;
  for (double& v : p.tensors.at("proj.b2").data) v = 0.3;
  Rng rng(77);
  InvResult r = loss_inv(p, inst, sample_orthogonal(rng));
  CHECK(r.value == -1.0);
  CHECK(all_zero(r.grads));
}

TEST_CASE("invariance loss rejects degenerate and non-orthogonal inputs") {
  Instance inst = generate(Task::kTsp, 5, 103);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 57);

  SUBCASE("zero-norm projection") {
    for (const char* name : {"proj.W1", "proj.b1", "proj.W2", "proj.b2"})
      for (double& v : p.tensors.at(name).data) v = 0.0;
    CHECK_THROWS_WITH_AS(loss_inv(p, inst, Orthogonal2::identity()),
                         doctest::Contains("zero-norm"), std::domain_error);
  }
  SUBCASE("non-orthogonal transform") {
    Orthogonal2 q = Orthogonal2::identity();
    q.m00 = 2.0;
    CHECK_THROWS_WITH_AS(loss_inv(p, inst, q),
                         doctest::Contains("orthogonal"),
                         std::invalid_argument);
  }
}

TEST_CASE("invariance loss stays within the cosine range") {
  Rng rng(500);
  for (int trial = 0; trial < 10; ++trial) {
    Instance inst = generate(Task::kOp, 6, 7000 + trial);
    ParamSet p = init_params(Task::kOp, 8, 2, 1, 16, 600 + trial);
    InvResult r = loss_inv(p, inst, sample_orthogonal(rng));
    CHECK(r.value >= -1.0 - 1e-12);
    CHECK(r.value <= 1.0 + 1e-12);
  }
}

TEST_CASE("invariance loss gradient matches finite differences") {
  Instance inst = generate(Task::kTsp, 5, 104);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 58);
  const Orthogonal2 q = Orthogonal2::from(0.7, true);

  InvResult base = loss_inv(p, inst, q);
  CHECK(base.grads.count("dec.Wctx") == 0);
  CHECK(base.grads.count("proj.W1") == 1);

  const double eps = 1e-5;
  for (const auto& [name, g] : base.grads) {
    const Tensor& bt = p.at(name);
    double worst = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < bt.numel(); ++i) {
      ParamSet pp = p;
      pp.tensors.at(name).data[i] = bt.data[i] + eps;
      const double up = loss_inv(pp, inst, q).value;
      pp.tensors.at(name).data[i] = bt.data[i] - eps;
      const double dn = loss_inv(pp, inst, q).value;
      const double fd = (up - dn) / (2 * eps);
      worst = std::max(worst, std::abs(fd - g.data[i]));
      scale = std::max({scale, std::abs(fd), std::abs(g.data[i])});
    }
    CAPTURE(name);
    CHECK(worst / scale <= 1e-4);
  }
}

TEST_CASE("equal rewards zero the solution-symmetric gradient") {
  Instance tri = plain_tsp({0.0, 1.0, 0.5}, {0.0, 0.0, 0.8660254037844386});
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 59);
  Rng rng(42);
  GradEstimate est = grad_ss(p, tri, 4, rng);
  REQUIRE(est.rewards.size() == 4);
  for (double r : est.rewards) CHECK(r == est.rewards[0]);
  for (double a : est.advantages) CHECK(a == 0.0);
  CHECK(all_zero(est.grads));
}

TEST_CASE("grad_ss diagnostics and the zero-sum baseline") {
  Instance inst = generate(Task::kCvrp, 7, 105);
  ParamSet p = init_params(Task::kCvrp, 8, 2, 1, 16, 60);
  Rng rng(43);
  GradEstimate est = grad_ss(p, inst, 5, rng);
  CHECK(est.rewards.size() == 5);
  CHECK(est.advantages.size() == 5);
  CHECK(est.sequences.size() == 5);
  CHECK(est.baseline == doctest::Approx(est.mean_reward()).epsilon(1e-15));
  double max_r = 0.0;
  for (double r : est.rewards) max_r = std::max(max_r, std::abs(r));
  CHECK(std::abs(est.advantage_sum) <= 1e-10 * 5 * std::max(1.0, max_r));
  for (const auto& seq : est.sequences) CHECK(is_feasible(inst, seq).ok);
}

TEST_CASE("grad_ss equals the frozen-trajectory surrogate") {
  Instance inst = generate(Task::kTsp, 6, 106);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 61);
  Rng rng(44);
  GradEstimate est = grad_ss(p, inst, 3, rng);
  GradMap oracle = surrogate_grads(p, inst, est);
  REQUIRE(oracle.size() == est.grads.size());
  for (const auto& [name, t] : oracle) {
    const Tensor& got = est.grads.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(got.data[i] == doctest::Approx(t.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("grad_ss first node handling") {
  Instance inst = generate(Task::kTsp, 6, 107);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 62);
  Rng rng(45);
  const std::vector<int> firsts = {0, 1, 2, 3};
  GradEstimate est = grad_ss(p, inst, 4, rng, &firsts);
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(est.sequences[k].front() == firsts[k]);

  const std::vector<int> wrong_len = {0, 1};
  CHECK_THROWS_WITH_AS(grad_ss(p, inst, 4, rng, &wrong_len),
                       doctest::Contains("first nodes"),
                       std::invalid_argument);
  const std::vector<int> dup = {0, 1, 1, 2};
  CHECK_THROWS_WITH_AS(grad_ss(p, inst, 4, rng, &dup),
                       doctest::Contains("distinct"), std::invalid_argument);
}

TEST_CASE("reward shift leaves the estimator bit-unchanged") {
  Instance inst = generate(Task::kTsp, 6, 108);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 63);
  Rng rng(46);
  GradEstimate est = grad_ss(p, inst, 3, rng);

  GradEstimate shifted = est;
  shifted.advantages = advantages_of({-5.0, -3.0, -4.0});
  GradMap a = surrogate_grads(p, inst, shifted);
  shifted.advantages = advantages_of({2.0, 4.0, 3.0});
  GradMap b = surrogate_grads(p, inst, shifted);
  CHECK(grads_equal(a, b));
}

TEST_CASE("grad_ps with an identity sampler and L=1 replays grad_ss") {
  Instance inst = generate(Task::kPctsp, 6, 109);
  ParamSet p = init_params(Task::kPctsp, 8, 2, 1, 16, 64);
  OrthogonalSampler ident = [](Rng&) { return Orthogonal2::identity(); };

  Rng r1(47), r2(47);
  GradEstimate ps = grad_ps(p, inst, 1, 4, r1, ident);
  GradEstimate ss = grad_ss(p, inst, 4, r2);
  CHECK(ps.rewards == ss.rewards);
  CHECK(ps.sequences == ss.sequences);
  CHECK(ps.baseline == ss.baseline);
  CHECK(grads_equal(ps.grads, ss.grads));
}

TEST_CASE("grad_ps with a random view reduces to grad_ss on that view") {
  Instance inst = generate(Task::kTsp, 7, 110);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 65);
  Rng r1(48), r2(48);
  GradEstimate ps = grad_ps(p, inst, 1, 3, r1);
  REQUIRE(ps.transforms.size() == 1);
  Instance view = transform(inst, ps.transforms[0]);
  GradEstimate ss = grad_ss(p, view, 3, r2);
  CHECK(ps.rewards == ss.rewards);
  CHECK(grads_equal(ps.grads, ss.grads));
}

TEST_CASE("grad_ps holds the theorem check and the zero-sum across tasks") {
  for (Task task : {Task::kTsp, Task::kCvrp, Task::kPctsp, Task::kOp}) {
    ParamSet p = init_params(task, 8, 2, 1, 16, 66);
    for (int trial = 0; trial < 3; ++trial) {
      Instance inst = generate(task, 6, 8000 + trial);
      Rng rng(49 + trial);
      GradEstimate est = grad_ps(p, inst, 2, 2, rng);
      CHECK(est.transforms.size() == 2);
      CHECK(est.rewards.size() == 4);
      double max_r = 0.0;
      for (double r : est.rewards) max_r = std::max(max_r, std::abs(r));
      CHECK(std::abs(est.advantage_sum) <= 1e-10 * 4 * std::max(1.0, max_r));
      for (const auto& seq : est.sequences) CHECK(is_feasible(inst, seq).ok);
    }
  }
}

TEST_CASE("grad_ps argument validation") {
  Instance inst = generate(Task::kTsp, 5, 111);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 67);
  Rng rng(50);
  CHECK_THROWS_WITH_AS(grad_ps(p, inst, 1, 1, rng),
                       doctest::Contains("L*K"), std::invalid_argument);
  CHECK_THROWS_AS(grad_ps(p, inst, 0, 2, rng), std::invalid_argument);
}

TEST_CASE("total loss step composes the three terms") {
  Instance inst = generate(Task::kTsp, 6, 112);
  ParamSet p = init_params(Task::kTsp, 8, 2, 1, 16, 68);

  SUBCASE("alpha=0 beta=0 is exactly grad_ps") {
    SymConfig cfg{0.0, 0.0, 2, 2};
    Rng r1(51), r2(51);
    StepResult step = total_loss_step(p, inst, cfg, r1);
    GradEstimate ps = grad_ps(p, inst, 2, 2, r2);
    CHECK(grads_equal(step.grads, ps.grads));
    CHECK(step.baseline == ps.baseline);
    CHECK(step.mean_reward == ps.mean_reward());
    CHECK(step.best_reward == ps.best_reward());
    CHECK(step.loss_inv_value == 0.0);
  }
  SUBCASE("alpha pulls the projection head into the gradient") {
    SymConfig cfg{0.1, 0.0, 2, 2};
    Rng rng(52);
    StepResult step = total_loss_step(p, inst, cfg, rng);
    CHECK(step.grads.count("proj.W1") == 1);
    CHECK(step.loss_inv_value >= -1.0 - 1e-12);
    CHECK(step.loss_inv_value <= 1.0 + 1e-12);
  }
  SUBCASE("beta adds the solution-symmetric term") {
    SymConfig cfg{0.0, 1.0, 3, 2};
    Rng r1(53), r2(53);
    StepResult with_ss = total_loss_step(p, inst, cfg, r1);
    SymConfig off{0.0, 0.0, 3, 2};
    StepResult without = total_loss_step(p, inst, off, r2);
    CHECK_FALSE(grads_equal(with_ss.grads, without.grads));
  }
  SUBCASE("presets satisfy their own validation") {
    CHECK_NOTHROW(am_preset().validate());
    CHECK_NOTHROW(pomo_preset(Task::kTsp).validate());
    CHECK_NOTHROW(pomo_preset(Task::kCvrp).validate());
  }
}

TEST_CASE("plain REINFORCE arm drops the baseline") {
  Instance inst = generate(Task::kCvrp, 6, 113);
  ParamSet p = init_params(Task::kCvrp, 8, 2, 1, 16, 69);
  SymConfig cfg{0.0, 0.0, 2, 2};
  Rng r1(54), r2(54);
  StepResult none = total_loss_step(p, inst, cfg, r1, BaselineMode::kNone);
  StepResult shared = total_loss_step(p, inst, cfg, r2, BaselineMode::kShared);
  CHECK(none.baseline == 0.0);
  CHECK(none.mean_reward == shared.mean_reward);
  CHECK(none.advantage_sum ==
        doctest::Approx(4.0 * none.mean_reward).epsilon(1e-12));
  CHECK_FALSE(grads_equal(none.grads, shared.grads));
}
