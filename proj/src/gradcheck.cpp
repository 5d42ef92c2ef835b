#include "snco/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "snco/instgen.hpp"
#include "snco/losses.hpp"
#include "snco/policy.hpp"
#include "snco/symmetry.hpp"

namespace snco {

namespace {

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kScaleFloor = 1e-3;

double ratio_of(const Tensor& bp, const Tensor& fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < bp.numel(); ++i) {
    const double diff = std::abs(bp.data[i] - fd.data[i]);
    const double scale = std::max(
        {std::abs(bp.data[i]), std::abs(fd.data[i]), kScaleFloor});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

void push(GradCheck& gc, const std::string& name, double ratio) {
  gc.entries.push_back({name, ratio, ratio <= kTol});
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo,
                     double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

using Build = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

// Rebuilds the graph per evaluation so the finite-difference probe sees the
// same computation backward() differentiated.
void check_op(GradCheck& gc, const std::string& name,
              std::vector<Tensor> inputs, const Build& build) {
  auto scalar = [&](const std::vector<Tensor>& vals) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (std::size_t i = 0; i < vals.size(); ++i)
      ids.push_back(t.leaf(vals[i], "x" + std::to_string(i)));
    return t.value(build(t, ids)).data[0];
  };

  Tape t;
  std::vector<Tape::Id> ids;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    ids.push_back(t.leaf(inputs[i], "x" + std::to_string(i)));
  GradMap bp = t.backward(build(t, ids));

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor fd = finite_difference_grad(
        [&](const Tensor& x) {
          std::vector<Tensor> vals = inputs;
          vals[i] = x;
          return scalar(vals);
        },
        inputs[i], kEps);
    worst = std::max(worst, ratio_of(bp.at("x" + std::to_string(i)), fd));
  }
  push(gc, name, worst);
}

void check_ops(GradCheck& gc, Rng& rng) {
  const Tensor a23 = random_tensor({2, 3}, rng, -1.0, 1.0);
  const Tensor b23 = random_tensor({2, 3}, rng, -1.0, 1.0);
  const Tensor w32 = random_tensor({3, 2}, rng, -1.0, 1.0);
  const Tensor c43 = random_tensor({4, 3}, rng, -1.0, 1.0);

  check_op(gc, "add", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.add(x[0], x[1]));
  });
  check_op(gc, "sub", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.sub(x[0], x[1]));
  });
  check_op(gc, "mul", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(x[0], x[1]));
  });
  check_op(gc, "scale", {a23}, [](Tape& t, const auto& x) {
    return t.sum(t.scale(x[0], -2.5));
  });
  check_op(gc, "matmul", {a23, w32}, [](Tape& t, const auto& x) {
    return t.sum(t.matmul(x[0], x[1]));
  });
  check_op(gc, "matmul_nt", {a23, c43}, [](Tape& t, const auto& x) {
    return t.sum(t.matmul_nt(x[0], x[1]));
  });

  Tensor off_kink = a23;
  for (double& v : off_kink.data) v += v >= 0.0 ? 0.2 : -0.2;
  check_op(gc, "relu", {off_kink, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(t.relu(x[0]), x[1]));
  });
  check_op(gc, "tanh", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(t.tanh_(x[0]), x[1]));
  });
  check_op(gc, "exp", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(t.exp_(x[0]), x[1]));
  });
  check_op(gc, "log", {random_tensor({2, 3}, rng, 0.5, 2.0), b23},
           [](Tape& t, const auto& x) {
             return t.sum(t.mul(t.log_(x[0]), x[1]));
           });

  check_op(gc, "sum", {a23}, [](Tape& t, const auto& x) {
    return t.sum(x[0]);
  });
  check_op(gc, "mean", {a23}, [](Tape& t, const auto& x) {
    return t.mean(x[0]);
  });
  check_op(gc, "mean_rows", {a23, random_tensor({1, 3}, rng, -1.0, 1.0)},
           [](Tape& t, const auto& x) {
             return t.sum(t.mul(t.mean_rows(x[0]), x[1]));
           });

  check_op(gc, "softmax", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(t.softmax(x[0]), x[1]));
  });
  check_op(gc, "log_softmax", {a23, b23}, [](Tape& t, const auto& x) {
    return t.sum(t.mul(t.log_softmax(x[0]), x[1]));
  });

  const std::vector<std::uint8_t> mask = {1, 0, 0, 1, 0, 1};
  check_op(gc, "masked_fill", {a23, b23}, [mask](Tape& t, const auto& x) {
    return t.sum(t.mul(t.softmax(t.masked_fill(x[0], mask, kMaskValue)), x[1]));
  });
  check_op(gc, "gather_rows", {c43, random_tensor({3, 3}, rng, -1.0, 1.0)},
           [](Tape& t, const auto& x) {
             return t.sum(t.mul(t.gather_rows(x[0], {2, 0, 2}), x[1]));
           });
  check_op(gc, "concat",
           {a23, random_tensor({2, 2}, rng, -1.0, 1.0),
            random_tensor({2, 5}, rng, -1.0, 1.0)},
           [](Tape& t, const auto& x) {
             return t.sum(t.mul(t.concat({x[0], x[1]}), x[2]));
           });
  check_op(gc, "cosine_similarity",
           {random_tensor({4}, rng, 0.2, 1.0), random_tensor({4}, rng, -1.0,
                                                             -0.2)},
           [](Tape& t, const auto& x) {
             return t.cosine_similarity(x[0], x[1]);
           });
  check_op(gc, "rms_norm",
           {a23, random_tensor({3}, rng, 0.5, 1.5),
            random_tensor({3}, rng, -0.5, 0.5), b23},
           [](Tape& t, const auto& x) {
             return t.sum(t.mul(t.rms_norm(x[0], x[1], x[2]), x[3]));
           });
}

// Central difference of a scalar function of the whole parameter set,
// compared tensor by tensor.
double fd_params_ratio(const ParamSet& params, const GradMap& bp,
                       const std::function<double(const ParamSet&)>& f) {
  double worst = 0.0;
  ParamSet probe = params;
  for (const auto& [name, t] : params.tensors) {
    Tensor fd = Tensor::zeros(t.shape);
    Tensor& slot = probe.tensors.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = slot.data[i];
      slot.data[i] = keep + kEps;
      const double up = f(probe);
      slot.data[i] = keep - kEps;
      const double down = f(probe);
      slot.data[i] = keep;
      fd.data[i] = (up - down) / (2.0 * kEps);
    }
    auto it = bp.find(name);
    const Tensor zero = Tensor::zeros(t.shape);
    worst = std::max(worst, ratio_of(it == bp.end() ? zero : it->second, fd));
  }
  return worst;
}

double replay_ll(const ParamSet& params, const Instance& inst,
                 const std::vector<int>& seq) {
  Tape tape;
  PolicyContext ctx = make_context(tape, params, inst);
  return rollout(ctx, DecodeMode::kGreedy, nullptr, -1, &seq).log_likelihood;
}

void check_rollout_ll(GradCheck& gc, Task task, Rng& rng) {
  const ParamSet params =
      init_params(task, 8, 2, 1, 16, rng.next_u64());
  const Instance inst = generate(task, 6, rng.next_u64());
  Rng sampler(rng.next_u64());

  Tape tape;
  PolicyContext ctx = make_context(tape, params, inst);
  RolloutResult r = rollout(ctx, DecodeMode::kSample, &sampler);
  GradMap bp = tape.backward(r.ll);

  const std::vector<int> seq = r.sequence;
  const double ratio = fd_params_ratio(params, bp, [&](const ParamSet& p) {
    return replay_ll(p, inst, seq);
  });
  push(gc, "rollout_ll_" + task_name(task), ratio);
}

void check_loss_inv(GradCheck& gc, Rng& rng) {
  const ParamSet params = init_params(Task::kTsp, 8, 2, 1, 16, rng.next_u64());
  const Instance inst = generate(Task::kTsp, 6, rng.next_u64());
  Rng qrng(rng.next_u64());
  const Orthogonal2 q = sample_orthogonal(qrng);

  InvResult inv = loss_inv(params, inst, q);
  const double ratio = fd_params_ratio(params, inv.grads, [&](const ParamSet& p) {
    return loss_inv(p, inst, q).value;
  });
  push(gc, "loss_inv", ratio);
}

void check_grad_ss(GradCheck& gc, Rng& rng) {
  const ParamSet params = init_params(Task::kTsp, 8, 2, 1, 16, rng.next_u64());
  const Instance inst = generate(Task::kTsp, 6, rng.next_u64());
  Rng roll(rng.next_u64());
  const std::size_t K = 3;
  GradEstimate est = grad_ss(params, inst, K, roll);

  const double ratio = fd_params_ratio(params, est.grads, [&](const ParamSet& p) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      s += est.advantages[k] * replay_ll(p, inst, est.sequences[k]);
    return -s / double(K);
  });
  push(gc, "grad_ss_surrogate", ratio);
}

void check_grad_ps(GradCheck& gc, Rng& rng) {
  const ParamSet params = init_params(Task::kTsp, 8, 2, 1, 16, rng.next_u64());
  const Instance inst = generate(Task::kTsp, 6, rng.next_u64());
  Rng roll(rng.next_u64());
  const std::size_t L = 2, K = 2;
  GradEstimate est = grad_ps(params, inst, L, K, roll);

  std::vector<Instance> views;
  for (std::size_t l = 0; l < L; ++l)
    views.push_back(transform(inst, est.transforms[l]));
  const double ratio = fd_params_ratio(params, est.grads, [&](const ParamSet& p) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < K; ++k)
        s += est.advantages[l * K + k] *
             replay_ll(p, views[l], est.sequences[l * K + k]);
    return -s / double(L * K);
  });
  push(gc, "grad_ps_surrogate", ratio);
}

}  // namespace

GradCheck run_gradcheck(std::uint64_t seed) {
  GradCheck gc;
  Rng rng(seed);
  check_ops(gc, rng);
  check_rollout_ll(gc, Task::kTsp, rng);
  check_rollout_ll(gc, Task::kCvrp, rng);
  check_loss_inv(gc, rng);
  check_grad_ss(gc, rng);
  check_grad_ps(gc, rng);

  gc.pass = true;
  for (const GradCheck::Entry& e : gc.entries) {
    gc.worst = std::max(gc.worst, e.max_ratio);
    gc.pass = gc.pass && e.pass;
  }
  return gc;
}

std::string gradcheck_text(const GradCheck& gc) {
  std::string out;
  char buf[128];
  for (const GradCheck::Entry& e : gc.entries) {
    std::snprintf(buf, sizeof buf, "%-20s %s  max_ratio %.3g\n",
                  e.name.c_str(), e.pass ? "pass" : "FAIL", e.max_ratio);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s  worst %.3g  tolerance %.0e\n",
                gc.pass ? "pass" : "FAIL", gc.worst, 1e-4);
  out += buf;
  return out;
}

}  // namespace snco
