#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "snco/rng.hpp"
#include "snco/tensor.hpp"

using snco::GradMap;
using snco::Rng;
using snco::Tape;
using snco::Tensor;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.5,
                   double hi = 1.5) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random values with |v| >= margin, for ops with a kink at zero.
Tensor rand_away_from_zero(Rng& rng, std::vector<std::size_t> shape,
                           double margin = 0.1) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) {
    double u = rng.uniform(margin, 1.5);
    v = rng.coin() ? u : -u;
  }
  return t;
}

using Builder = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

// Compares backward() against central differences for every input of a
// scalar-valued graph.
void check_grads(const Builder& build, const std::vector<Tensor>& xs,
                 double eps = 1e-5, double rtol = 1e-6, double atol = 1e-9) {
  Tape tape;
  std::vector<Tape::Id> ids;
  for (std::size_t i = 0; i < xs.size(); ++i)
    ids.push_back(tape.leaf(xs[i], "x" + std::to_string(i)));
  GradMap grads = tape.backward(build(tape, ids));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor fd = snco::finite_difference_grad(
        [&](const Tensor& xv) {
          Tape t2;
          std::vector<Tape::Id> ids2;
          for (std::size_t j = 0; j < xs.size(); ++j)
            ids2.push_back(t2.leaf(j == i ? xv : xs[j]));
          return t2.value(build(t2, ids2)).data[0];
        },
        xs[i], eps);
    const Tensor& an = grads.at("x" + std::to_string(i));
    REQUIRE(an.shape == xs[i].shape);
    for (std::size_t k = 0; k < fd.numel(); ++k) {
      const double a = an.data[k], b = fd.data[k];
      const double err = std::abs(a - b);
      const double bound = atol + rtol * std::max(std::abs(a), std::abs(b));
      CHECK_MESSAGE(err <= bound, "input ", i, " entry ", k, ": backward ", a,
                    " vs fd ", b);
    }
  }
}

// Weighted sum with fixed pseudorandom weights, to seed the reverse sweep
// with distinct per-entry gradients.
Tape::Id pin(Tape& t, Tape::Id y, std::uint64_t salt = 0) {
  Rng rng(0xC0FFEE ^ salt);
  Tensor w = rand_tensor(rng, t.value(y).shape, 0.25, 1.75);
  return t.sum(t.mul(y, t.constant(w)));
}

}  // namespace

TEST_CASE("tensor constructors and accessors") {
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6);
  Tensor r = Tensor::row({7, 8});
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 2);
  Tensor v({3}, {1, 2, 3});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 3);
  CHECK(Tensor::scalar(4.0).numel() == 1);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2, 2}, std::vector<double>(8, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("elementwise binary ops: values and gradients") {
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {4, 5});
    Tensor b = rand_tensor(rng, {4, 5});
    Tensor brow = rand_tensor(rng, {5});
    Tensor bs = rand_tensor(rng, {1});
    for (auto op : {0, 1, 2}) {
      auto apply = [op](Tape& t, Tape::Id x, Tape::Id y) {
        return op == 0 ? t.add(x, y) : op == 1 ? t.sub(x, y) : t.mul(x, y);
      };
      check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
        return pin(t, apply(t, xs[0], xs[1]), rep);
      }, {a, b});
      check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
        return pin(t, apply(t, xs[0], xs[1]), rep);
      }, {a, brow});
      check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
        return pin(t, apply(t, xs[0], xs[1]), rep);
      }, {a, bs});
    }
  }
}

TEST_CASE("broadcast values are correct") {
  Tape t;
  Tape::Id a = t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Tape::Id r = t.constant(Tensor::row({10, 20, 30}));
  Tape::Id s = t.constant(Tensor::scalar(100));
  const Tensor& ar = t.value(t.add(a, r));
  CHECK(ar.data == std::vector<double>{11, 22, 33, 14, 25, 36});
  const Tensor& as = t.value(t.sub(a, s));
  CHECK(as.data == std::vector<double>{-99, -98, -97, -96, -95, -94});
  const Tensor& mr = t.value(t.mul(a, r));
  CHECK(mr.data == std::vector<double>{10, 40, 90, 40, 100, 180});
}

TEST_CASE("matmul value and gradient") {
  Rng rng(22);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {4, 5});
    Tape t;
    const Tensor& y = t.value(t.matmul(t.constant(a), t.constant(b)));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
        CHECK(y.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
      }
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.matmul(xs[0], xs[1]), rep);
    }, {a, b});
  }
}

TEST_CASE("matmul_nt matches matmul with transposed operand") {
  Rng rng(23);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {5, 4});
    Tensor bt = Tensor::zeros({4, 5});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) bt.at(j, i) = b.at(i, j);
    Tape t;
    const Tensor& y1 = t.value(t.matmul_nt(t.constant(a), t.constant(b)));
    const Tensor& y2 = t.value(t.matmul(t.constant(a), t.constant(bt)));
    CHECK(y1.shape == y2.shape);
    for (std::size_t k = 0; k < y1.numel(); ++k) CHECK(y1.data[k] == y2.data[k]);
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.matmul_nt(xs[0], xs[1]), rep);
    }, {a, b});
  }
}

TEST_CASE("unary elementwise gradients") {
  Rng rng(33);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_away_from_zero(rng, {4, 5});
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.relu(xs[0]), rep);
    }, {x});
    Tensor x2 = rand_tensor(rng, {4, 5}, -2.0, 2.0);
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.tanh_(xs[0]), rep);
    }, {x2});
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.exp_(xs[0]), rep);
    }, {x2});
    Tensor xp = rand_tensor(rng, {4, 5}, 0.5, 3.0);
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.log_(xs[0]), rep);
    }, {xp});
  }
}

TEST_CASE("relu value") {
  Tape t;
  const Tensor& y = t.value(t.relu(t.constant(Tensor::row({-2, 0, 3}))));
  CHECK(y.data == std::vector<double>{0, 0, 3});
}

TEST_CASE("reductions: values and gradients") {
  Rng rng(44);
  Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tape t;
  CHECK(t.value(t.sum(t.constant(x))).data[0] == 21.0);
  CHECK(t.value(t.mean(t.constant(x))).data[0] == 3.5);
  const Tensor& mr = t.value(t.mean_rows(t.constant(x)));
  CHECK(mr.shape == std::vector<std::size_t>{1, 3});
  CHECK(mr.data == std::vector<double>{2.5, 3.5, 4.5});
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {4, 5});
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return tp.sum(xs[0]);
    }, {a});
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return tp.mean(xs[0]);
    }, {a});
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.mean_rows(xs[0]), rep);
    }, {a});
  }
}

TEST_CASE("softmax rows sum to one and match direct computation") {
  Rng rng(55);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_tensor(rng, {3, 6}, -4.0, 4.0);
    Tape t;
    const Tensor& y = t.value(t.softmax(t.constant(x)));
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0, z = 0.0;
      for (std::size_t j = 0; j < 6; ++j) z += std::exp(x.at(i, j));
      for (std::size_t j = 0; j < 6; ++j) {
        s += y.at(i, j);
        CHECK(y.at(i, j) ==
              doctest::Approx(std::exp(x.at(i, j)) / z).epsilon(1e-12));
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax and log_softmax gradients") {
  Rng rng(56);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_tensor(rng, {3, 6}, -3.0, 3.0);
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.softmax(xs[0]), rep);
    }, {x});
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return pin(t, t.log_softmax(xs[0]), rep);
    }, {x});
  }
}

TEST_CASE("log_softmax equals log of softmax and is stable at kMaskValue") {
  Rng rng(57);
  Tensor x = rand_tensor(rng, {2, 5}, -3.0, 3.0);
  Tape t;
  const Tensor& ls = t.value(t.log_softmax(t.constant(x)));
  const Tensor& sm = t.value(t.softmax(t.constant(x)));
  for (std::size_t k = 0; k < ls.numel(); ++k)
    CHECK(ls.data[k] == doctest::Approx(std::log(sm.data[k])).epsilon(1e-12));

  Tensor masked = Tensor::row({0.3, snco::kMaskValue, -0.7, snco::kMaskValue});
  Tape t2;
  const Tensor& p = t2.value(t2.softmax(t2.constant(masked)));
  CHECK(p.data[1] <= std::exp(-30.0));
  CHECK(p.data[3] <= std::exp(-30.0));
  CHECK(std::abs(p.data[0] + p.data[2] - 1.0) < 1e-12);
  const Tensor& lp = t2.value(t2.log_softmax(t2.constant(masked)));
  for (double v : lp.data) CHECK(std::isfinite(v));
  CHECK(std::abs(std::exp(lp.data[0]) + std::exp(lp.data[2]) - 1.0) < 1e-12);
}

TEST_CASE("picked log-probability gradient is softmax minus one-hot") {
  Tensor x = Tensor::row({0.5, -1.0, 2.0, 0.0});
  Tensor onehot = Tensor::row({0, 0, 1, 0});
  Tape t;
  Tape::Id xid = t.leaf(x, "x");
  Tape::Id ll = t.sum(t.mul(t.log_softmax(xid), t.constant(onehot)));
  GradMap g = t.backward(ll);
  const Tensor& p = t.value(t.softmax(t.constant(x)));
  for (std::size_t j = 0; j < 4; ++j) {
    double expect = onehot.data[j] - p.data[j];
    CHECK(g.at("x").data[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("masked_fill value and blocked gradient") {
  Rng rng(66);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_tensor(rng, {3, 4});
    std::vector<std::uint8_t> mask(12, 0);
    for (auto& m : mask) m = rng.coin() ? 1 : 0;
    Tape t;
    Tape::Id xid = t.leaf(x, "x");
    Tape::Id y = t.masked_fill(xid, mask, snco::kMaskValue);
    for (std::size_t k = 0; k < 12; ++k)
      CHECK(t.value(y).data[k] == (mask[k] ? snco::kMaskValue : x.data[k]));
    GradMap g = t.backward(pin(t, y, rep));
    for (std::size_t k = 0; k < 12; ++k)
      if (mask[k]) CHECK(g.at("x").data[k] == 0.0);
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.masked_fill(xs[0], mask, -3.0), rep);
    }, {x});
  }
}

TEST_CASE("gather_rows value, duplicates accumulate") {
  Rng rng(77);
  Tensor x = rand_tensor(rng, {5, 3});
  std::vector<std::size_t> idx = {4, 0, 2, 2};
  Tape t;
  const Tensor& y = t.value(t.gather_rows(t.constant(x), idx));
  REQUIRE(y.shape == std::vector<std::size_t>{4, 3});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(y.at(i, j) == x.at(idx[i], j));
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {5, 3});
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.gather_rows(xs[0], idx), rep);
    }, {a});
  }
}

TEST_CASE("concat value and gradients") {
  Rng rng(88);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {3, 2});
    Tensor b = rand_tensor(rng, {3, 4});
    Tensor c = rand_tensor(rng, {3, 1});
    Tape t;
    const Tensor& y =
        t.value(t.concat({t.constant(a), t.constant(b), t.constant(c)}));
    REQUIRE(y.shape == std::vector<std::size_t>{3, 7});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(y.at(i, 0) == a.at(i, 0));
      CHECK(y.at(i, 2) == b.at(i, 0));
      CHECK(y.at(i, 6) == c.at(i, 0));
    }
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.concat({xs[0], xs[1], xs[2]}), rep);
    }, {a, b, c});
  }
}

TEST_CASE("scale") {
  Rng rng(99);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_tensor(rng, {2, 6});
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.scale(xs[0], -2.718), rep);
    }, {a});
  }
  Tape t;
  CHECK(t.value(t.scale(t.constant(Tensor::row({2, -4})), 0.5)).data ==
        std::vector<double>{1, -2});
}

TEST_CASE("cosine_similarity values") {
  Tape t;
  Tensor a = Tensor::row({1, 0, 2});
  CHECK(t.value(t.cosine_similarity(t.constant(a), t.constant(a))).data[0] ==
        doctest::Approx(1.0).epsilon(1e-12));
  Tensor o1 = Tensor::row({1, 0});
  Tensor o2 = Tensor::row({0, 5});
  CHECK(t.value(t.cosine_similarity(t.constant(o1), t.constant(o2))).data[0] ==
        doctest::Approx(0.0).epsilon(1e-12));
  Tensor n = Tensor::row({-2, 0, -4});
  CHECK(t.value(t.cosine_similarity(t.constant(a), t.constant(n))).data[0] ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine_similarity gradient") {
  Rng rng(101);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor a = rand_away_from_zero(rng, {8}, 0.2);
    Tensor b = rand_away_from_zero(rng, {8}, 0.2);
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      return t.cosine_similarity(xs[0], xs[1]);
    }, {a, b});
  }
}

TEST_CASE("rms_norm value and gradient") {
  Rng rng(111);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_away_from_zero(rng, {4, 6}, 0.05);
    Tensor gain = rand_tensor(rng, {6}, 0.5, 1.5);
    Tensor bias = rand_tensor(rng, {6}, -0.5, 0.5);
    Tape t;
    const Tensor& y = t.value(
        t.rms_norm(t.constant(x), t.constant(gain), t.constant(bias)));
    for (std::size_t i = 0; i < 4; ++i) {
      double ms = 0.0;
      for (std::size_t j = 0; j < 6; ++j) ms += x.at(i, j) * x.at(i, j);
      double r = std::sqrt(ms / 6.0 + 1e-12);
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(y.at(i, j) == doctest::Approx(x.at(i, j) / r * gain.data[j] +
                                            bias.data[j]).epsilon(1e-12));
    }
    check_grads([&](Tape& tp, const std::vector<Tape::Id>& xs) {
      return pin(tp, tp.rms_norm(xs[0], xs[1], xs[2]), rep);
    }, {x, gain, bias});
  }
}

TEST_CASE("composite mlp graph against finite differences") {
  Rng rng(121);
  int done = 0;
  while (done < 10) {
    Tensor x = rand_tensor(rng, {4, 3});
    Tensor w1 = rand_tensor(rng, {3, 5});
    Tensor b1 = rand_tensor(rng, {5});
    Tensor w2 = rand_tensor(rng, {5, 2});
    Tensor b2 = rand_tensor(rng, {2});
    // Reject draws whose relu pre-activations sit close enough to the kink
    // for a finite-difference probe to cross it.
    double closest = 1e300;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double pre = b1.data[j];
        for (std::size_t k = 0; k < 3; ++k) pre += x.at(i, k) * w1.at(k, j);
        closest = std::min(closest, std::abs(pre));
      }
    if (closest < 1e-3) continue;
    ++done;
    check_grads([&](Tape& t, const std::vector<Tape::Id>& xs) {
      Tape::Id h = t.relu(t.add(t.matmul(xs[0], xs[1]), xs[2]));
      Tape::Id y = t.add(t.matmul(h, xs[3]), xs[4]);
      return t.mean(t.tanh_(y));
    }, {x, w1, b1, w2, b2});
  }
}

TEST_CASE("re-evaluating the same graph is bit-identical") {
  Rng rng(131);
  Tensor x = rand_tensor(rng, {3, 4});
  Tensor w = rand_tensor(rng, {4, 4});
  auto run = [&]() {
    Tape t;
    Tape::Id xid = t.leaf(x, "x");
    Tape::Id y = t.softmax(t.matmul(t.tanh_(xid), t.constant(w)));
    Tape::Id s = t.mean(y);
    GradMap g = t.backward(s);
    return std::make_pair(t.value(s).data[0], g.at("x").data);
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("unreachable named leaf gets zero gradient") {
  Tape t;
  Tape::Id used = t.leaf(Tensor::row({1, 2}), "used");
  t.leaf(Tensor::row({3, 4}), "unused");
  GradMap g = t.backward(t.sum(used));
  CHECK(g.at("used").data == std::vector<double>{1, 1});
  CHECK(g.at("unused").data == std::vector<double>{0, 0});
}

TEST_CASE("duplicate leaf name sums contributions") {
  Tensor w = Tensor::row({2, 3});
  Tape t;
  Tape::Id a = t.leaf(w, "w");
  Tape::Id b = t.leaf(w, "w");
  GradMap g = t.backward(t.sum(t.mul(a, b)));
  // d/dw sum(w*w) = 2w
  CHECK(g.at("w").data == std::vector<double>{4, 6});
}

TEST_CASE("shape and domain errors") {
  Tape t;
  Tape::Id a = t.constant(Tensor::matrix(3, 4, std::vector<double>(12, 1.0)));
  Tape::Id b = t.constant(Tensor::matrix(2, 4, std::vector<double>(8, 1.0)));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul_nt(a, t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}))),
                  std::invalid_argument);
  CHECK_THROWS_AS(t.log_(t.constant(Tensor::row({1.0, 0.0}))), std::domain_error);
  CHECK_THROWS_AS(t.log_(t.constant(Tensor::row({-1.0}))), std::domain_error);
  CHECK_THROWS_AS(t.cosine_similarity(t.constant(Tensor::row({0, 0})),
                                      t.constant(Tensor::row({1, 0}))),
                  std::domain_error);
  CHECK_THROWS_AS(t.masked_fill(a, std::vector<std::uint8_t>(5, 0), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(t.gather_rows(a, {0, 3}), std::out_of_range);
  CHECK_THROWS_AS(t.concat({a, b}), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}

TEST_CASE("error messages name the op and shapes") {
  Tape t;
  Tape::Id a = t.constant(Tensor::matrix(3, 4, std::vector<double>(12, 1.0)));
  Tape::Id b = t.constant(Tensor::matrix(2, 4, std::vector<double>(8, 1.0)));
  try {
    t.matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[3,4]") != std::string::npos);
    CHECK(msg.find("[2,4]") != std::string::npos);
  }
}

TEST_CASE("finite_difference_grad on a closed form") {
  // f(x) = sum(x^2), grad = 2x
  Tensor x = Tensor::row({1.5, -2.0, 0.25});
  Tensor g = snco::finite_difference_grad(
      [](const Tensor& v) {
        double s = 0.0;
        for (double d : v.data) s += d * d;
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(g.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-8));
}
