#include "snco/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace snco {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

[[noreturn]] void fail(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty() || shape.size() > 2)
    fail("Tensor", "rank must be 1 or 2, got rank " +
                       std::to_string(shape.size()));
  for (std::size_t e : shape)
    if (e == 0) fail("Tensor", "zero extent in shape");
  if (product(shape) != data.size())
    fail("Tensor", "shape " + std::to_string(product(shape)) +
                       " entries vs " + std::to_string(data.size()) +
                       " data values");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::vector<double> d(product(shape), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::vector<double> d(product(shape), v);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor({r, c}, std::move(v));
}

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i)
    os << (i ? "," : "") << t.shape[i];
  os << "]";
  return os.str();
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(Tensor value, std::string name) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

namespace {

enum class Broadcast { kSame, kRow, kScalar };

Broadcast binary_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  fail(op, "incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Broadcast mode = binary_mode("add", ta, tb);
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.value = ta;
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    double rhs = mode == Broadcast::kSame ? tb.data[i]
                 : mode == Broadcast::kScalar ? tb.data[0]
                                              : tb.data[i % cols];
    n.value.data[i] += rhs;
  }
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Broadcast mode = binary_mode("sub", ta, tb);
  Node n;
  n.op = Op::kSub;
  n.inputs = {a, b};
  n.value = ta;
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    double rhs = mode == Broadcast::kSame ? tb.data[i]
                 : mode == Broadcast::kScalar ? tb.data[0]
                                              : tb.data[i % cols];
    n.value.data[i] -= rhs;
  }
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Broadcast mode = binary_mode("mul", ta, tb);
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.value = ta;
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    double rhs = mode == Broadcast::kSame ? tb.data[i]
                 : mode == Broadcast::kScalar ? tb.data[0]
                                              : tb.data[i % cols];
    n.value.data[i] *= rhs;
  }
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols() != tb.rows())
    fail("matmul", "incompatible shapes " + shape_str(ta) + " x " +
                       shape_str(tb));
  const std::size_t m = ta.rows(), k = ta.cols(), p = tb.cols();
  Node n;
  n.op = Op::kMatmul;
  n.inputs = {a, b};
  n.value = Tensor::zeros({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < k; ++h) {
      const double aih = ta.data[i * k + h];
      if (aih == 0.0) continue;
      const double* brow = &tb.data[h * p];
      double* orow = &n.value.data[i * p];
      for (std::size_t j = 0; j < p; ++j) orow[j] += aih * brow[j];
    }
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols() != tb.cols())
    fail("matmul_nt", "incompatible shapes " + shape_str(ta) + " x " +
                          shape_str(tb) + "^T");
  const std::size_t m = ta.rows(), k = ta.cols(), p = tb.rows();
  Node n;
  n.op = Op::kMatmulNt;
  n.inputs = {a, b};
  n.value = Tensor::zeros({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double* arow = &ta.data[i * k];
      const double* brow = &tb.data[j * k];
      double acc = 0.0;
      for (std::size_t h = 0; h < k; ++h) acc += arow[h] * brow[h];
      n.value.data[i * p + j] = acc;
    }
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Tape::Id Tape::tanh_(Id a) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

Tape::Id Tape::exp_(Id a) {
  Node n;
  n.op = Op::kExp;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = std::exp(v);
  return push(std::move(n));
}

Tape::Id Tape::log_(Id a) {
  Node n;
  n.op = Op::kLog;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) {
    if (v <= 0.0)
      throw std::domain_error("log: non-positive input " + std::to_string(v));
    v = std::log(v);
  }
  return push(std::move(n));
}

Tape::Id Tape::sum(Id a) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {a};
  double acc = 0.0;
  for (double v : value(a).data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Tape::Id Tape::mean(Id a) {
  Node n;
  n.op = Op::kMean;
  n.inputs = {a};
  double acc = 0.0;
  for (double v : value(a).data) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(value(a).numel()));
  return push(std::move(n));
}

Tape::Id Tape::mean_rows(Id a) {
  const Tensor& ta = value(a);
  const std::size_t m = ta.rows(), c = ta.cols();
  Node n;
  n.op = Op::kMeanRows;
  n.inputs = {a};
  n.value = Tensor::zeros({1, c});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) n.value.data[j] += ta.data[i * c + j];
  for (double& v : n.value.data) v /= static_cast<double>(m);
  return push(std::move(n));
}

Tape::Id Tape::softmax(Id a) {
  const Tensor& ta = value(a);
  const std::size_t m = ta.rows(), c = ta.cols();
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a};
  n.value = ta;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &n.value.data[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  return push(std::move(n));
}

Tape::Id Tape::log_softmax(Id a) {
  const Tensor& ta = value(a);
  const std::size_t m = ta.rows(), c = ta.cols();
  Node n;
  n.op = Op::kLogSoftmax;
  n.inputs = {a};
  n.value = ta;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &n.value.data[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return push(std::move(n));
}

Tape::Id Tape::masked_fill(Id a, const std::vector<std::uint8_t>& fill,
                           double v) {
  const Tensor& ta = value(a);
  if (fill.size() != ta.numel())
    fail("masked_fill", "mask length " + std::to_string(fill.size()) +
                            " vs tensor " + shape_str(ta));
  Node n;
  n.op = Op::kMaskedFill;
  n.inputs = {a};
  n.value = ta;
  n.mask = fill;
  n.c = v;
  for (std::size_t i = 0; i < fill.size(); ++i)
    if (fill[i]) n.value.data[i] = v;
  return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id a, std::vector<std::size_t> rows) {
  const Tensor& ta = value(a);
  const std::size_t c = ta.cols();
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a};
  n.value = Tensor::zeros({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= ta.rows())
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                              " out of range for " + shape_str(ta));
    std::copy_n(&ta.data[rows[i] * c], c, &n.value.data[i * c]);
  }
  n.idx = std::move(rows);
  return push(std::move(n));
}

Tape::Id Tape::concat(const std::vector<Id>& parts) {
  if (parts.empty()) fail("concat", "no inputs");
  const std::size_t m = value(parts[0]).rows();
  std::size_t total = 0;
  for (Id p : parts) {
    if (value(p).rows() != m)
      fail("concat", "row mismatch " + shape_str(value(parts[0])) + " vs " +
                         shape_str(value(p)));
    total += value(p).cols();
  }
  Node n;
  n.op = Op::kConcat;
  n.inputs = parts;
  n.value = Tensor::zeros({m, total});
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor& tp = value(p);
    const std::size_t c = tp.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&tp.data[i * c], c, &n.value.data[i * total + off]);
    off += c;
  }
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a};
  n.value = value(a);
  n.c = c;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

Tape::Id Tape::cosine_similarity(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.numel() != tb.numel())
    fail("cosine_similarity",
         "length mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    dot += ta.data[i] * tb.data[i];
    na += ta.data[i] * ta.data[i];
    nb += tb.data[i] * tb.data[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::domain_error("cosine_similarity: zero-norm input vector");
  Node n;
  n.op = Op::kCosine;
  n.inputs = {a, b};
  // One sqrt over the product: identical inputs land on exactly 1.0.
  n.value = Tensor::scalar(dot / std::sqrt(na * nb));
  return push(std::move(n));
}

namespace {
constexpr double kRmsEps = 1e-12;
}

Tape::Id Tape::rms_norm(Id x, Id gain, Id bias) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  const std::size_t m = tx.rows(), c = tx.cols();
  if (tg.rows() != 1 || tg.cols() != c || tb.rows() != 1 || tb.cols() != c)
    fail("rms_norm", "gain/bias must be [1," + std::to_string(c) + "], got " +
                         shape_str(tg) + " and " + shape_str(tb));
  Node n;
  n.op = Op::kRmsNorm;
  n.inputs = {x, gain, bias};
  n.value = Tensor::zeros({m, c});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &tx.data[i * c];
    double ms = 0.0;
    for (std::size_t j = 0; j < c; ++j) ms += row[j] * row[j];
    const double r = std::sqrt(ms / static_cast<double>(c) + kRmsEps);
    for (std::size_t j = 0; j < c; ++j)
      n.value.data[i * c + j] = (row[j] / r) * tg.data[j] + tb.data[j];
  }
  return push(std::move(n));
}

void Tape::accumulate(std::vector<Tensor>& grads, std::vector<bool>& touched,
                      Id target, const Tensor& g) const {
  if (!touched[target]) {
    grads[target] = g;
    touched[target] = true;
    return;
  }
  Tensor& acc = grads[target];
  for (std::size_t i = 0; i < acc.numel(); ++i) acc.data[i] += g.data[i];
}

void Tape::backward_node(Id id, const Tensor& g, std::vector<Tensor>& grads,
                         std::vector<bool>& touched) const {
  const Node& n = node(id);
  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kAdd:
    case Op::kSub: {
      const double sign = n.op == Op::kSub ? -1.0 : 1.0;
      accumulate(grads, touched, n.inputs[0], g);
      const Tensor& tb = value(n.inputs[1]);
      if (tb.same_shape(n.value)) {
        if (sign > 0) {
          accumulate(grads, touched, n.inputs[1], g);
        } else {
          Tensor gb = g;
          for (double& v : gb.data) v = -v;
          accumulate(grads, touched, n.inputs[1], gb);
        }
      } else {
        Tensor gb = Tensor::zeros(tb.shape);
        const std::size_t cols = n.value.cols();
        for (std::size_t i = 0; i < g.numel(); ++i)
          gb.data[tb.numel() == 1 ? 0 : i % cols] += sign * g.data[i];
        accumulate(grads, touched, n.inputs[1], gb);
      }
      return;
    }
    case Op::kMul: {
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const std::size_t cols = ta.cols();
      Tensor ga = Tensor::zeros(ta.shape);
      Tensor gb = Tensor::zeros(tb.shape);
      const bool same = tb.same_shape(ta);
      const bool scalar = !same && tb.numel() == 1;
      for (std::size_t i = 0; i < ta.numel(); ++i) {
        const std::size_t bi = same ? i : scalar ? 0 : i % cols;
        ga.data[i] = g.data[i] * tb.data[bi];
        gb.data[bi] += g.data[i] * ta.data[i];
      }
      accumulate(grads, touched, n.inputs[0], ga);
      accumulate(grads, touched, n.inputs[1], gb);
      return;
    }
    case Op::kMatmul: {
      // y = A B: dA = g B^T, dB = A^T g
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const std::size_t m = ta.rows(), k = ta.cols(), p = tb.cols();
      Tensor ga = Tensor::zeros(ta.shape);
      Tensor gb = Tensor::zeros(tb.shape);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t h = 0; h < k; ++h) {
          const double* grow = &g.data[i * p];
          const double* brow = &tb.data[h * p];
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
          ga.data[i * k + h] = acc;
        }
      for (std::size_t h = 0; h < k; ++h)
        for (std::size_t i = 0; i < m; ++i) {
          const double aih = ta.data[i * k + h];
          if (aih == 0.0) continue;
          const double* grow = &g.data[i * p];
          double* brow = &gb.data[h * p];
          for (std::size_t j = 0; j < p; ++j) brow[j] += aih * grow[j];
        }
      accumulate(grads, touched, n.inputs[0], ga);
      accumulate(grads, touched, n.inputs[1], gb);
      return;
    }
    case Op::kMatmulNt: {
      // y = A B^T: dA = g B, dB = g^T A
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const std::size_t m = ta.rows(), k = ta.cols(), p = tb.rows();
      Tensor ga = Tensor::zeros(ta.shape);
      Tensor gb = Tensor::zeros(tb.shape);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
          const double gij = g.data[i * p + j];
          if (gij == 0.0) continue;
          const double* brow = &tb.data[j * k];
          const double* arow = &ta.data[i * k];
          double* garow = &ga.data[i * k];
          double* gbrow = &gb.data[j * k];
          for (std::size_t h = 0; h < k; ++h) {
            garow[h] += gij * brow[h];
            gbrow[h] += gij * arow[h];
          }
        }
      accumulate(grads, touched, n.inputs[0], ga);
      accumulate(grads, touched, n.inputs[1], gb);
      return;
    }
    case Op::kRelu: {
      const Tensor& tx = value(n.inputs[0]);
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        if (tx.data[i] <= 0.0) ga.data[i] = 0.0;
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kTanh: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        ga.data[i] *= 1.0 - n.value.data[i] * n.value.data[i];
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kExp: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        ga.data[i] *= n.value.data[i];
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kLog: {
      const Tensor& tx = value(n.inputs[0]);
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] /= tx.data[i];
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kSum: {
      const Tensor& tx = value(n.inputs[0]);
      accumulate(grads, touched, n.inputs[0],
                 Tensor::full(tx.shape, g.data[0]));
      return;
    }
    case Op::kMean: {
      const Tensor& tx = value(n.inputs[0]);
      accumulate(grads, touched, n.inputs[0],
                 Tensor::full(tx.shape,
                              g.data[0] / static_cast<double>(tx.numel())));
      return;
    }
    case Op::kMeanRows: {
      const Tensor& tx = value(n.inputs[0]);
      const std::size_t m = tx.rows(), c = tx.cols();
      Tensor ga = Tensor::zeros(tx.shape);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ga.data[i * c + j] = g.data[j] / static_cast<double>(m);
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kSoftmax: {
      const std::size_t m = n.value.rows(), c = n.value.cols();
      Tensor ga = Tensor::zeros(n.value.shape);
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = &n.value.data[i * c];
        const double* gr = &g.data[i * c];
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < c; ++j)
          ga.data[i * c + j] = y[j] * (gr[j] - dot);
      }
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kLogSoftmax: {
      const std::size_t m = n.value.rows(), c = n.value.cols();
      Tensor ga = Tensor::zeros(n.value.shape);
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = &n.value.data[i * c];
        const double* gr = &g.data[i * c];
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += gr[j];
        for (std::size_t j = 0; j < c; ++j)
          ga.data[i * c + j] = gr[j] - std::exp(y[j]) * gsum;
      }
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kMaskedFill: {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        if (n.mask[i]) ga.data[i] = 0.0;
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kGatherRows: {
      const Tensor& tx = value(n.inputs[0]);
      const std::size_t c = tx.cols();
      Tensor ga = Tensor::zeros(tx.shape);
      for (std::size_t i = 0; i < n.idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
          ga.data[n.idx[i] * c + j] += g.data[i * c + j];
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kConcat: {
      const std::size_t m = n.value.rows(), total = n.value.cols();
      std::size_t off = 0;
      for (Id p : n.inputs) {
        const Tensor& tp = value(p);
        const std::size_t c = tp.cols();
        Tensor gp = Tensor::zeros(tp.shape);
        for (std::size_t i = 0; i < m; ++i)
          std::copy_n(&g.data[i * total + off], c, &gp.data[i * c]);
        accumulate(grads, touched, p, gp);
        off += c;
      }
      return;
    }
    case Op::kScale: {
      Tensor ga = g;
      for (double& v : ga.data) v *= n.c;
      accumulate(grads, touched, n.inputs[0], ga);
      return;
    }
    case Op::kCosine: {
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      double dot = 0.0, na2 = 0.0, nb2 = 0.0;
      for (std::size_t i = 0; i < ta.numel(); ++i) {
        dot += ta.data[i] * tb.data[i];
        na2 += ta.data[i] * ta.data[i];
        nb2 += tb.data[i] * tb.data[i];
      }
      const double denom = std::sqrt(na2 * nb2);
      const double s = dot / denom;
      const double g0 = g.data[0];
      Tensor ga = Tensor::zeros(ta.shape);
      Tensor gb = Tensor::zeros(tb.shape);
      for (std::size_t i = 0; i < ta.numel(); ++i) {
        ga.data[i] = g0 * (tb.data[i] / denom - s * ta.data[i] / na2);
        gb.data[i] = g0 * (ta.data[i] / denom - s * tb.data[i] / nb2);
      }
      accumulate(grads, touched, n.inputs[0], ga);
      accumulate(grads, touched, n.inputs[1], gb);
      return;
    }
    case Op::kRmsNorm: {
      const Tensor& tx = value(n.inputs[0]);
      const Tensor& tg = value(n.inputs[1]);
      const std::size_t m = tx.rows(), c = tx.cols();
      Tensor gx = Tensor::zeros(tx.shape);
      Tensor ggain = Tensor::zeros(tg.shape);
      Tensor gbias = Tensor::zeros(tg.shape);
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = &tx.data[i * c];
        const double* gr = &g.data[i * c];
        double ms = 0.0;
        for (std::size_t j = 0; j < c; ++j) ms += row[j] * row[j];
        const double r = std::sqrt(ms / static_cast<double>(c) + kRmsEps);
        double tdotx = 0.0;  // sum_j (g_j * gain_j) * x_j
        for (std::size_t j = 0; j < c; ++j) tdotx += gr[j] * tg.data[j] * row[j];
        const double r3n = r * r * r * static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
          gx.data[i * c + j] =
              gr[j] * tg.data[j] / r - row[j] * tdotx / r3n;
          ggain.data[j] += gr[j] * row[j] / r;
          gbias.data[j] += gr[j];
        }
      }
      accumulate(grads, touched, n.inputs[0], gx);
      accumulate(grads, touched, n.inputs[1], ggain);
      accumulate(grads, touched, n.inputs[2], gbias);
      return;
    }
  }
}

void Tape::sweep(Id seed, std::vector<Tensor>& grads,
                 std::vector<bool>& touched) const {
  if (node(seed).value.numel() != 1)
    throw std::invalid_argument("backward: seed must be scalar, got shape " +
                                shape_str(node(seed).value));
  grads.assign(nodes_.size(), Tensor{});
  touched.assign(nodes_.size(), false);
  grads[seed] = Tensor::scalar(1.0);
  touched[seed] = true;
  for (Id id = seed; id >= 0; --id) {
    if (!touched[id]) continue;
    backward_node(id, grads[id], grads, touched);
  }
}

std::vector<Tensor> Tape::backward_all(Id seed) const {
  std::vector<Tensor> grads;
  std::vector<bool> touched;
  sweep(seed, grads, touched);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!touched[i]) grads[i] = Tensor::zeros(nodes_[i].value.shape);
  return grads;
}

GradMap Tape::backward(Id seed) const {
  std::vector<Tensor> grads;
  std::vector<bool> touched;
  sweep(seed, grads, touched);
  GradMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name.empty()) continue;
    const Tensor& g =
        touched[i] ? grads[i] : (grads[i] = Tensor::zeros(nodes_[i].value.shape));
    auto [it, inserted] = out.emplace(nodes_[i].name, g);
    if (!inserted) {
      // Same parameter registered as several leaves: sum contributions.
      for (std::size_t j = 0; j < it->second.numel(); ++j)
        it->second.data[j] += g.data[j];
    }
  }
  return out;
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("finite_difference_grad: eps must be > 0");
  Tensor grad = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe.data[i] = x.data[i] + eps;
    const double fp = f(probe);
    probe.data[i] = x.data[i] - eps;
    const double fm = f(probe);
    probe.data[i] = x.data[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error(
          "finite_difference_grad: non-finite function value at probe " +
          std::to_string(i));
    grad.data[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace snco
