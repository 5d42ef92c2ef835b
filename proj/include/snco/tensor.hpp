#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace snco {

// Dense row-major tensor of 64-bit floats, rank 1 or 2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);  // shape {1, n}
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  // Rank-1 tensors are treated as a single row by every 2-D operation.
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : shape[0]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const Tensor& t);

// Gradients keyed by parameter (named-leaf) name.
using GradMap = std::map<std::string, Tensor>;

// Reverse-mode autodiff tape. Nodes are appended in creation order, which is
// a topological order of the DAG, so backward() is a single reverse sweep.
// Single-writer: concurrent mutation of one tape is not allowed; distinct
// tapes over shared read-only inputs may run in parallel.
class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;

  // Leaves. Named leaves are parameters and appear in backward()'s GradMap.
  Id leaf(Tensor value, std::string name = {});
  Id constant(Tensor value) { return leaf(std::move(value)); }

  // Elementwise binary ops. The right operand may be a scalar or a row
  // vector matching the left operand's columns; no other broadcasting.
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);

  Id matmul(Id a, Id b);     // (m,k) x (k,n) -> (m,n)
  Id matmul_nt(Id a, Id b);  // (m,k) x (n,k)^T -> (m,n)

  Id relu(Id a);
  Id tanh_(Id a);
  Id exp_(Id a);
  Id log_(Id a);  // domain error on any non-positive entry

  Id sum(Id a);   // scalar
  Id mean(Id a);  // scalar
  Id mean_rows(Id a);  // columnwise mean, (m,n) -> (1,n)

  // Rowwise over the last axis.
  Id softmax(Id a);
  Id log_softmax(Id a);

  // Replace entries where fill[i] != 0 with `value`; gradient is blocked
  // through filled positions.
  Id masked_fill(Id a, const std::vector<std::uint8_t>& fill, double value);

  Id gather_rows(Id a, std::vector<std::size_t> rows);
  Id concat(const std::vector<Id>& parts);  // along last axis, equal rows
  Id scale(Id a, double c);
  Id cosine_similarity(Id a, Id b);  // flat vectors, scalar output

  // Rowwise y = (x / rms(x)) * gain + bias with rms over the last axis.
  Id rms_norm(Id x, Id gain, Id bias);

  // Stable for the tape's lifetime: nodes live in a deque, so pushing more
  // ops never invalidates the reference.
  const Tensor& value(Id id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar seed. Named leaves reachable from the seed
  // get their gradient; named leaves on the tape but unreachable get zeros.
  GradMap backward(Id seed) const;

  // Per-node gradients (tests and diagnostics).
  std::vector<Tensor> backward_all(Id seed) const;

  void clear() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kAdd, kSub, kMul, kMatmul, kMatmulNt, kRelu, kTanh, kExp, kLog,
    kSum, kMean, kMeanRows, kSoftmax, kLogSoftmax, kMaskedFill, kGatherRows,
    kConcat, kScale, kCosine, kRmsNorm,
  };

  struct Node {
    Op op = Op::kLeaf;
    std::vector<Id> inputs;
    Tensor value;
    std::string name;                 // named leaf only
    double c = 0.0;                   // scale factor / fill value
    std::vector<std::uint8_t> mask;   // masked_fill
    std::vector<std::size_t> idx;     // gather_rows
  };

  Id push(Node n);
  const Node& node(Id id) const { return nodes_[id]; }
  void sweep(Id seed, std::vector<Tensor>& grads,
             std::vector<bool>& touched) const;
  void accumulate(std::vector<Tensor>& grads, std::vector<bool>& touched,
                  Id target, const Tensor& g) const;
  void backward_node(Id id, const Tensor& g, std::vector<Tensor>& grads,
                     std::vector<bool>& touched) const;

  std::deque<Node> nodes_;
};

// Central-difference gradient (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) of a
// scalar function; the independent oracle for backward().
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps);

// Large negative logit used to mask out illegal positions before softmax;
// finite so downstream values stay finite.
inline constexpr double kMaskValue = -1e9;

}  // namespace snco
