#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "dptbench/tensor.hpp"

namespace dptbench::ad {

class Graph;

// Lightweight handle to a node in a Graph.
struct Value {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& tensor() const;
  Index rows() const { return tensor().rows(); }
  Index cols() const { return tensor().cols(); }
};

enum class Op {
  kParam,
  kConstant,
  kGatherRows,
  kAdd,
  kAddRow,
  kMatmul,
  kMatmulNT,
  kAffine,
  kMulElem,
  kLayerNorm,
  kGelu,
  kSoftmaxRows,
  kColBlock,
  kConcatCols,
  kSigmoid,
  kLog,
  kBce,
  kSum,
  kMean,
};

struct Node {
  Op op;
  std::vector<int> inputs;
  Tensor out;
  // Op-specific attributes.
  std::vector<Index> indices;  // kGatherRows
  Index offset = 0;            // kColBlock
  Index width = 0;             // kColBlock
  Scalar a = 0.0;              // kAffine scale, kLayerNorm eps, kBce eps
  Scalar b = 0.0;              // kAffine shift
  Tensor aux;                  // kBce targets
  const Tensor* bound = nullptr;  // kParam external storage
};

// Forward pass is eager: every node caches its output Tensor at construction,
// so node ids are already in topological order. Nodes are immutable once
// created; backward() walks ids in reverse exactly once.
class Graph {
 public:
  // Leaf bound to caller-owned storage. The tensor must outlive the graph and
  // stay unmodified while the graph is in use. Repeated calls with the same
  // address return the same node, so gradients accumulate in one place.
  Value param(const Tensor& t);

  // Leaf owning a copy of the given tensor.
  Value constant(Tensor t);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Node id of the parameter leaf bound to `t`, or -1 if absent.
  int find_param(const Tensor* t) const;

  friend Value gather_rows(Value x, std::vector<Index> rows);
  friend Value add(Value x, Value y);
  friend Value add_row(Value x, Value row);
  friend Value matmul(Value a, Value b);
  friend Value matmul_nt(Value a, Value b);
  friend Value affine(Value x, Scalar scale, Scalar shift);
  friend Value mul(Value x, Value y);
  friend Value layer_norm(Value x, Value gain, Value bias, Scalar eps);
  friend Value gelu(Value x);
  friend Value softmax_rows(Value x);
  friend Value col_block(Value x, Index offset, Index width);
  friend Value concat_cols(std::span<const Value> parts);
  friend Value sigmoid(Value x);
  friend Value log_elem(Value x);
  friend Value bce(Value probs, Tensor targets, Scalar eps);
  friend Value sum(Value x);
  friend Value mean(Value x);
  friend std::vector<Tensor> backward(const Graph& g, Value loss);

 private:
  Value emit(Node n);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> param_ids_;
};

Value gather_rows(Value x, std::vector<Index> rows);
Value add(Value x, Value y);
Value add_row(Value x, Value row);  // broadcast a (1,c) row over all rows of x
Value matmul(Value a, Value b);
Value matmul_nt(Value a, Value b);  // a * b^T
Value affine(Value x, Scalar scale, Scalar shift);
Value mul(Value x, Value y);
Value layer_norm(Value x, Value gain, Value bias, Scalar eps = 1e-5);
Value gelu(Value x);
Value softmax_rows(Value x);
Value col_block(Value x, Index offset, Index width);
Value concat_cols(std::span<const Value> parts);
Value sigmoid(Value x);
Value log_elem(Value x);
Value bce(Value probs, Tensor targets, Scalar eps = kBceEpsilon);
Value sum(Value x);
Value mean(Value x);

// Gradient of a scalar loss w.r.t. every node that feeds it, indexed by node
// id (nodes outside the loss's cone keep an empty Tensor). Deterministic:
// a pure reverse sweep over node ids with no reordering.
std::vector<Tensor> backward(const Graph& g, Value loss);

// backward() projected onto a parameter list: one gradient per entry, zeros
// where the parameter did not participate in the loss.
std::vector<Tensor> parameter_gradients(const Graph& g, Value loss,
                                        std::span<Tensor* const> params);

}  // namespace dptbench::ad
