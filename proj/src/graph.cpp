#include "dptbench/graph.hpp"

#include <cmath>
#include <numbers>

namespace dptbench::ad {

namespace {

constexpr Scalar kInvSqrt2 = 0.7071067811865476;
constexpr Scalar kInvSqrt2Pi = 0.3989422804014327;

Scalar gelu_value(Scalar x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const Scalar pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

Scalar clamp_prob(Scalar s, Scalar eps) { return std::min(std::max(s, eps), 1.0 - eps); }

}  // namespace

const Tensor& Value::tensor() const { return graph->node(id).out; }

Value Graph::emit(Node n) {
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Graph::param(const Tensor& t) {
  if (auto it = param_ids_.find(&t); it != param_ids_.end()) return Value{this, it->second};
  Node n;
  n.op = Op::kParam;
  n.out = t;
  n.bound = &t;
  Value v = emit(std::move(n));
  param_ids_.emplace(&t, v.id);
  return v;
}

Value Graph::constant(Tensor t) {
  Node n;
  n.op = Op::kConstant;
  n.out = std::move(t);
  return emit(std::move(n));
}

int Graph::find_param(const Tensor* t) const {
  auto it = param_ids_.find(t);
  return it == param_ids_.end() ? -1 : it->second;
}

Value gather_rows(Value x, std::vector<Index> rows) {
  const Mat& src = x.tensor().mat();
  Mat out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= src.rows())
      throw ContractError("gather_rows: row index out of range");
    out.row(static_cast<Index>(i)) = src.row(rows[i]);
  }
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {x.id};
  n.indices = std::move(rows);
  n.out = Tensor(std::move(out));
  return x.graph->emit(std::move(n));
}

Value add(Value x, Value y) {
  if (!x.tensor().same_dims(y.tensor())) throw ContractError("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {x.id, y.id};
  n.out = Tensor(Mat(x.tensor().mat() + y.tensor().mat()));
  return x.graph->emit(std::move(n));
}

Value add_row(Value x, Value row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw ContractError("add_row: row must be (1, cols(x))");
  Node n;
  n.op = Op::kAddRow;
  n.inputs = {x.id, row.id};
  Mat out = x.tensor().mat();
  out.rowwise() += row.tensor().mat().row(0);
  n.out = Tensor(std::move(out));
  return x.graph->emit(std::move(n));
}

Value matmul(Value a, Value b) {
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dimensions differ");
  Node n;
  n.op = Op::kMatmul;
  n.inputs = {a.id, b.id};
  Mat out(a.rows(), b.cols());
  out.noalias() = a.tensor().mat() * b.tensor().mat();
  n.out = Tensor(std::move(out));
  return a.graph->emit(std::move(n));
}

Value matmul_nt(Value a, Value b) {
  if (a.cols() != b.cols()) throw ContractError("matmul_nt: inner dimensions differ");
  Node n;
  n.op = Op::kMatmulNT;
  n.inputs = {a.id, b.id};
  Mat out(a.rows(), b.rows());
  out.noalias() = a.tensor().mat() * b.tensor().mat().transpose();
  n.out = Tensor(std::move(out));
  return a.graph->emit(std::move(n));
}

Value affine(Value x, Scalar scale, Scalar shift) {
  Node n;
  n.op = Op::kAffine;
  n.inputs = {x.id};
  n.a = scale;
  n.b = shift;
  n.out = Tensor(Mat((x.tensor().mat().array() * scale + shift).matrix()));
  return x.graph->emit(std::move(n));
}

Value mul(Value x, Value y) {
  if (!x.tensor().same_dims(y.tensor())) throw ContractError("mul: shape mismatch");
  Node n;
  n.op = Op::kMulElem;
  n.inputs = {x.id, y.id};
  n.out = Tensor(Mat(x.tensor().mat().cwiseProduct(y.tensor().mat())));
  return x.graph->emit(std::move(n));
}

Value layer_norm(Value x, Value gain, Value bias, Scalar eps) {
  const Mat& src = x.tensor().mat();
  if (gain.rows() != 1 || gain.cols() != src.cols() || bias.rows() != 1 ||
      bias.cols() != src.cols())
    throw ContractError("layer_norm: gain/bias must be (1, cols(x))");
  Mat out(src.rows(), src.cols());
  const Scalar inv_d = 1.0 / static_cast<Scalar>(src.cols());
  for (Index r = 0; r < src.rows(); ++r) {
    const Scalar mu = src.row(r).mean();
    const Scalar var = (src.row(r).array() - mu).square().sum() * inv_d;
    const Scalar inv_std = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((src.row(r).array() - mu) * inv_std) * gain.tensor().mat().row(0).array() +
                 bias.tensor().mat().row(0).array();
  }
  Node n;
  n.op = Op::kLayerNorm;
  n.inputs = {x.id, gain.id, bias.id};
  n.a = eps;
  n.out = Tensor(std::move(out));
  return x.graph->emit(std::move(n));
}

Value gelu(Value x) {
  Node n;
  n.op = Op::kGelu;
  n.inputs = {x.id};
  n.out = Tensor(Mat(x.tensor().mat().unaryExpr([](Scalar v) { return gelu_value(v); })));
  return x.graph->emit(std::move(n));
}

Value softmax_rows(Value x) {
  const Mat& src = x.tensor().mat();
  Mat out(src.rows(), src.cols());
  for (Index r = 0; r < src.rows(); ++r) {
    const Scalar m = src.row(r).maxCoeff();
    out.row(r) = (src.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  Node n;
  n.op = Op::kSoftmaxRows;
  n.inputs = {x.id};
  n.out = Tensor(std::move(out));
  return x.graph->emit(std::move(n));
}

Value col_block(Value x, Index offset, Index width) {
  if (offset < 0 || width <= 0 || offset + width > x.cols())
    throw ContractError("col_block: block out of range");
  Node n;
  n.op = Op::kColBlock;
  n.inputs = {x.id};
  n.offset = offset;
  n.width = width;
  n.out = Tensor(Mat(x.tensor().mat().middleCols(offset, width)));
  return x.graph->emit(std::move(n));
}

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Value& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Node n;
  n.op = Op::kConcatCols;
  Index at = 0;
  for (const Value& p : parts) {
    out.middleCols(at, p.cols()) = p.tensor().mat();
    at += p.cols();
    n.inputs.push_back(p.id);
  }
  n.out = Tensor(std::move(out));
  return parts[0].graph->emit(std::move(n));
}

Value sigmoid(Value x) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {x.id};
  n.out = sigmoid(x.tensor());
  return x.graph->emit(std::move(n));
}

Value log_elem(Value x) {
  const Mat& src = x.tensor().mat();
  if ((src.array() <= 0.0).any()) throw InvalidValueError("log_elem: non-positive input");
  Node n;
  n.op = Op::kLog;
  n.inputs = {x.id};
  n.out = Tensor(Mat(src.array().log().matrix()));
  return x.graph->emit(std::move(n));
}

Value bce(Value probs, Tensor targets, Scalar eps) {
  if (!probs.tensor().same_dims(targets)) throw ContractError("bce: target shape mismatch");
  const Mat& p = probs.tensor().mat();
  const Mat& y = targets.mat();
  for (Index i = 0; i < y.size(); ++i) {
    const Scalar v = y(i / y.cols(), i % y.cols());
    if (v != 0.0 && v != 1.0) throw ContractError("bce: targets must be 0 or 1");
  }
  Mat out(p.rows(), p.cols());
  for (Index r = 0; r < p.rows(); ++r)
    for (Index c = 0; c < p.cols(); ++c) {
      const Scalar s = clamp_prob(p(r, c), eps);
      out(r, c) = -(y(r, c) * std::log(s)) - ((1.0 - y(r, c)) * std::log(1.0 - s));
    }
  Node n;
  n.op = Op::kBce;
  n.inputs = {probs.id};
  n.a = eps;
  n.aux = std::move(targets);
  n.out = Tensor(std::move(out));
  return probs.graph->emit(std::move(n));
}

Value sum(Value x) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {x.id};
  n.out = Tensor::scalar(x.tensor().mat().sum());
  return x.graph->emit(std::move(n));
}

Value mean(Value x) {
  Node n;
  n.op = Op::kMean;
  n.inputs = {x.id};
  n.out = Tensor::scalar(x.tensor().mat().mean());
  return x.graph->emit(std::move(n));
}

namespace {

// Accumulates `delta` into the gradient slot, allocating zeros on first use.
void accumulate(Tensor& slot, const Tensor& reference, const Mat& delta) {
  if (slot.size() == 0) slot = Tensor::zeros_like(reference);
  slot.mat() += delta;
}

}  // namespace

std::vector<Tensor> backward(const Graph& g, Value loss) {
  if (loss.graph != &g || loss.id < 0 || loss.id >= g.size())
    throw ContractError("backward: loss node does not belong to this graph");
  if (!g.node(loss.id).out.is_scalar())
    throw ContractError("backward: loss node must be scalar");

  std::vector<Tensor> grads(static_cast<std::size_t>(g.size()));
  grads[static_cast<std::size_t>(loss.id)] = Tensor::scalar(1.0);

  for (int id = loss.id; id >= 0; --id) {
    Tensor& gslot = grads[static_cast<std::size_t>(id)];
    if (gslot.size() == 0) continue;
    const Node& n = g.node(id);
    const Mat& go = gslot.mat();

    auto in = [&](std::size_t k) -> const Node& {
      return g.node(n.inputs[k]);
    };
    auto gin = [&](std::size_t k) -> Tensor& {
      return grads[static_cast<std::size_t>(n.inputs[k])];
    };

    switch (n.op) {
      case Op::kParam:
      case Op::kConstant:
        break;
      case Op::kGatherRows: {
        Mat d = Mat::Zero(in(0).out.rows(), in(0).out.cols());
        for (std::size_t i = 0; i < n.indices.size(); ++i)
          d.row(n.indices[i]) += go.row(static_cast<Index>(i));
        accumulate(gin(0), in(0).out, d);
        break;
      }
      case Op::kAdd:
        accumulate(gin(0), in(0).out, go);
        accumulate(gin(1), in(1).out, go);
        break;
      case Op::kAddRow: {
        accumulate(gin(0), in(0).out, go);
        accumulate(gin(1), in(1).out, go.colwise().sum());
        break;
      }
      case Op::kMatmul: {
        Mat da(in(0).out.rows(), in(0).out.cols());
        da.noalias() = go * in(1).out.mat().transpose();
        Mat db(in(1).out.rows(), in(1).out.cols());
        db.noalias() = in(0).out.mat().transpose() * go;
        accumulate(gin(0), in(0).out, da);
        accumulate(gin(1), in(1).out, db);
        break;
      }
      case Op::kMatmulNT: {
        Mat da(in(0).out.rows(), in(0).out.cols());
        da.noalias() = go * in(1).out.mat();
        Mat db(in(1).out.rows(), in(1).out.cols());
        db.noalias() = go.transpose() * in(0).out.mat();
        accumulate(gin(0), in(0).out, da);
        accumulate(gin(1), in(1).out, db);
        break;
      }
      case Op::kAffine:
        accumulate(gin(0), in(0).out, Mat(go * n.a));
        break;
      case Op::kMulElem:
        accumulate(gin(0), in(0).out, Mat(go.cwiseProduct(in(1).out.mat())));
        accumulate(gin(1), in(1).out, Mat(go.cwiseProduct(in(0).out.mat())));
        break;
      case Op::kLayerNorm: {
        const Mat& x = in(0).out.mat();
        const Mat& gain = in(1).out.mat();
        const Index d = x.cols();
        const Scalar inv_d = 1.0 / static_cast<Scalar>(d);
        Mat dx(x.rows(), d);
        Mat dgain = Mat::Zero(1, d);
        Mat dbias = Mat::Zero(1, d);
        for (Index r = 0; r < x.rows(); ++r) {
          const Scalar mu = x.row(r).mean();
          const Scalar var = (x.row(r).array() - mu).square().sum() * inv_d;
          const Scalar inv_std = 1.0 / std::sqrt(var + n.a);
          const Eigen::Array<Scalar, 1, Eigen::Dynamic> xhat =
              (x.row(r).array() - mu) * inv_std;
          const Eigen::Array<Scalar, 1, Eigen::Dynamic> gh =
              go.row(r).array() * gain.row(0).array();
          dgain.row(0).array() += go.row(r).array() * xhat;
          dbias.row(0).array() += go.row(r).array();
          const Scalar gh_mean = gh.mean();
          const Scalar ghx_mean = (gh * xhat).mean();
          dx.row(r).array() = (gh - gh_mean - xhat * ghx_mean) * inv_std;
        }
        accumulate(gin(0), in(0).out, dx);
        accumulate(gin(1), in(1).out, dgain);
        accumulate(gin(2), in(2).out, dbias);
        break;
      }
      case Op::kGelu: {
        const Mat& x = in(0).out.mat();
        Mat d = go.cwiseProduct(x.unaryExpr([](Scalar v) { return gelu_derivative(v); }));
        accumulate(gin(0), in(0).out, d);
        break;
      }
      case Op::kSoftmaxRows: {
        const Mat& y = n.out.mat();
        Mat dx(y.rows(), y.cols());
        for (Index r = 0; r < y.rows(); ++r) {
          const Scalar dot = go.row(r).dot(y.row(r));
          dx.row(r) = (go.row(r).array() - dot) * y.row(r).array();
        }
        accumulate(gin(0), in(0).out, dx);
        break;
      }
      case Op::kColBlock: {
        Mat d = Mat::Zero(in(0).out.rows(), in(0).out.cols());
        d.middleCols(n.offset, n.width) = go;
        accumulate(gin(0), in(0).out, d);
        break;
      }
      case Op::kConcatCols: {
        Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index w = in(k).out.cols();
          accumulate(gin(k), in(k).out, go.middleCols(at, w));
          at += w;
        }
        break;
      }
      case Op::kSigmoid: {
        const Mat& y = n.out.mat();
        accumulate(gin(0), in(0).out,
                   Mat(go.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()))));
        break;
      }
      case Op::kLog:
        accumulate(gin(0), in(0).out, Mat(go.cwiseQuotient(in(0).out.mat())));
        break;
      case Op::kBce: {
        const Mat& p = in(0).out.mat();
        const Mat& y = n.aux.mat();
        Mat d(p.rows(), p.cols());
        for (Index r = 0; r < p.rows(); ++r)
          for (Index c = 0; c < p.cols(); ++c) {
            const Scalar s = clamp_prob(p(r, c), n.a);
            d(r, c) = go(r, c) * (-y(r, c) / s + (1.0 - y(r, c)) / (1.0 - s));
          }
        accumulate(gin(0), in(0).out, d);
        break;
      }
      case Op::kSum:
        accumulate(gin(0), in(0).out,
                   Mat(Mat::Constant(in(0).out.rows(), in(0).out.cols(), go(0, 0))));
        break;
      case Op::kMean: {
        const Scalar scale = go(0, 0) / static_cast<Scalar>(in(0).out.size());
        accumulate(gin(0), in(0).out,
                   Mat(Mat::Constant(in(0).out.rows(), in(0).out.cols(), scale)));
        break;
      }
    }
  }
  return grads;
}

std::vector<Tensor> parameter_gradients(const Graph& g, Value loss,
                                        std::span<Tensor* const> params) {
  const std::vector<Tensor> all = backward(g, loss);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Tensor* p : params) {
    const int id = g.find_param(p);
    if (id >= 0 && all[static_cast<std::size_t>(id)].size() > 0)
      out.push_back(all[static_cast<std::size_t>(id)]);
    else
      out.push_back(Tensor::zeros_like(*p));
  }
  return out;
}

}  // namespace dptbench::ad
