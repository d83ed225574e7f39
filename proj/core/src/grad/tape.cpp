#include "textshield/grad/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "textshield/errors.hpp"
#include "eigen_view.hpp"

namespace textshield::grad {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::EmbeddingLookup: return "embedding-lookup";
    case OpKind::Affine: return "affine";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::MaxPoolTime: return "max-pool-time";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Softmax: return "softmax";
    case OpKind::SoftmaxCrossEntropy: return "softmax-cross-entropy";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(to_string(kind)) + ": " + detail);
}

void expect_arity(OpKind kind, std::size_t got, std::size_t lo,
                  std::size_t hi) {
  if (got < lo || got > hi) {
    shape_error(kind, "expected " + std::to_string(lo) +
                          (lo == hi ? "" : ".." + std::to_string(hi)) +
                          " inputs, got " + std::to_string(got));
  }
}

void softmax_rows(const double* in, double* out, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in + r * cols;
    double* y = out + r * cols;
    const double peak = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - peak);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
}

}  // namespace

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.value.clear_grad();
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::forward(OpKind kind, std::span<const NodeId> inputs,
                     OpAttrs attrs) {
  if (kind == OpKind::Leaf) shape_error(kind, "use Tape::leaf");
  Node n;
  n.kind = kind;
  n.parents.assign(inputs.begin(), inputs.end());
  n.attrs = std::move(attrs);
  for (NodeId p : n.parents) {
    if (p >= nodes_.size()) {
      shape_error(kind, "parent id " + std::to_string(p) + " not on tape");
    }
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.value = compute(n, &n.argmax);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tensor Tape::compute(const Node& proto, std::vector<std::size_t>* argmax) const {
  const OpKind kind = proto.kind;
  const auto& ps = proto.parents;
  const OpAttrs& at = proto.attrs;
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[ps[i]].value; };

  switch (kind) {
    case OpKind::Leaf:
      shape_error(kind, "leaf has no forward rule");

    case OpKind::EmbeddingLookup: {
      expect_arity(kind, ps.size(), 1, 1);
      const Tensor& table = in(0);
      if (table.rank() != 2) {
        shape_error(kind, "table must be rank 2, got " + to_string(table.shape()));
      }
      const std::size_t k = table.shape()[1];
      Tensor out({at.indices.size(), k});
      for (std::size_t r = 0; r < at.indices.size(); ++r) {
        const std::size_t id = at.indices[r];
        if (id >= table.shape()[0]) {
          shape_error(kind, "index " + std::to_string(id) + " outside table of " +
                                std::to_string(table.shape()[0]) + " rows");
        }
        std::copy_n(table.data().begin() + id * k, k, out.data().begin() + r * k);
      }
      return out;
    }

    case OpKind::Affine: {
      expect_arity(kind, ps.size(), 2, 3);
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      if (w.rank() != 2) {
        shape_error(kind, "weight must be rank 2, got " + to_string(w.shape()));
      }
      const std::size_t out_dim = w.shape()[0];
      const std::size_t in_dim = w.shape()[1];
      if (x.rank() < 1 || x.rank() > 2 || x.cols() != in_dim) {
        shape_error(kind, "input " + to_string(x.shape()) +
                              " incompatible with weight " + to_string(w.shape()));
      }
      if (ps.size() == 3 && in(2).shape() != Shape{out_dim}) {
        shape_error(kind, "bias " + to_string(in(2).shape()) + " expected (" +
                              std::to_string(out_dim) + ")");
      }
      Tensor out(x.rank() == 1 ? Shape{out_dim} : Shape{x.rows(), out_dim});
      auto y = as_matrix(out.data().data(), x.rows(), out_dim);
      y.noalias() = as_matrix(x.data().data(), x.rows(), in_dim) *
                    as_matrix(w.data().data(), out_dim, in_dim).transpose();
      if (ps.size() == 3) y.rowwise() += as_row(in(2).data().data(), out_dim);
      return out;
    }

    case OpKind::Conv1d: {
      expect_arity(kind, ps.size(), 3, 3);
      const Tensor& x = in(0);
      const Tensor& f = in(1);
      const Tensor& b = in(2);
      const std::size_t width = at.width;
      if (x.rank() != 2 || f.rank() != 2 || width == 0) {
        shape_error(kind, "input " + to_string(x.shape()) + ", filters " +
                              to_string(f.shape()) + ", width " +
                              std::to_string(width));
      }
      const std::size_t len = x.shape()[0];
      const std::size_t k = x.shape()[1];
      const std::size_t nf = f.shape()[0];
      if (f.shape()[1] != width * k || len < width || b.shape() != Shape{nf}) {
        shape_error(kind, "input " + to_string(x.shape()) + ", filters " +
                              to_string(f.shape()) + ", bias " +
                              to_string(b.shape()) + ", width " +
                              std::to_string(width));
      }
      const std::size_t steps = len - width + 1;
      Tensor out({steps, nf});
      auto y = as_matrix(out.data().data(), steps, nf);
      y.noalias() = as_windows(x.data().data(), steps, width * k, k) *
                    as_matrix(f.data().data(), nf, width * k).transpose();
      y.rowwise() += as_row(b.data().data(), nf);
      return out;
    }

    case OpKind::MaxPoolTime: {
      expect_arity(kind, ps.size(), 1, 1);
      const Tensor& x = in(0);
      if (x.rank() != 2 || x.shape()[0] == 0) {
        shape_error(kind, "input must be non-empty rank 2, got " +
                              to_string(x.shape()));
      }
      const std::size_t steps = x.shape()[0];
      const std::size_t cols = x.shape()[1];
      Tensor out({cols});
      argmax->assign(cols, 0);
      for (std::size_t c = 0; c < cols; ++c) {
        double best = x.at(0, c);
        std::size_t where = 0;
        for (std::size_t t = 1; t < steps; ++t) {
          if (x.at(t, c) > best) {
            best = x.at(t, c);
            where = t;
          }
        }
        out[c] = best;
        (*argmax)[c] = where;
      }
      return out;
    }

    case OpKind::Relu:
    case OpKind::Sigmoid:
    case OpKind::Tanh: {
      expect_arity(kind, ps.size(), 1, 1);
      Tensor out = in(0);
      for (double& v : out.data()) {
        if (kind == OpKind::Relu) {
          v = v > 0.0 ? v : 0.0;
        } else if (kind == OpKind::Sigmoid) {
          v = 1.0 / (1.0 + std::exp(-v));
        } else {
          v = std::tanh(v);
        }
      }
      return out;
    }

    case OpKind::Add:
    case OpKind::Mul: {
      expect_arity(kind, ps.size(), 2, 2);
      if (in(0).shape() != in(1).shape()) {
        shape_error(kind, "operands " + to_string(in(0).shape()) + " and " +
                              to_string(in(1).shape()) + " differ");
      }
      if (kind == OpKind::Mul && at.lrp_signal > 1) {
        shape_error(kind, "lrp_signal must name operand 0 or 1");
      }
      Tensor out = in(0);
      const auto& other = in(1).data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = kind == OpKind::Add ? out[i] + other[i] : out[i] * other[i];
      }
      return out;
    }

    case OpKind::Concat: {
      if (ps.empty()) shape_error(kind, "needs at least one input");
      const std::size_t rank = in(0).rank();
      const std::size_t rows = in(0).rows();
      std::size_t total = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (in(i).rank() != rank || (rank == 2 && in(i).rows() != rows) ||
            rank == 0 || rank > 2) {
          shape_error(kind, "input " + std::to_string(i) + " shape " +
                                to_string(in(i).shape()) + " vs " +
                                to_string(in(0).shape()));
        }
        total += in(i).cols();
      }
      Tensor out(rank == 1 ? Shape{total} : Shape{rows, total});
      std::size_t offset = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::size_t c = in(i).cols();
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(in(i).data().begin() + r * c, c,
                      out.data().begin() + r * total + offset);
        }
        offset += c;
      }
      return out;
    }

    case OpKind::Slice: {
      expect_arity(kind, ps.size(), 1, 1);
      const Tensor& x = in(0);
      const bool rows_axis = at.axis == 0;
      const std::size_t extent =
          x.rank() == 1 ? x.size() : (rows_axis ? x.rows() : x.cols());
      if (x.rank() == 0 || x.rank() > 2 || at.axis > 1 ||
          (x.rank() == 1 && at.axis != 0) || at.begin >= at.end ||
          at.end > extent) {
        shape_error(kind, "range [" + std::to_string(at.begin) + ", " +
                              std::to_string(at.end) + ") on axis " +
                              std::to_string(at.axis) + " of " +
                              to_string(x.shape()));
      }
      const std::size_t n = at.end - at.begin;
      if (x.rank() == 1) {
        Tensor out({n});
        std::copy_n(x.data().begin() + at.begin, n, out.data().begin());
        return out;
      }
      const std::size_t cols = x.cols();
      if (rows_axis) {
        Tensor out({n, cols});
        std::copy_n(x.data().begin() + at.begin * cols, n * cols,
                    out.data().begin());
        return out;
      }
      Tensor out({x.rows(), n});
      for (std::size_t r = 0; r < x.rows(); ++r) {
        std::copy_n(x.data().begin() + r * cols + at.begin, n,
                    out.data().begin() + r * n);
      }
      return out;
    }

    case OpKind::Softmax: {
      expect_arity(kind, ps.size(), 1, 1);
      const Tensor& x = in(0);
      if (x.rank() == 0 || x.rank() > 2 || x.size() == 0) {
        shape_error(kind, "input " + to_string(x.shape()));
      }
      Tensor out(x.shape());
      softmax_rows(x.data().data(), out.data().data(), x.rows(), x.cols());
      return out;
    }

    case OpKind::SoftmaxCrossEntropy: {
      expect_arity(kind, ps.size(), 1, 1);
      const Tensor& x = in(0);
      if (x.rank() == 0 || x.rank() > 2 || at.indices.size() != x.rows()) {
        shape_error(kind, "logits " + to_string(x.shape()) + " with " +
                              std::to_string(at.indices.size()) + " labels");
      }
      std::vector<double> probs(x.size());
      softmax_rows(x.data().data(), probs.data(), x.rows(), x.cols());
      double loss = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (at.indices[r] >= x.cols()) {
          shape_error(kind, "label " + std::to_string(at.indices[r]) +
                                " outside " + std::to_string(x.cols()) +
                                " classes");
        }
        // log-sum-exp form keeps the loss finite for saturated logits.
        const double* row = x.data().data() + r * x.cols();
        const double peak = *std::max_element(row, row + x.cols());
        double total = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) total += std::exp(row[c] - peak);
        loss += peak + std::log(total) - row[at.indices[r]];
      }
      return Tensor::scalar(loss / static_cast<double>(x.rows()));
    }
  }
  shape_error(kind, "unsupported op");
}

NodeId Tape::lookup(NodeId table, std::vector<std::size_t> ids) {
  OpAttrs a;
  a.indices = std::move(ids);
  const NodeId in[] = {table};
  return forward(OpKind::EmbeddingLookup, in, std::move(a));
}

NodeId Tape::affine(NodeId x, NodeId weight, NodeId bias) {
  const NodeId in[] = {x, weight, bias};
  return forward(OpKind::Affine, in);
}

NodeId Tape::linear(NodeId x, NodeId weight) {
  const NodeId in[] = {x, weight};
  return forward(OpKind::Affine, in);
}

NodeId Tape::conv1d(NodeId x, NodeId filters, NodeId bias, std::size_t width) {
  OpAttrs a;
  a.width = width;
  const NodeId in[] = {x, filters, bias};
  return forward(OpKind::Conv1d, in, std::move(a));
}

NodeId Tape::max_pool_time(NodeId x) {
  const NodeId in[] = {x};
  return forward(OpKind::MaxPoolTime, in);
}

NodeId Tape::relu(NodeId x) {
  const NodeId in[] = {x};
  return forward(OpKind::Relu, in);
}

NodeId Tape::sigmoid(NodeId x) {
  const NodeId in[] = {x};
  return forward(OpKind::Sigmoid, in);
}

NodeId Tape::tanh(NodeId x) {
  const NodeId in[] = {x};
  return forward(OpKind::Tanh, in);
}

NodeId Tape::add(NodeId a, NodeId b) {
  const NodeId in[] = {a, b};
  return forward(OpKind::Add, in);
}

NodeId Tape::mul(NodeId a, NodeId b, std::size_t lrp_signal) {
  OpAttrs at;
  at.lrp_signal = lrp_signal;
  const NodeId in[] = {a, b};
  return forward(OpKind::Mul, in, std::move(at));
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  return forward(OpKind::Concat, parts);
}

NodeId Tape::slice(NodeId x, std::size_t axis, std::size_t begin,
                   std::size_t end) {
  OpAttrs a;
  a.axis = axis;
  a.begin = begin;
  a.end = end;
  const NodeId in[] = {x};
  return forward(OpKind::Slice, in, std::move(a));
}

NodeId Tape::pick(NodeId x, std::size_t index) {
  return slice(x, 0, index, index + 1);
}

NodeId Tape::softmax(NodeId x) {
  const NodeId in[] = {x};
  return forward(OpKind::Softmax, in);
}

NodeId Tape::softmax_cross_entropy(NodeId logits,
                                   std::vector<std::size_t> labels) {
  OpAttrs a;
  a.indices = std::move(labels);
  const NodeId in[] = {logits};
  return forward(OpKind::SoftmaxCrossEntropy, in, std::move(a));
}

std::vector<Tensor> Tape::replay() const {
  Tape fresh;
  std::vector<Tensor> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Leaf) {
      fresh.leaf(n.value, n.requires_grad);
    } else {
      OpAttrs a = n.attrs;
      fresh.forward(n.kind, n.parents, std::move(a));
    }
    out.push_back(fresh.value(fresh.size() - 1));
  }
  return out;
}

}  // namespace textshield::grad
