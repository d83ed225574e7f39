#include <cmath>

#include "eigen_view.hpp"
#include "textshield/errors.hpp"
#include "textshield/grad/tape.hpp"

namespace textshield::grad {

GradientMap Tape::backward(NodeId output, BackwardMode mode) const {
  if (nodes_.empty()) throw Error("backward: tape is empty");
  if (output >= nodes_.size()) {
    throw Error("backward: output node " + std::to_string(output) +
                " not on tape");
  }
  if (nodes_[output].value.size() != 1) {
    throw ShapeError("backward: output node must be scalar, got shape " +
                     to_string(nodes_[output].value.shape()));
  }

  std::vector<std::vector<double>> grads(output + 1);
  grads[output] = {1.0};

  auto grad_of = [&](NodeId id) -> std::vector<double>* {
    if (!nodes_[id].requires_grad) return nullptr;
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return &g;
  };

  GradientMap result;
  for (NodeId id = output + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    const Node& n = nodes_[id];
    const std::vector<double>& g = grads[id];
    const auto& ps = n.parents;
    auto val = [&](std::size_t i) -> const Tensor& { return nodes_[ps[i]].value; };

    switch (n.kind) {
      case OpKind::Leaf:
        if (n.requires_grad) result.emplace(id, Tensor(n.value.shape(), g));
        break;

      case OpKind::EmbeddingLookup: {
        if (auto* dt = grad_of(ps[0])) {
          const std::size_t k = val(0).shape()[1];
          for (std::size_t r = 0; r < n.attrs.indices.size(); ++r) {
            const std::size_t row = n.attrs.indices[r];
            for (std::size_t c = 0; c < k; ++c) {
              (*dt)[row * k + c] += g[r * k + c];
            }
          }
        }
        break;
      }

      case OpKind::Affine: {
        const Tensor& x = val(0);
        const Tensor& w = val(1);
        const std::size_t rows = x.rows();
        const std::size_t out_dim = w.shape()[0];
        const std::size_t in_dim = w.shape()[1];
        auto dy = as_matrix(g.data(), rows, out_dim);
        if (auto* dx = grad_of(ps[0])) {
          as_matrix(dx->data(), rows, in_dim).noalias() +=
              dy * as_matrix(w.data().data(), out_dim, in_dim);
        }
        if (auto* dw = grad_of(ps[1])) {
          as_matrix(dw->data(), out_dim, in_dim).noalias() +=
              dy.transpose() * as_matrix(x.data().data(), rows, in_dim);
        }
        if (ps.size() == 3) {
          if (auto* db = grad_of(ps[2])) {
            as_row(db->data(), out_dim) += dy.colwise().sum();
          }
        }
        break;
      }

      case OpKind::Conv1d: {
        const Tensor& x = val(0);
        const Tensor& f = val(1);
        const std::size_t width = n.attrs.width;
        const std::size_t k = x.shape()[1];
        const std::size_t nf = f.shape()[0];
        const std::size_t steps = n.value.shape()[0];
        const std::size_t window = width * k;
        auto dy = as_matrix(g.data(), steps, nf);
        if (auto* dx = grad_of(ps[0])) {
          RowMatrix dwin = dy * as_matrix(f.data().data(), nf, window);
          for (std::size_t t = 0; t < steps; ++t) {
            double* dst = dx->data() + t * k;
            for (std::size_t c = 0; c < window; ++c) dst[c] += dwin(t, c);
          }
        }
        if (auto* df = grad_of(ps[1])) {
          as_matrix(df->data(), nf, window).noalias() +=
              dy.transpose() * as_windows(x.data().data(), steps, window, k);
        }
        if (auto* db = grad_of(ps[2])) {
          as_row(db->data(), nf) += dy.colwise().sum();
        }
        break;
      }

      case OpKind::MaxPoolTime: {
        if (auto* dx = grad_of(ps[0])) {
          const std::size_t cols = n.value.size();
          for (std::size_t c = 0; c < cols; ++c) {
            (*dx)[n.argmax[c] * cols + c] += g[c];
          }
        }
        break;
      }

      case OpKind::Relu: {
        if (auto* dx = grad_of(ps[0])) {
          const auto& x = val(0).data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const bool open = x[i] > 0.0 &&
                              (mode == BackwardMode::Standard || g[i] > 0.0);
            if (open) (*dx)[i] += g[i];
          }
        }
        break;
      }

      case OpKind::Sigmoid: {
        if (auto* dx = grad_of(ps[0])) {
          const auto& y = n.value.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*dx)[i] += g[i] * y[i] * (1.0 - y[i]);
          }
        }
        break;
      }

      case OpKind::Tanh: {
        if (auto* dx = grad_of(ps[0])) {
          const auto& y = n.value.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*dx)[i] += g[i] * (1.0 - y[i] * y[i]);
          }
        }
        break;
      }

      case OpKind::Add: {
        for (std::size_t p = 0; p < 2; ++p) {
          if (auto* d = grad_of(ps[p])) {
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
          }
        }
        break;
      }

      case OpKind::Mul: {
        for (std::size_t p = 0; p < 2; ++p) {
          if (auto* d = grad_of(ps[p])) {
            const auto& other = val(1 - p).data();
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * other[i];
          }
        }
        break;
      }

      case OpKind::Concat: {
        const std::size_t rows = n.value.rows();
        const std::size_t total = n.value.cols();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ps.size(); ++p) {
          const std::size_t c = val(p).cols();
          if (auto* d = grad_of(ps[p])) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) {
                (*d)[r * c + j] += g[r * total + offset + j];
              }
            }
          }
          offset += c;
        }
        break;
      }

      case OpKind::Slice: {
        if (auto* dx = grad_of(ps[0])) {
          const Tensor& x = val(0);
          const auto& a = n.attrs;
          if (x.rank() == 1 || a.axis == 0) {
            const std::size_t stride = x.rank() == 1 ? 1 : x.cols();
            for (std::size_t i = 0; i < g.size(); ++i) {
              (*dx)[a.begin * stride + i] += g[i];
            }
          } else {
            const std::size_t cols = x.cols();
            const std::size_t w = a.end - a.begin;
            for (std::size_t r = 0; r < x.rows(); ++r) {
              for (std::size_t j = 0; j < w; ++j) {
                (*dx)[r * cols + a.begin + j] += g[r * w + j];
              }
            }
          }
        }
        break;
      }

      case OpKind::Softmax: {
        if (auto* dx = grad_of(ps[0])) {
          const std::size_t rows = n.value.rows();
          const std::size_t cols = n.value.cols();
          const auto& y = n.value.data();
          for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              dot += g[r * cols + c] * y[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
              (*dx)[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
            }
          }
        }
        break;
      }

      case OpKind::SoftmaxCrossEntropy: {
        if (auto* dx = grad_of(ps[0])) {
          const Tensor& x = val(0);
          const std::size_t rows = x.rows();
          const std::size_t cols = x.cols();
          const double scale = g[0] / static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* row = x.data().data() + r * cols;
            double peak = row[0];
            for (std::size_t c = 1; c < cols; ++c) peak = std::max(peak, row[c]);
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - peak);
            for (std::size_t c = 0; c < cols; ++c) {
              const double p = std::exp(row[c] - peak) / total;
              const double target = c == n.attrs.indices[r] ? 1.0 : 0.0;
              (*dx)[r * cols + c] += scale * (p - target);
            }
          }
        }
        break;
      }
    }
    // Interior buffers are no longer needed once propagated.
    if (n.kind != OpKind::Leaf) {
      std::vector<double>().swap(grads[id]);
    }
  }
  return result;
}

}  // namespace textshield::grad
