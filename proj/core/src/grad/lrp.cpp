#include <cmath>

#include "eigen_view.hpp"
#include "textshield/errors.hpp"
#include "textshield/grad/tape.hpp"

namespace textshield::grad {

namespace {

double stabilize(double z, double eps) { return z + (z >= 0.0 ? eps : -eps); }

}  // namespace

GradientMap Tape::lrp_relevance(NodeId output, double epsilon) const {
  if (!(epsilon > 0.0)) {
    throw Error("lrp_relevance: epsilon must be > 0, got " +
                std::to_string(epsilon));
  }
  if (nodes_.empty()) throw Error("lrp_relevance: tape is empty");
  if (output >= nodes_.size()) {
    throw Error("lrp_relevance: output node " + std::to_string(output) +
                " not on tape");
  }
  if (nodes_[output].value.size() != 1) {
    throw ShapeError("lrp_relevance: output node must be scalar, got shape " +
                     to_string(nodes_[output].value.shape()));
  }

  std::vector<std::vector<double>> rel(output + 1);
  rel[output] = {nodes_[output].value[0]};

  auto rel_of = [&](NodeId id) -> std::vector<double>& {
    auto& r = rel[id];
    if (r.empty()) r.assign(nodes_[id].value.size(), 0.0);
    return r;
  };

  GradientMap result;
  for (NodeId id = output + 1; id-- > 0;) {
    if (rel[id].empty()) continue;
    const Node& n = nodes_[id];
    const std::vector<double>& r = rel[id];
    const auto& ps = n.parents;
    auto val = [&](std::size_t i) -> const Tensor& { return nodes_[ps[i]].value; };

    switch (n.kind) {
      case OpKind::Leaf:
        result.emplace(id, Tensor(n.value.shape(), r));
        break;

      case OpKind::EmbeddingLookup: {
        auto& dst = rel_of(ps[0]);
        const std::size_t k = val(0).shape()[1];
        for (std::size_t row = 0; row < n.attrs.indices.size(); ++row) {
          const std::size_t id_row = n.attrs.indices[row];
          for (std::size_t c = 0; c < k; ++c) {
            dst[id_row * k + c] += r[row * k + c];
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
        RowMatrix share(rows, out_dim);
        for (std::size_t i = 0; i < rows * out_dim; ++i) {
          share.data()[i] = r[i] / stabilize(n.value[i], epsilon);
        }
        RowMatrix back = share * as_matrix(w.data().data(), out_dim, in_dim);
        auto& dst = rel_of(ps[0]);
        for (std::size_t i = 0; i < rows * in_dim; ++i) {
          dst[i] += x[i] * back.data()[i];
        }
        break;
      }

      case OpKind::Conv1d: {
        const Tensor& x = val(0);
        const Tensor& f = val(1);
        const std::size_t k = x.shape()[1];
        const std::size_t nf = f.shape()[0];
        const std::size_t steps = n.value.shape()[0];
        const std::size_t window = n.attrs.width * k;
        RowMatrix share(steps, nf);
        for (std::size_t i = 0; i < steps * nf; ++i) {
          share.data()[i] = r[i] / stabilize(n.value[i], epsilon);
        }
        RowMatrix dwin = share * as_matrix(f.data().data(), nf, window);
        std::vector<double> back(x.size(), 0.0);
        for (std::size_t t = 0; t < steps; ++t) {
          for (std::size_t c = 0; c < window; ++c) back[t * k + c] += dwin(t, c);
        }
        auto& dst = rel_of(ps[0]);
        for (std::size_t i = 0; i < x.size(); ++i) dst[i] += x[i] * back[i];
        break;
      }

      case OpKind::MaxPoolTime: {
        auto& dst = rel_of(ps[0]);
        const std::size_t cols = n.value.size();
        for (std::size_t c = 0; c < cols; ++c) dst[n.argmax[c] * cols + c] += r[c];
        break;
      }

      case OpKind::Relu:
      case OpKind::Sigmoid:
      case OpKind::Tanh: {
        auto& dst = rel_of(ps[0]);
        for (std::size_t i = 0; i < r.size(); ++i) dst[i] += r[i];
        break;
      }

      case OpKind::Add: {
        const auto& a = val(0).data();
        const auto& b = val(1).data();
        auto& da = rel_of(ps[0]);
        auto& db = rel_of(ps[1]);
        for (std::size_t i = 0; i < r.size(); ++i) {
          const double s = r[i] / stabilize(a[i] + b[i], epsilon);
          da[i] += a[i] * s;
          db[i] += b[i] * s;
        }
        break;
      }

      case OpKind::Mul: {
        auto& dst = rel_of(ps[n.attrs.lrp_signal]);
        for (std::size_t i = 0; i < r.size(); ++i) dst[i] += r[i];
        break;
      }

      case OpKind::Concat: {
        const std::size_t rows = n.value.rows();
        const std::size_t total = n.value.cols();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ps.size(); ++p) {
          const std::size_t c = val(p).cols();
          auto& dst = rel_of(ps[p]);
          for (std::size_t row = 0; row < rows; ++row) {
            for (std::size_t j = 0; j < c; ++j) {
              dst[row * c + j] += r[row * total + offset + j];
            }
          }
          offset += c;
        }
        break;
      }

      case OpKind::Slice: {
        const Tensor& x = val(0);
        const auto& a = n.attrs;
        auto& dst = rel_of(ps[0]);
        if (x.rank() == 1 || a.axis == 0) {
          const std::size_t stride = x.rank() == 1 ? 1 : x.cols();
          for (std::size_t i = 0; i < r.size(); ++i) dst[a.begin * stride + i] += r[i];
        } else {
          const std::size_t cols = x.cols();
          const std::size_t w = a.end - a.begin;
          for (std::size_t row = 0; row < x.rows(); ++row) {
            for (std::size_t j = 0; j < w; ++j) {
              dst[row * cols + a.begin + j] += r[row * w + j];
            }
          }
        }
        break;
      }

      case OpKind::Softmax:
      case OpKind::SoftmaxCrossEntropy:
        throw Error("lrp_relevance: no relevance rule for " +
                    std::string(to_string(n.kind)) + "; seed from a logit");
    }
    if (n.kind != OpKind::Leaf) std::vector<double>().swap(rel[id]);
  }
  return result;
}

}  // namespace textshield::grad
