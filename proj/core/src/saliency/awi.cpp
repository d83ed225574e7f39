#include "textshield/saliency/awi.hpp"

#include <cmath>
#include <cstring>

#include "textshield/errors.hpp"

namespace textshield::saliency {

using grad::NodeId;
using grad::Tape;
using grad::Tensor;
using victims::DifferentiableClassifier;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::VG: return "VG";
    case Method::GBP: return "GBP";
    case Method::LRP: return "LRP";
    case Method::IG: return "IG";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : kMethods) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown saliency method '" + std::string(s) + "'");
}

EmbeddedInput embed(const DifferentiableClassifier& model,
                    const text::EncodedExample& ex) {
  return {model.embed(ex), ex.true_length};
}

namespace {

struct Recorded {
  Tape tape;
  NodeId input = 0;
  NodeId logits = 0;
  std::size_t classes = 0;
};

void record(Recorded& r, const DifferentiableClassifier& model, Tensor embedded,
            std::size_t true_length) {
  r.input = r.tape.leaf(std::move(embedded), true);
  r.logits = model.record(r.tape, r.input, true_length);
  r.classes = r.tape.value(r.logits).size();
}

// Scalar node the backward pass starts from for class j.
NodeId target_node(Recorded& r, std::size_t j, Target target) {
  NodeId src = r.logits;
  if (target == Target::Probability) src = r.tape.softmax(r.logits);
  return victims::select_logit(r.tape, src, j);
}

std::size_t predicted_of(const Recorded& r) {
  const auto v = r.tape.value(r.logits).values();
  return victims::argmax(victims::softmax(v)).label;
}

// Reduces an input-shaped [rows, k] tensor into column j of `out`.
void reduce_into(Tensor& out, std::size_t j, const Tensor& g, bool average,
                 bool abs_first) {
  const std::size_t rows = g.rows();
  const std::size_t k = g.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = g[i * k + c];
      s += abs_first ? std::abs(v) : v;
    }
    out.at(i, j) = average ? s / static_cast<double>(k) : s;
  }
}

Tensor gradient_scores(Recorded& r, grad::BackwardMode mode,
                       const SaliencyOptions& opts, bool abs_first) {
  const std::size_t rows = r.tape.value(r.input).rows();
  Tensor out({rows, r.classes});
  for (std::size_t j = 0; j < r.classes; ++j) {
    const NodeId t = target_node(r, j, opts.target);
    const auto g = r.tape.backward(t, mode);
    reduce_into(out, j, g.at(r.input), true, abs_first);
  }
  return out;
}

Tensor lrp_scores(Recorded& r, double epsilon) {
  const std::size_t rows = r.tape.value(r.input).rows();
  Tensor out({rows, r.classes});
  for (std::size_t j = 0; j < r.classes; ++j) {
    const NodeId t = victims::select_logit(r.tape, r.logits, j);
    const auto rel = r.tape.lrp_relevance(t, epsilon);
    auto it = rel.find(r.input);
    if (it == rel.end()) continue;  // no activation path: zero relevance
    reduce_into(out, j, it->second, false, false);
  }
  return out;
}

AwiMatrix finish(Method m, std::size_t predicted, Tensor scores,
                 const SaliencyOptions& opts, std::size_t true_length) {
  for (double& v : scores.data()) v = std::abs(v);
  if (opts.mask_pad) {
    for (std::size_t i = true_length; i < scores.rows(); ++i) {
      for (std::size_t j = 0; j < scores.cols(); ++j) scores.at(i, j) = 0.0;
    }
  }
  return {m, predicted, std::move(scores)};
}

}  // namespace

Tensor signed_gradient(const DifferentiableClassifier& model,
                       const EmbeddedInput& in, grad::BackwardMode mode,
                       const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return gradient_scores(r, mode, opts, false);
}

Tensor signed_lrp(const DifferentiableClassifier& model, const EmbeddedInput& in,
                  double epsilon) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return lrp_scores(r, epsilon);
}

Tensor signed_ig(const DifferentiableClassifier& model, const EmbeddedInput& in,
                 std::size_t steps, const SaliencyOptions& opts) {
  if (steps == 0) throw Error("integrated gradients need at least one step");
  const Tensor& x = in.embedded;
  Tensor avg(x.shape());
  std::size_t classes = 0;
  std::vector<Tensor> per_class;
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    Tensor point(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = alpha * x[i];
    Recorded r;
    record(r, model, std::move(point), in.true_length);
    if (s == 0) {
      classes = r.classes;
      per_class.assign(classes, Tensor(x.shape()));
    }
    for (std::size_t j = 0; j < classes; ++j) {
      const auto g = r.tape.backward(target_node(r, j, opts.target));
      const auto& gj = g.at(r.input).data();
      auto& acc = per_class[j].data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gj[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(steps);
  Tensor out({x.rows(), classes});
  for (std::size_t j = 0; j < classes; ++j) {
    Tensor attr(x.shape());
    // Baseline is the zero embedding, so (x - x') = x.
    for (std::size_t i = 0; i < x.size(); ++i) attr[i] = x[i] * per_class[j][i] * inv;
    reduce_into(out, j, attr, false, false);
  }
  return out;
}

AwiMatrix awi_vg(const DifferentiableClassifier& model, const EmbeddedInput& in,
                 const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return finish(Method::VG, predicted_of(r),
                gradient_scores(r, grad::BackwardMode::Standard, opts, opts.abs_then_average),
                opts, in.true_length);
}

AwiMatrix awi_gbp(const DifferentiableClassifier& model, const EmbeddedInput& in,
                  const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return finish(Method::GBP, predicted_of(r),
                gradient_scores(r, grad::BackwardMode::Guided, opts, opts.abs_then_average),
                opts, in.true_length);
}

AwiMatrix awi_lrp(const DifferentiableClassifier& model, const EmbeddedInput& in,
                  const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return finish(Method::LRP, predicted_of(r), lrp_scores(r, opts.lrp_epsilon), opts,
                in.true_length);
}

AwiMatrix awi_ig(const DifferentiableClassifier& model, const EmbeddedInput& in,
                 const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  return finish(Method::IG, predicted_of(r), signed_ig(model, in, opts.ig_steps, opts),
                opts, in.true_length);
}

std::array<AwiMatrix, 4> awi_all(const DifferentiableClassifier& model,
                                 const EmbeddedInput& in,
                                 const SaliencyOptions& opts) {
  Recorded r;
  record(r, model, in.embedded, in.true_length);
  const std::size_t pred = predicted_of(r);
  std::array<AwiMatrix, 4> out;
  out[0] = finish(Method::VG, pred,
                  gradient_scores(r, grad::BackwardMode::Standard, opts, opts.abs_then_average),
                  opts, in.true_length);
  out[1] = finish(Method::GBP, pred,
                  gradient_scores(r, grad::BackwardMode::Guided, opts, opts.abs_then_average),
                  opts, in.true_length);
  out[2] = finish(Method::LRP, pred, lrp_scores(r, opts.lrp_epsilon), opts, in.true_length);
  out[3] = finish(Method::IG, pred, signed_ig(model, in, opts.ig_steps, opts), opts,
                  in.true_length);
  return out;
}

std::array<AwiMatrix, 4> awi_all(const DifferentiableClassifier& model,
                                 const text::EncodedExample& ex,
                                 const SaliencyOptions& opts) {
  return awi_all(model, embed(model, ex), opts);
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("truncated AWI record");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void append_awi(std::string& out, const AwiMatrix& m) {
  out += "AWI1";
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.method));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.predicted));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.values.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.values.cols()));
  out.append(reinterpret_cast<const char*>(m.values.data().data()),
             m.values.size() * sizeof(double));
}

AwiMatrix read_awi(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < 4 || bytes.substr(pos, 4) != "AWI1") {
    throw VersionError("AWI record has a bad tag");
  }
  pos += 4;
  AwiMatrix m;
  const auto method = take<std::uint8_t>(bytes, pos);
  if (method > 3) throw FormatError("AWI record has unknown method");
  m.method = static_cast<Method>(method);
  m.predicted = take<std::uint32_t>(bytes, pos);
  const std::size_t rows = take<std::uint32_t>(bytes, pos);
  const std::size_t cols = take<std::uint32_t>(bytes, pos);
  const std::size_t n = rows * cols;
  if ((bytes.size() - pos) / sizeof(double) < n) throw FormatError("truncated AWI record");
  m.values = Tensor({rows, cols});
  std::memcpy(m.values.data().data(), bytes.data() + pos, n * sizeof(double));
  pos += n * sizeof(double);
  return m;
}

}  // namespace textshield::saliency
