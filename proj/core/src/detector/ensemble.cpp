#include "textshield/detector/ensemble.hpp"

#include <cstdio>
#include <cstdlib>
#include <random>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::detector {

using grad::NodeId;
using grad::Tape;
using grad::Tensor;

std::string to_string(CombinerMode m) { return m == CombinerMode::Logits ? "logits" : "hidden"; }
std::string to_string(InputView v) { return v == InputView::Matrix ? "matrix" : "column"; }

CombinerMode parse_combiner_mode(const std::string& s) {
  if (s == "logits") return CombinerMode::Logits;
  if (s == "hidden") return CombinerMode::Hidden;
  throw ConfigError("unknown combiner mode '" + s + "' (logits|hidden)");
}

InputView parse_input_view(const std::string& s) {
  if (s == "matrix") return InputView::Matrix;
  if (s == "column") return InputView::Column;
  throw ConfigError("unknown detector input view '" + s + "' (matrix|column)");
}

namespace {

constexpr std::size_t kParamsPerSub = 4;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

DetectorEnsemble::DetectorEnsemble(const DetectorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.num_classes < 2) throw ConfigError("detector needs num_classes >= 2");
  if (cfg.hidden == 0 || cfg.combiner_hidden == 0) throw ConfigError("detector widths must be > 0");
  set_active(cfg.active);
  std::mt19937_64 rng(derive_seed(seed, "detector-init"));
  for (std::size_t m = 0; m < 4; ++m) {
    const std::string p(saliency::to_string(saliency::kMethods[m]));
    nn::init_lstm(params_, p + ".lstm", input_width(), cfg.hidden, rng);
    params_.add(p + ".head.weight", nn::xavier_uniform(2, cfg.hidden, rng));
    params_.add(p + ".head.bias", Tensor({2}));
  }
  params_.add("combiner.0.weight", nn::xavier_uniform(cfg.combiner_hidden, combiner_input(), rng));
  params_.add("combiner.0.bias", Tensor({cfg.combiner_hidden}));
  params_.add("combiner.1.weight", nn::xavier_uniform(2, cfg.combiner_hidden, rng));
  params_.add("combiner.1.bias", Tensor({2}));
}

void DetectorEnsemble::set_active(const Mask& mask) {
  if (!(mask[0] || mask[1] || mask[2] || mask[3])) {
    throw ConfigError("at least one sub-detector must stay active");
  }
  cfg_.active = mask;
}

std::size_t DetectorEnsemble::input_width() const {
  return cfg_.view == InputView::Matrix ? cfg_.num_classes : 1;
}

std::size_t DetectorEnsemble::combiner_input() const {
  return cfg_.mode == CombinerMode::Logits ? 8 : 4 * cfg_.hidden;
}

std::vector<std::size_t> DetectorEnsemble::sub_params(std::size_t m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kParamsPerSub; ++i) out.push_back(m * kParamsPerSub + i);
  return out;
}

Tensor DetectorEnsemble::sequence(std::span<const Awi4* const> batch, std::size_t m) const {
  const std::size_t w = input_width();
  const std::size_t steps = text::kMaxLength;
  Tensor x({batch.size(), steps * w});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& mat = (*batch[b])[m];
    if (mat.values.rows() != steps || mat.values.cols() != cfg_.num_classes) {
      throw ShapeError("detector: AWI matrix " + grad::to_string(mat.values.shape()) +
                       " does not match (" + std::to_string(steps) + ", " +
                       std::to_string(cfg_.num_classes) + ")");
    }
    double* dst = x.data().data() + b * steps * w;
    for (std::size_t t = 0; t < steps; ++t) {
      if (cfg_.view == InputView::Matrix) {
        for (std::size_t j = 0; j < w; ++j) dst[t * w + j] = scale_[m] * mat.at(t, j);
      } else {
        dst[t] = scale_[m] * mat.at(t, mat.predicted);
      }
    }
  }
  return x;
}

BatchTrace DetectorEnsemble::trace(Tape& tape, std::span<const Awi4* const> batch,
                                   bool trainable) const {
  if (batch.empty()) throw Error("detector: empty batch");
  BatchTrace tr;
  tr.params = nn::bind(params_, tape, trainable);
  const std::size_t B = batch.size();
  const std::size_t H = cfg_.hidden;
  const std::size_t w = input_width();
  std::array<NodeId, 4> parts{};
  for (std::size_t m = 0; m < 4; ++m) {
    const std::size_t base = m * kParamsPerSub;
    if (!cfg_.active[m]) {
      const std::size_t width = cfg_.mode == CombinerMode::Logits ? 2 : H;
      parts[m] = tape.leaf(Tensor({B, width}), false);
      tr.sub_logits[m] = tape.leaf(Tensor({B, 2}), false);
      continue;
    }
    const NodeId seq = tape.leaf(sequence(batch, m), false);
    nn::LstmState s{tape.leaf(Tensor({B, H}), false), tape.leaf(Tensor({B, H}), false)};
    // Last position first: the padding tail is consumed before the words, so
    // the final state is not a hundred decaying steps away from the sentence.
    for (std::size_t t = text::kMaxLength; t-- > 0;) {
      const NodeId x = tape.slice(seq, 1, t * w, (t + 1) * w);
      s = nn::lstm_step(tape, x, s, tr.params[base], tr.params[base + 1], H);
    }
    tr.sub_logits[m] = tape.affine(s.h, tr.params[base + 2], tr.params[base + 3]);
    parts[m] = cfg_.mode == CombinerMode::Logits ? tr.sub_logits[m] : s.h;
  }
  const std::size_t c = 4 * kParamsPerSub;
  const NodeId hidden = tape.relu(
      tape.affine(tape.concat(parts), tr.params[c], tr.params[c + 1]));
  tr.logits = tape.affine(hidden, tr.params[c + 2], tr.params[c + 3]);
  return tr;
}

std::vector<DetectorOutput> DetectorEnsemble::forward_batch(
    std::span<const Awi4* const> batch) const {
  Tape tape;
  const BatchTrace tr = trace(tape, batch, false);
  const Tensor& logits = tape.value(tr.logits);
  std::vector<DetectorOutput> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double l[2] = {logits.at(b, 0), logits.at(b, 1)};
    const auto p = victims::softmax(l);
    out[b].probs = {p[0], p[1]};
    out[b].verdict = victims::argmax(p).label;
    for (std::size_t m = 0; m < 4; ++m) {
      const Tensor& s = tape.value(tr.sub_logits[m]);
      out[b].sub_logits[m] = {s.at(b, 0), s.at(b, 1)};
    }
  }
  return out;
}

DetectorOutput DetectorEnsemble::forward(const Awi4& awi) const {
  const Awi4* one[] = {&awi};
  return forward_batch(one).front();
}

nn::Checkpoint DetectorEnsemble::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.arch = "detector";
  ck.meta["num_classes"] = std::to_string(cfg_.num_classes);
  ck.meta["hidden"] = std::to_string(cfg_.hidden);
  ck.meta["combiner_hidden"] = std::to_string(cfg_.combiner_hidden);
  ck.meta["mode"] = to_string(cfg_.mode);
  ck.meta["view"] = to_string(cfg_.view);
  std::string mask;
  for (bool a : cfg_.active) mask += a ? '1' : '0';
  ck.meta["active"] = mask;
  for (std::size_t m = 0; m < 4; ++m) {
    ck.meta["scale." + std::string(saliency::to_string(saliency::kMethods[m]))] = hex(scale_[m]);
  }
  ck.params = params_;
  return ck;
}

DetectorEnsemble DetectorEnsemble::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.arch != "detector") throw FormatError("checkpoint arch '" + ck.arch + "' is not a detector");
  DetectorConfig cfg;
  std::array<double, 4> scale{};
  try {
    cfg.num_classes = std::stoul(nn::meta_get(ck, "num_classes"));
    cfg.hidden = std::stoul(nn::meta_get(ck, "hidden"));
    cfg.combiner_hidden = std::stoul(nn::meta_get(ck, "combiner_hidden"));
    cfg.mode = parse_combiner_mode(nn::meta_get(ck, "mode"));
    cfg.view = parse_input_view(nn::meta_get(ck, "view"));
    const std::string mask = nn::meta_get(ck, "active");
    if (mask.size() != 4) throw FormatError("bad active mask");
    for (std::size_t m = 0; m < 4; ++m) {
      cfg.active[m] = mask[m] == '1';
      const std::string key = "scale." + std::string(saliency::to_string(saliency::kMethods[m]));
      scale[m] = std::strtod(nn::meta_get(ck, key).c_str(), nullptr);
    }
  } catch (const std::logic_error&) {
    throw FormatError("detector checkpoint has malformed meta data");
  } catch (const ConfigError& e) {
    throw FormatError(std::string("detector checkpoint: ") + e.what());
  }
  DetectorEnsemble ens(cfg, 0);
  nn::assign_params(ens.params_, ck.params);
  ens.scale_ = scale;
  return ens;
}

void save_detector(const DetectorEnsemble& ens, const std::string& path) {
  nn::save_checkpoint(ens.to_checkpoint(), path);
}

DetectorEnsemble load_detector(const std::string& path) {
  return DetectorEnsemble::from_checkpoint(nn::load_checkpoint(path));
}

}  // namespace textshield::detector
