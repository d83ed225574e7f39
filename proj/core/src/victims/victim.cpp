#include "textshield/victims/victim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::victims {

using grad::NodeId;
using grad::Tensor;

std::string to_string(Arch arch) { return arch == Arch::TextCnn ? "textcnn" : "lstm"; }

Arch parse_arch(const std::string& s) {
  if (s == "textcnn") return Arch::TextCnn;
  if (s == "lstm") return Arch::Lstm;
  throw ConfigError("unknown victim architecture '" + s + "' (textcnn|lstm)");
}

VictimModel::VictimModel(const VictimConfig& cfg, text::EmbeddingTable embeddings,
                         std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.num_classes < 2) throw ConfigError("victim needs at least 2 classes");
  std::mt19937_64 rng(derive_seed(seed, "victim-init"));
  const std::size_t k = embeddings.dim();
  params_.add("embedding", std::move(embeddings.matrix));
  if (cfg.arch == Arch::TextCnn) {
    if (cfg.widths.empty() || cfg.filters == 0) throw ConfigError("textcnn needs widths and filters");
    for (std::size_t w : cfg.widths) {
      if (w == 0 || w > text::kMaxLength) throw ConfigError("bad filter width");
      const std::string p = "conv" + std::to_string(w);
      params_.add(p + ".weight", nn::xavier_uniform(cfg.filters, w * k, rng));
      params_.add(p + ".bias", Tensor({cfg.filters}));
    }
  } else {
    if (cfg.hidden == 0) throw ConfigError("lstm needs hidden > 0");
    nn::init_lstm(params_, "lstm", k, cfg.hidden, rng);
  }
  params_.add("out.weight", nn::xavier_uniform(cfg.num_classes, feature_width(), rng));
  params_.add("out.bias", Tensor({cfg.num_classes}));
}

std::size_t VictimModel::feature_width() const {
  return cfg_.arch == Arch::TextCnn ? cfg_.filters * cfg_.widths.size() : cfg_.hidden;
}

Tensor VictimModel::embed(const text::EncodedExample& ex) const {
  const Tensor& table = params_[0];
  const std::size_t k = embed_dim();
  Tensor out({text::kMaxLength, k});
  for (std::size_t t = 0; t < text::kMaxLength && t < ex.ids.size(); ++t) {
    const std::size_t id = ex.ids[t];
    if (id >= vocab_size()) throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
    std::copy_n(table.data().begin() + id * k, k, out.data().begin() + t * k);
  }
  return out;
}

Trace VictimModel::trace(grad::Tape& tape, NodeId input, std::size_t true_length,
                         bool trainable, const std::vector<double>* dropout_mask) const {
  Trace tr;
  tr.params.assign(params_.size(), kUnbound);
  for (std::size_t i = 1; i < params_.size(); ++i) {
    tr.params[i] = tape.leaf(params_[i], trainable);
  }
  NodeId features;
  if (cfg_.arch == Arch::TextCnn) {
    std::vector<NodeId> pooled;
    for (std::size_t j = 0; j < cfg_.widths.size(); ++j) {
      const NodeId conv = tape.conv1d(input, tr.params[1 + 2 * j],
                                      tr.params[2 + 2 * j], cfg_.widths[j]);
      pooled.push_back(tape.max_pool_time(tape.relu(conv)));
    }
    features = tape.concat(pooled);
  } else {
    const std::size_t len = std::clamp<std::size_t>(true_length, 1, text::kMaxLength);
    const NodeId zero_h = tape.leaf(Tensor({1, cfg_.hidden}), false);
    const NodeId zero_c = tape.leaf(Tensor({1, cfg_.hidden}), false);
    nn::LstmState s{zero_h, zero_c};
    for (std::size_t t = 0; t < len; ++t) {
      const NodeId x = tape.slice(input, 0, t, t + 1);
      s = nn::lstm_step(tape, x, s, tr.params[1], tr.params[2], cfg_.hidden);
    }
    features = s.h;
  }
  if (dropout_mask) {
    const auto& shape = tape.value(features).shape();
    const NodeId mask = tape.leaf(Tensor(shape, *dropout_mask), false);
    features = tape.mul(features, mask, 0);
  }
  const std::size_t n = params_.size();
  tr.logits = tape.affine(features, tr.params[n - 2], tr.params[n - 1]);
  return tr;
}

NodeId VictimModel::record(grad::Tape& tape, NodeId input, std::size_t true_length) const {
  return trace(tape, input, true_length, false, nullptr).logits;
}

nn::Checkpoint VictimModel::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.arch = to_string(cfg_.arch);
  ck.meta["num_classes"] = std::to_string(cfg_.num_classes);
  std::string widths;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    widths += (i ? "," : "") + std::to_string(cfg_.widths[i]);
  }
  ck.meta["widths"] = widths;
  ck.meta["filters"] = std::to_string(cfg_.filters);
  ck.meta["hidden"] = std::to_string(cfg_.hidden);
  ck.params = params_;
  return ck;
}

VictimModel VictimModel::from_checkpoint(const nn::Checkpoint& ck) {
  VictimConfig cfg;
  cfg.arch = parse_arch(ck.arch);
  try {
    cfg.num_classes = std::stoul(nn::meta_get(ck, "num_classes"));
    cfg.filters = std::stoul(nn::meta_get(ck, "filters"));
    cfg.hidden = std::stoul(nn::meta_get(ck, "hidden"));
    cfg.widths.clear();
    std::stringstream ss(nn::meta_get(ck, "widths"));
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) cfg.widths.push_back(std::stoul(item));
    }
  } catch (const std::logic_error&) {
    throw FormatError("victim checkpoint has malformed meta data");
  }
  if (ck.params.size() == 0 || ck.params[0].rank() != 2) {
    throw FormatError("victim checkpoint lacks an embedding table");
  }
  text::EmbeddingTable emb{ck.params[0]};
  VictimModel model(cfg, std::move(emb), 0);
  nn::assign_params(model.params_, ck.params);
  return model;
}

void save_victim(const VictimModel& model, const std::string& path) {
  nn::save_checkpoint(model.to_checkpoint(), path);
}

VictimModel load_victim(const std::string& path) {
  return VictimModel::from_checkpoint(nn::load_checkpoint(path));
}

TrainResult train_victim(VictimModel& model,
                         const std::vector<text::EncodedExample>& data,
                         const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (data.empty()) throw Error("train_victim: empty dataset");
  for (const auto& ex : data) {
    if (ex.label >= model.num_classes()) {
      throw Error("train_victim: label " + std::to_string(ex.label) + " >= class count");
    }
  }

  auto& params = model.params();
  nn::Adam adam(params, {cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
  nn::Gradients grads(params);
  std::mt19937_64 rng(derive_seed(cfg.seed, "victim-train"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = model.embed_dim();
  const std::size_t width = model.feature_width();
  const double keep = 1.0 - cfg.dropout;
  std::bernoulli_distribution keep_draw(keep);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        std::vector<double> mask;
        if (cfg.dropout > 0.0) {
          mask.resize(width);
          for (double& m : mask) m = keep_draw(rng) ? 1.0 / keep : 0.0;
        }
        grad::Tape tape;
        const NodeId input = tape.leaf(model.embed(ex), true);
        const Trace tr = model.trace(tape, input, ex.true_length, true,
                                     cfg.dropout > 0.0 ? &mask : nullptr);
        const NodeId loss = tape.softmax_cross_entropy(tr.logits, {ex.label});
        const double lv = tape.value(loss)[0];
        if (!std::isfinite(lv)) {
          throw NumericError("train_victim: non-finite loss at epoch " +
                             std::to_string(epoch + 1));
        }
        loss_sum += lv;
        const auto g = tape.backward(loss);
        grads.accumulate(g, tr.params, scale);
        // Scatter the input gradient into the embedding rows; PAD stays fixed.
        const auto& gin = g.at(input).data();
        auto& gemb = grads[0];
        for (std::size_t t = 0; t < text::kMaxLength; ++t) {
          const std::size_t id = ex.ids[t];
          if (id == text::kPadId) continue;
          for (std::size_t c = 0; c < k; ++c) gemb[id * k + c] += scale * gin[t * k + c];
        }
      }
      adam.step(params, grads);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
  }
  if (!params.all_finite()) throw NumericError("train_victim: parameters became non-finite");
  return result;
}

double accuracy(const TextClassifier& model,
                const std::vector<text::EncodedExample>& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : data) hits += model.predict(ex).label == ex.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace textshield::victims
