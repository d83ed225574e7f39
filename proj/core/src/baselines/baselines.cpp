#include "textshield/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::baselines {

void FgwsConfig::validate() const {
  if (!(delta_f > 0.0 && delta_f < 1.0)) throw ConfigError("fgws delta_f must be in (0, 1)");
  if (!(gamma >= 0.0)) throw ConfigError("fgws gamma must be >= 0");
}

text::Tokens fgws_transform(const text::Tokens& tokens, const text::SynonymLexicon& lexicon,
                            const text::FrequencyTable& freq, const text::Vocabulary& vocab,
                            double delta_f) {
  text::Tokens out = tokens;
  for (auto& w : out) {
    if (!freq.is_low_frequency(w, delta_f)) continue;
    const auto own = freq.count(w);
    const std::string* best = nullptr;
    std::uint64_t best_count = own;
    const auto candidates = text::synonyms_in_vocab(w, lexicon, vocab);
    for (const auto& c : candidates) {
      const auto n = freq.count(c);
      if (n > best_count || (best && n == best_count && c < *best)) {
        best = &c;
        best_count = n;
      }
    }
    if (best) w = *best;
  }
  return out;
}

FgwsOutput fgws_detect(const victims::TextClassifier& victim, const text::Tokens& tokens,
                       const text::Vocabulary& vocab, const text::SynonymLexicon& lexicon,
                       const text::FrequencyTable& freq, const FgwsConfig& cfg) {
  cfg.validate();
  FgwsOutput out;
  const auto p = victim.probabilities(text::encode(tokens, vocab));
  const std::size_t y = victims::argmax(p).label;
  out.transformed = fgws_transform(tokens, lexicon, freq, vocab, cfg.delta_f);
  if (out.transformed != tokens) {
    out.score = p[y] - victim.probabilities(text::encode(out.transformed, vocab))[y];
  }
  out.adversarial = out.score > cfg.gamma;
  return out;
}

double tune_fgws_gamma(const std::vector<double>& scores, const std::vector<std::size_t>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw Error("tune_fgws_gamma: need matching, non-empty scores and labels");
  }
  std::vector<double> grid{0.0};
  for (double s : scores) {
    if (s > 0.0) grid.push_back(s);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double best_gamma = 0.0, best_f1 = -1.0;
  std::vector<std::size_t> pred(scores.size());
  for (double g : grid) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > g ? 1 : 0;
    const double f1 = detector::evaluate_detection(pred, labels).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_gamma = g;
    }
  }
  return best_gamma;
}

std::vector<double> wdr_features(const victims::TextClassifier& victim,
                                 const text::EncodedExample& ex) {
  const std::size_t y = victim.predict(ex).label;
  std::vector<double> f;
  for (std::size_t i = 0; i < ex.true_length; ++i) {
    text::EncodedExample probe = ex;
    probe.ids[i] = text::kUnkId;
    const auto z = victim.logits(probe);
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < z.size(); ++c) {
      if (c != y) other = std::max(other, z[c]);
    }
    f.push_back(z[y] - other);
  }
  std::sort(f.begin(), f.end(), std::greater<>());
  f.resize(kWdrFeatures, 0.0);
  return f;
}

WdrModel::WdrModel(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "wdr"));
  params_.add("head.weight", nn::xavier_uniform(2, kWdrFeatures, rng));
  params_.add("head.bias", grad::Tensor({2}));
}

std::vector<double> WdrModel::probabilities(const std::vector<double>& features) const {
  if (features.size() != kWdrFeatures) throw ShapeError("wdr: expected 128 features");
  const auto& w = params_[0];
  const auto& b = params_[1];
  std::vector<double> z(2);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = b[c];
    for (std::size_t j = 0; j < kWdrFeatures; ++j) s += w[c * kWdrFeatures + j] * features[j];
    z[c] = s;
  }
  return victims::softmax(z);
}

std::size_t WdrModel::detect(const std::vector<double>& features) const {
  return victims::argmax(probabilities(features)).label;
}

nn::Checkpoint WdrModel::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.arch = "wdr";
  ck.params = params_;
  return ck;
}

WdrModel WdrModel::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.arch != "wdr") throw FormatError("checkpoint arch '" + ck.arch + "' is not wdr");
  WdrModel m(0);
  nn::assign_params(m.params_, ck.params);
  return m;
}

namespace {

void check(const FeatureSet& s, const char* what) {
  if (s.features.size() != s.labels.size()) {
    throw Error(std::string("wdr_train: ") + what + " features and labels differ in size");
  }
  if (s.features.empty()) throw Error(std::string("wdr_train: empty ") + what + " split");
}

double accuracy(const WdrModel& m, const FeatureSet& s) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < s.features.size(); ++i) hit += m.detect(s.features[i]) == s.labels[i];
  return static_cast<double>(hit) / static_cast<double>(s.features.size());
}

}  // namespace

WdrTrainRecord wdr_train(WdrModel& model, const FeatureSet& train, const FeatureSet& dev,
                         const detector::DetectorTrainConfig& cfg) {
  check(train, "train");
  check(dev, "dev");
  if (cfg.batch_size == 0) throw ConfigError("wdr batch size must be >= 1");
  WdrTrainRecord rec;
  rec.dev_accuracy.push_back(accuracy(model, dev));
  double best_acc = rec.dev_accuracy.front();
  if (cfg.max_epochs == 0) return rec;

  auto& params = model.params();
  nn::ParamStore best = params;
  nn::Adam adam(params, {cfg.lr, 0.9, 0.999, 1e-8});
  nn::Gradients grads(params);
  std::mt19937_64 rng(derive_seed(cfg.seed, "wdr-train"));
  std::vector<std::size_t> order(train.features.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<double> x;
      std::vector<std::size_t> labels;
      for (std::size_t b = start; b < end; ++b) {
        const auto& f = train.features[order[b]];
        if (f.size() != kWdrFeatures) throw ShapeError("wdr: expected 128 features");
        x.insert(x.end(), f.begin(), f.end());
        labels.push_back(train.labels[order[b]]);
      }
      grad::Tape tape;
      const auto ids = nn::bind(params, tape, true);
      const auto in = tape.leaf(grad::Tensor({end - start, kWdrFeatures}, std::move(x)), false);
      const auto loss = tape.softmax_cross_entropy(tape.affine(in, ids[0], ids[1]), labels);
      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) throw NumericError("wdr_train: non-finite loss");
      loss_sum += lv * static_cast<double>(end - start);
      grads.zero();
      grads.accumulate(tape.backward(loss), ids);
      adam.step(params, grads);
    }
    rec.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double acc = accuracy(model, dev);
    rec.dev_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      rec.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  params = best;
  return rec;
}

detector::DetectionMetrics wdr_evaluate(const WdrModel& model, const FeatureSet& data) {
  std::vector<std::size_t> pred;
  for (const auto& f : data.features) pred.push_back(model.detect(f));
  return detector::evaluate_detection(pred, data.labels);
}

}  // namespace textshield::baselines
