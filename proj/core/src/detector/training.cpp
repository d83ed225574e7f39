#include "textshield/detector/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::detector {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<const DetectionExample*> DetectionDataset::split(Split s) const {
  std::vector<const DetectionExample*> out;
  for (const auto& e : examples) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

namespace {

Split split_for(std::size_t i, std::size_t n) {
  const std::size_t n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const std::size_t n_dev = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  if (i < n_train) return Split::Train;
  if (i < n_train + n_dev) return Split::Dev;
  return Split::Test;
}

}  // namespace

DetectionDataset assemble_detection_data(
    const victims::DifferentiableClassifier& victim,
    const std::vector<SentenceSample>& adversarial,
    const std::vector<SentenceSample>& benign, const std::string& held_out,
    std::uint64_t seed, const saliency::SaliencyOptions& opts) {
  if (adversarial.empty()) throw Error("no adversarial sentences to build detection data from");
  for (const auto& s : adversarial) {
    if (!held_out.empty() && s.attack == held_out) {
      throw ConfigError("held-out attack '" + held_out + "' appears in detector training data");
    }
  }
  const std::size_t n = std::min(adversarial.size(), benign.size());
  if (n == 0) throw Error("no benign sentences to pair with adversarial ones");

  std::mt19937_64 rng(derive_seed(seed, "detection-split"));
  std::vector<std::size_t> adv_order(adversarial.size()), ben_order(benign.size());
  std::iota(adv_order.begin(), adv_order.end(), 0);
  std::iota(ben_order.begin(), ben_order.end(), 0);
  std::shuffle(adv_order.begin(), adv_order.end(), rng);
  std::shuffle(ben_order.begin(), ben_order.end(), rng);

  DetectionDataset data;
  data.examples.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int side = 0; side < 2; ++side) {
      const SentenceSample& s = side == 0 ? adversarial[adv_order[i]] : benign[ben_order[i]];
      DetectionExample e;
      e.awi = saliency::awi_all(victim, s.ex, opts);
      e.label = side == 0 ? 1 : 0;
      e.true_class = s.ex.label;
      e.attack = side == 0 ? s.attack : "";
      e.text = s.text;
      e.split = split_for(i, n);
      data.examples.push_back(std::move(e));
    }
  }
  return data;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("truncated detection dataset");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string take_str(std::string_view bytes, std::size_t& pos) {
  const auto n = take<std::uint32_t>(bytes, pos);
  if (bytes.size() - pos < n) throw FormatError("truncated detection dataset");
  std::string s(bytes.substr(pos, n));
  pos += n;
  return s;
}

constexpr std::string_view kDataMagic = "TSDD0001";

}  // namespace

void save_detection_data(const DetectionDataset& data, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::string bytes(kDataMagic);
  put<std::uint64_t>(bytes, data.examples.size());
  for (const auto& e : data.examples) {
    put<std::uint8_t>(bytes, static_cast<std::uint8_t>(e.label));
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(e.true_class));
    put<std::uint8_t>(bytes, static_cast<std::uint8_t>(e.split));
    put_str(bytes, e.attack);
    put_str(bytes, e.text);
    for (const auto& m : e.awi) saliency::append_awi(bytes, m);
  }
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

  std::ofstream man(path + ".manifest.tsv", std::ios::binary | std::ios::trunc);
  man << "index\tlabel\ttrue_class\tattack\tsplit\ttext\n";
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& e = data.examples[i];
    man << i << '\t' << e.label << '\t' << e.true_class << '\t'
        << (e.attack.empty() ? "-" : e.attack) << '\t' << to_string(e.split) << '\t'
        << e.text << '\n';
  }
}

DetectionDataset load_detection_data(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing detection dataset " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.compare(0, kDataMagic.size(), kDataMagic) != 0) {
    throw VersionError(path + ": not a detection dataset of this version");
  }
  std::size_t pos = kDataMagic.size();
  DetectionDataset data;
  const auto n = take<std::uint64_t>(bytes, pos);
  for (std::uint64_t i = 0; i < n; ++i) {
    DetectionExample e;
    e.label = take<std::uint8_t>(bytes, pos);
    e.true_class = take<std::uint32_t>(bytes, pos);
    const auto split = take<std::uint8_t>(bytes, pos);
    if (split > 2) throw FormatError(path + ": bad split tag");
    e.split = static_cast<Split>(split);
    e.attack = take_str(bytes, pos);
    e.text = take_str(bytes, pos);
    for (auto& m : e.awi) m = saliency::read_awi(bytes, pos);
    data.examples.push_back(std::move(e));
  }
  return data;
}

std::vector<std::size_t> predict_verdicts(const DetectorEnsemble& ens,
                                          const std::vector<const DetectionExample*>& xs) {
  std::vector<std::size_t> out;
  out.reserve(xs.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    std::vector<const Awi4*> batch;
    for (std::size_t i = start; i < std::min(xs.size(), start + kChunk); ++i) {
      batch.push_back(&xs[i]->awi);
    }
    for (const auto& o : ens.forward_batch(batch)) out.push_back(o.verdict);
  }
  return out;
}

DetectionMetrics evaluate(const DetectorEnsemble& ens,
                          const std::vector<const DetectionExample*>& xs) {
  std::vector<std::size_t> truth;
  for (const auto* x : xs) truth.push_back(x->label);
  return evaluate_detection(predict_verdicts(ens, xs), truth);
}

namespace {

double dev_accuracy(const DetectorEnsemble& ens, const std::vector<const DetectionExample*>& dev) {
  return evaluate(ens, dev).accuracy;
}

std::array<double, 4> fit_scales(const std::vector<const DetectionExample*>& train) {
  std::array<double, 4> scale{};
  for (std::size_t m = 0; m < 4; ++m) {
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto* e : train) {
      for (double v : e->awi[m].values.data()) sq += v * v;
      n += e->awi[m].values.size();
    }
    const double rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    scale[m] = rms > 0.0 && std::isfinite(rms) ? 1.0 / rms : 1.0;
  }
  return scale;
}

}  // namespace

DetectorTrainRecord train_detector(DetectorEnsemble& ens, const DetectionDataset& data,
                                   const DetectorTrainConfig& cfg) {
  const auto train = data.split(Split::Train);
  const auto dev = data.split(Split::Dev);
  if (train.empty() || dev.empty()) throw Error("train_detector: train and dev splits must be non-empty");
  if (cfg.batch_size == 0) throw ConfigError("detector batch size must be >= 1");
  if (cfg.fit_scale) ens.set_input_scale(fit_scales(train));

  DetectorTrainRecord rec;
  rec.dev_accuracy.push_back(dev_accuracy(ens, dev));
  rec.best_dev_accuracy = rec.dev_accuracy.front();
  if (cfg.max_epochs == 0) return rec;

  auto& params = ens.params();
  nn::ParamStore best = params;
  nn::Adam adam(params, {cfg.lr, 0.9, 0.999, 1e-8});
  nn::Gradients grads(params);
  std::mt19937_64 rng(derive_seed(cfg.seed, "detector-train"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_best = 0;
  bool first_batch = true;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Awi4*> batch;
      std::vector<std::size_t> labels;
      for (std::size_t b = start; b < end; ++b) {
        batch.push_back(&train[order[b]]->awi);
        labels.push_back(train[order[b]]->label);
      }
      grad::Tape tape;
      const BatchTrace tr = ens.trace(tape, batch, true);
      const grad::NodeId loss = tape.softmax_cross_entropy(tr.logits, labels);
      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) {
        throw NumericError("train_detector: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += lv * static_cast<double>(end - start);
      grads.zero();
      grads.accumulate(tape.backward(loss), tr.params);
      if (first_batch) {
        for (std::size_t m = 0; m < 4; ++m) {
          double sq = 0.0;
          for (std::size_t i : ens.sub_params(m)) sq += grads.norm(i) * grads.norm(i);
          rec.first_batch_grad_norm[m] = std::sqrt(sq);
        }
        first_batch = false;
      }
      adam.step(params, grads);
    }
    rec.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    const double acc = dev_accuracy(ens, dev);
    rec.dev_accuracy.push_back(acc);
    if (acc > rec.best_dev_accuracy) {
      rec.best_dev_accuracy = acc;
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

}  // namespace textshield::detector
