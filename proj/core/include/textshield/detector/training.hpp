#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textshield/detector/ensemble.hpp"
#include "textshield/detector/metrics.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::detector {

enum class Split { Train, Dev, Test };
std::string to_string(Split s);

struct DetectionExample {
  Awi4 awi;
  std::size_t label = 0;  // 1 = adversarial
  std::size_t true_class = 0;
  std::string attack;  // provenance; empty for benign sentences
  std::string text;
  Split split = Split::Train;
};

struct DetectionDataset {
  std::vector<DetectionExample> examples;

  std::vector<const DetectionExample*> split(Split s) const;
};

// A sentence headed for the detection dataset.
struct SentenceSample {
  text::EncodedExample ex;
  std::string text;
  std::string attack;  // empty for benign
};

// Pairs every adversarial sentence with a benign one (truncating the larger
// side), computes the four AWI matrices of each and splits both halves 7:2:1
// after a seeded shuffle. Throws ConfigError if any adversarial sentence comes
// from `held_out`, Error if there are none.
DetectionDataset assemble_detection_data(
    const victims::DifferentiableClassifier& victim,
    const std::vector<SentenceSample>& adversarial,
    const std::vector<SentenceSample>& benign, const std::string& held_out,
    std::uint64_t seed, const saliency::SaliencyOptions& opts = {});

// Binary dataset file plus a `<path>.manifest.tsv` listing
// index, label, true class, attack, split and text per example.
void save_detection_data(const DetectionDataset& data, const std::string& path);
DetectionDataset load_detection_data(const std::string& path);

struct DetectorTrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  // Fit per-method input scales (1 / RMS over the train split) before training.
  bool fit_scale = true;
};

struct DetectorTrainRecord {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> dev_accuracy;  // index 0 is before training
  std::size_t best_epoch = 0;
  double best_dev_accuracy = 0.0;
  // Gradient norm reaching each sub-detector on the first batch.
  std::array<double, 4> first_batch_grad_norm{};
};

// Joint end-to-end Adam training on the combiner's cross-entropy. Keeps the
// parameters of the best dev-accuracy epoch; stops after `patience` epochs
// without improvement.
DetectorTrainRecord train_detector(DetectorEnsemble& ens, const DetectionDataset& data,
                                   const DetectorTrainConfig& cfg);

std::vector<std::size_t> predict_verdicts(const DetectorEnsemble& ens,
                                          const std::vector<const DetectionExample*>& xs);
DetectionMetrics evaluate(const DetectorEnsemble& ens,
                          const std::vector<const DetectionExample*>& xs);

}  // namespace textshield::detector
