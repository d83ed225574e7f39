#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textshield/detector/metrics.hpp"
#include "textshield/detector/training.hpp"
#include "textshield/nn/checkpoint.hpp"
#include "textshield/nn/params.hpp"
#include "textshield/text/frequency.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/vocabulary.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::baselines {

// Frequency-guided word substitution detector.
struct FgwsConfig {
  double delta_f = 0.1;  // percentile below which a word counts as rare
  double gamma = 0.0;    // threshold on the confidence drop

  void validate() const;  // ConfigError
};

// Replaces every rare word by its most frequent synonym that is more frequent
// than the word itself (ties lexicographic); other words stay.
text::Tokens fgws_transform(const text::Tokens& tokens, const text::SynonymLexicon& lexicon,
                            const text::FrequencyTable& freq, const text::Vocabulary& vocab,
                            double delta_f);

struct FgwsOutput {
  bool adversarial = false;
  double score = 0.0;  // drop in the predicted class probability
  text::Tokens transformed;
};

FgwsOutput fgws_detect(const victims::TextClassifier& victim, const text::Tokens& tokens,
                       const text::Vocabulary& vocab, const text::SynonymLexicon& lexicon,
                       const text::FrequencyTable& freq, const FgwsConfig& cfg);

// gamma maximising dev F1 over thresholds at the observed scores (and 0);
// the smallest such gamma wins ties.
double tune_fgws_gamma(const std::vector<double>& scores, const std::vector<std::size_t>& labels);

inline constexpr std::size_t kWdrFeatures = text::kMaxLength;

// Per word: margin of the original prediction over the best other class with
// that word set to UNK. Sorted descending, zero-padded to kWdrFeatures.
std::vector<double> wdr_features(const victims::TextClassifier& victim,
                                 const text::EncodedExample& ex);

// Affine 128 -> 2 head on WDR features.
class WdrModel {
 public:
  explicit WdrModel(std::uint64_t seed);

  std::vector<double> probabilities(const std::vector<double>& features) const;
  std::size_t detect(const std::vector<double>& features) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  nn::Checkpoint to_checkpoint() const;
  static WdrModel from_checkpoint(const nn::Checkpoint& ck);

 private:
  WdrModel() = default;
  nn::ParamStore params_;
};

struct FeatureSet {
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
};

struct WdrTrainRecord {
  std::vector<double> train_loss;
  std::vector<double> dev_accuracy;  // index 0 is before training
  std::size_t best_epoch = 0;
};

// Same protocol as the saliency detector: Adam, shuffled mini-batches,
// best-dev-epoch selection with patience. Input scaling is not used.
WdrTrainRecord wdr_train(WdrModel& model, const FeatureSet& train, const FeatureSet& dev,
                         const detector::DetectorTrainConfig& cfg);

detector::DetectionMetrics wdr_evaluate(const WdrModel& model, const FeatureSet& data);

}  // namespace textshield::baselines
