#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textshield/detector/training.hpp"
#include "textshield/harness/config.hpp"
#include "textshield/harness/report.hpp"
#include "textshield/text/embeddings.hpp"
#include "textshield/text/frequency.hpp"
#include "textshield/victims/victim.hpp"

namespace textshield::harness {

// Progress messages; stderr unless replaced. Pass an empty function to mute.
void set_log_sink(std::function<void(const std::string&)> sink);

struct Sentence {
  text::Tokens tokens;
  std::size_t label = 0;
};

// Artifact locations under cfg.out.
struct Paths {
  explicit Paths(const std::string& out);
  std::string root, prepared, train, dev, test, vocab, victim, adv_dir, adv_train,
      adv_held_out, eval_benign, detector_data, detector, rows, reports, analysis;
  std::string adv_eval(attacks::AttackKind k) const;
};

// Everything read back from `prepare` plus the fixed inputs.
struct Resources {
  std::vector<Sentence> train, dev, test;
  text::Vocabulary vocab;
  text::FrequencyTable freq;  // train split only
  text::EmbeddingTable embeddings;  // as loaded, before victim training
  text::SynonymLexicon attack_lexicon;
  text::SynonymLexicon corrector_lexicon;
};

Resources load_resources(const ExperimentConfig& cfg);

// Sentence hash used by the leakage audit.
std::uint64_t sentence_hash(const text::Tokens& tokens);

struct PrepareSummary {
  std::size_t train = 0, dev = 0, test = 0, vocab = 0;
};
PrepareSummary cmd_prepare(const ExperimentConfig& cfg);

struct VictimSummary {
  std::vector<double> epoch_loss;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
};
VictimSummary cmd_train_victim(const ExperimentConfig& cfg);

struct GenAdvSummary {
  std::size_t train_adversarial = 0;
  std::size_t held_out_adversarial = 0;
  std::size_t eval_sentences = 0;
  std::vector<std::pair<std::string, double>> eval_success_rate;
};
GenAdvSummary cmd_gen_adv(const ExperimentConfig& cfg);

// Detection data from the first `k` adversarial sentences per class of the
// training corpus, paired with unattacked train-split sentences.
detector::DetectionDataset build_detection_dataset(const ExperimentConfig& cfg,
                                                   const victims::VictimModel& victim,
                                                   const Resources& res, std::size_t k);

detector::DetectorEnsemble train_detector_model(const ExperimentConfig& cfg,
                                                const detector::DetectionDataset& data,
                                                const detector::Mask& active,
                                                std::uint64_t seed,
                                                detector::DetectorTrainRecord* record = nullptr);

detector::DetectorTrainRecord cmd_train_detector(const ExperimentConfig& cfg);

RowSet cmd_eval_detection(const ExperimentConfig& cfg);
RowSet cmd_eval_defense(const ExperimentConfig& cfg);

enum class AblationMode { BetaSweep, KSweep, DropSubdetector };
std::string to_string(AblationMode m);
AblationMode parse_ablation(const std::string& s);  // ConfigError when unknown

RowSet cmd_ablate(const ExperimentConfig& cfg, AblationMode mode);

ReportFiles cmd_report(const ExperimentConfig& cfg);

// prepare through report; ablations only when asked.
ReportFiles run_all(const ExperimentConfig& cfg, bool with_ablations);

}  // namespace textshield::harness
