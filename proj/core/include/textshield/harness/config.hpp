#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textshield/attacks/attacks.hpp"
#include "textshield/corrector/corrector.hpp"
#include "textshield/detector/ensemble.hpp"
#include "textshield/detector/training.hpp"
#include "textshield/saliency/awi.hpp"
#include "textshield/victims/victim.hpp"

namespace textshield::harness {

// Every knob of an experiment. Files use `key = value` lines; `#` starts a
// comment. See config_keys() for the documented list with defaults.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/default";

  std::string dataset_name = "synth";
  std::string train_path;
  std::string test_path;
  std::size_t num_classes = 2;
  double dev_fraction = 0.1;
  std::string embeddings_path;  // empty: seeded random vectors
  std::size_t embed_dim = 32;   // only used without an embeddings file
  std::string attack_lexicon;
  std::string corrector_lexicon;  // empty: same as attack_lexicon

  victims::VictimConfig victim;
  victims::TrainConfig victim_train = [] {
    victims::TrainConfig t;
    t.epochs = 3;
    return t;
  }();

  std::vector<attacks::AttackKind> train_attacks{attacks::AttackKind::Pwws,
                                                 attacks::AttackKind::TextFooler,
                                                 attacks::AttackKind::Ga};
  std::string held_out = "iga";  // empty: no leave-one-attack-out set
  std::vector<attacks::AttackKind> eval_attacks{std::begin(attacks::kAttackKinds),
                                                std::end(attacks::kAttackKinds)};
  attacks::AttackConfig attack;

  std::size_t k = 200;  // adversarial detector-training sentences per class
  std::size_t held_out_k = 50;
  detector::DetectorConfig detector;
  detector::DetectorTrainConfig detector_train;

  // Backward passes start from class probabilities; logits lose the margin.
  saliency::SaliencyOptions saliency = [] {
    saliency::SaliencyOptions o;
    o.target = saliency::Target::Probability;
    return o;
  }();
  corrector::CorrectorConfig corrector;
  double fgws_delta_f = 0.1;

  std::size_t eval_n = 200;
  std::vector<double> ablate_betas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::size_t> ablate_k_grid{50, 100, 200};
  std::size_t ablate_seeds = 3;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

// All keys in canonical order.
const std::vector<ConfigKey>& config_keys();

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);  // MissingArtifactError if absent

// Sets one key from its textual value; ConfigError on unknown keys or bad values.
void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const ExperimentConfig& cfg, const std::string& key);

// `key = value` for every key except `out`, canonical order. Its FNV-1a hash identifies
// the configuration in every report row.
std::string canonical_text(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex digits

}  // namespace textshield::harness
