#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textshield/detector/ensemble.hpp"
#include "textshield/saliency/awi.hpp"
#include "textshield/text/frequency.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/vocabulary.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::corrector {

enum class Strategy { Saliency, PosVerb, PosNoun, PosNounVerb, FreqLow };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);  // ConfigError when unknown

struct CorrectorConfig {
  double beta = 0.4;
  Strategy strategy = Strategy::Saliency;
  double freq_low_percentile = 0.25;

  void validate() const;  // ConfigError on out-of-range values
};

// Indices i with column[i] > beta * (max - min) + min. The column must only
// cover real (non-PAD) positions.
std::vector<std::size_t> select_suspects(std::span<const double> column, double beta);

// Replaces each suspect by its most frequent in-vocabulary synonym (ties go
// to the lexicographically smaller token); words without one are kept.
text::Tokens correct(const text::Tokens& tokens, const std::vector<std::size_t>& suspects,
                     const text::SynonymLexicon& lexicon, const text::FrequencyTable& freq,
                     const text::Vocabulary& vocab);

// Suspects chosen without saliency: by lexicon POS tag or low corpus frequency.
std::vector<std::size_t> baseline_strategies(const text::Tokens& tokens, Strategy strategy,
                                             const text::SynonymLexicon& lexicon,
                                             const text::FrequencyTable& freq,
                                             const CorrectorConfig& cfg);

struct Suspect {
  std::size_t position = 0;
  double awi = 0.0;
};

struct DefenseOutcome {
  text::Tokens input;
  bool adversarial = false;  // detector verdict
  std::optional<text::Tokens> corrected;
  std::vector<Suspect> suspects;
  std::size_t initial_label = 0;
  double initial_confidence = 0.0;
  std::array<double, 2> detector_probs{};
  std::size_t final_label = 0;
  double final_confidence = 0.0;
};

// Everything defend() reads. A null detector routes every input straight to
// the victim.
struct DefenseContext {
  const victims::DifferentiableClassifier* victim = nullptr;
  const detector::DetectorEnsemble* detector = nullptr;
  const text::Vocabulary* vocab = nullptr;
  const text::SynonymLexicon* lexicon = nullptr;
  const text::FrequencyTable* freq = nullptr;
  saliency::SaliencyOptions saliency;
};

// Everything after the detector: given the VG matrix of `tokens` and the
// detector output (none when the detector is bypassed), pick suspects,
// correct and re-predict. defend() is analyse + detector + resolve().
DefenseOutcome resolve(const text::Tokens& tokens, const saliency::AwiMatrix& vg,
                       const detector::DetectorOutput* verdict, const DefenseContext& ctx,
                       const CorrectorConfig& cfg);

// One detector pass and at most one correction pass.
DefenseOutcome defend(const text::Tokens& tokens, const DefenseContext& ctx,
                      const CorrectorConfig& cfg);
DefenseOutcome defend(const std::string& sentence, const DefenseContext& ctx,
                      const CorrectorConfig& cfg);

std::string to_json(const DefenseOutcome& outcome);

}  // namespace textshield::corrector
