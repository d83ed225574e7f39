#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textshield/text/dataset.hpp"
#include "textshield/text/lexicon.hpp"

namespace textshield::harness {

// Two-class sentiment-like corpus over pseudo-words.
//
// Each sentiment concept has a frequent canonical form, a medium-frequency
// synonym and two rare synonyms. The rare forms show up almost only as noise
// in sentences of the opposite label, so a trained victim reads them as
// evidence for the other class. That is the weakness a synonym attack
// exploits and the one a frequency-seeking corrector undoes.
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_train = 3000;
  std::size_t n_test = 800;
  std::size_t concepts_per_class = 10;
  std::size_t neutral_groups = 40;
  std::size_t min_length = 8;
  std::size_t max_length = 16;
  double noise_prob = 0.6;   // chance of one rare opposite-class word
  double label_noise = 0.03;  // train split only
  std::size_t embed_dim = 32;
  double embed_spread = 0.3;  // member offset from its group centre
};

struct SynthCorpus {
  std::vector<text::Record> train;
  std::vector<text::Record> test;
  text::SynonymLexicon lexicon;  // POS tagged
  // token -> vector, in generation order
  std::vector<std::pair<std::string, std::vector<double>>> embeddings;
};

SynthCorpus make_synthetic(const SynthConfig& cfg);

// Writes train.tsv, test.tsv, lexicon.tsv and embeddings.txt into `dir`.
void write_synthetic(const SynthCorpus& corpus, const std::string& dir);

}  // namespace textshield::harness
