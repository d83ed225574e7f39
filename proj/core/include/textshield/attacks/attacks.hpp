#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "textshield/text/embeddings.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/vocabulary.hpp"
#include "textshield/victims/classifier.hpp"

namespace textshield::attacks {

enum class AttackKind { Pwws, TextFooler, Ga, Iga };

inline constexpr AttackKind kAttackKinds[] = {AttackKind::Pwws, AttackKind::TextFooler,
                                              AttackKind::Ga, AttackKind::Iga};

std::string to_string(AttackKind k);
AttackKind parse_attack(const std::string& s);  // ConfigError when unknown

struct AttackConfig {
  AttackKind kind = AttackKind::Pwws;
  double max_fraction = 0.25;
  std::size_t population = 20;
  std::size_t generations = 20;
  double mutation_rate = 0.3;
  double cosine_threshold = 0.5;  // TextFooler candidate filter
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
};

// Substitutions allowed for a sentence of `true_length` words.
std::size_t substitution_budget(std::size_t true_length, double fraction);

struct Substitution {
  std::size_t position = 0;
  std::string old_word;
  std::string new_word;

  friend bool operator==(const Substitution&, const Substitution&) = default;
};

struct AttackResult {
  AttackKind kind = AttackKind::Pwws;
  text::Tokens original;
  std::size_t label = 0;  // true label
  text::Tokens adversarial;
  std::vector<Substitution> substitutions;  // ordered by position
  bool success = false;                     // victim no longer predicts `label`
  double confidence_before = 0.0;           // true-class probability
  double confidence_after = 0.0;
  std::size_t queries = 0;
};

// What an attack may look at. Embeddings are only read by TextFooler.
struct AttackContext {
  const victims::TextClassifier* victim = nullptr;
  const text::Vocabulary* vocab = nullptr;
  const text::SynonymLexicon* lexicon = nullptr;
  const text::EmbeddingTable* embeddings = nullptr;
};

AttackResult attack_pwws(const text::Tokens& sentence, std::size_t label,
                         const AttackContext& ctx, const AttackConfig& cfg);
AttackResult attack_textfooler(const text::Tokens& sentence, std::size_t label,
                               const AttackContext& ctx, const AttackConfig& cfg);
AttackResult attack_genetic(const text::Tokens& sentence, std::size_t label,
                            const AttackContext& ctx, const AttackConfig& cfg, bool improved);

// Dispatches on cfg.kind.
AttackResult run_attack(const text::Tokens& sentence, std::size_t label,
                        const AttackContext& ctx, const AttackConfig& cfg);

// Re-checks success, synonym membership, length and budget against the
// victim. Returns an empty string when the result is consistent.
std::string check_result(const AttackResult& r, const AttackContext& ctx, double max_fraction);

struct CorpusSentence {
  text::Tokens tokens;
  std::size_t label = 0;
};

struct CorpusOptions {
  std::vector<AttackKind> kinds{std::begin(kAttackKinds), std::end(kAttackKinds)};
  std::size_t per_class_quota = 0;
  std::size_t num_classes = 2;
  AttackConfig base;  // kind is overridden per attempt; seed is the master seed
  std::function<void(const std::string&)> warn;
};

// Attacks sentences round-robin over kinds, per class, keeping successful
// results with at least one substitution on originally correct inputs.
// Sentence i is attacked with seed derive_seed(base.seed, i), so results do
// not depend on iteration order. Throws Error when nothing succeeds.
std::vector<AttackResult> generate_adversarial_corpus(const std::vector<CorpusSentence>& data,
                                                      const AttackContext& ctx,
                                                      const CorpusOptions& opts);

// `label<TAB>adversarial<TAB>original<TAB>attack<TAB>n_subs`, one per line.
void save_adversarial(const std::string& path, const std::vector<AttackResult>& results);

struct AdversarialRecord {
  std::size_t label = 0;
  std::string adversarial;
  std::string original;
  AttackKind kind = AttackKind::Pwws;
  std::size_t n_subs = 0;
};
std::vector<AdversarialRecord> load_adversarial(const std::string& path);

}  // namespace textshield::attacks
