#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "textshield/attacks/attacks.hpp"
#include "textshield/errors.hpp"

namespace fs = std::filesystem;
using namespace textshield;
using namespace textshield::attacks;
using text::Tokens;

namespace {

// logits = (threshold, sum of word scores); UNK and PAD score 0.
class BagClassifier : public victims::TextClassifier {
 public:
  BagClassifier(const text::Vocabulary& vocab, std::map<std::string, double> scores,
                double threshold)
      : score_(vocab.size(), 0.0), threshold_(threshold) {
    for (const auto& [w, s] : scores) score_.at(vocab.id(w)) = s;
  }
  std::size_t num_classes() const override { return 2; }
  std::vector<double> logits(const text::EncodedExample& ex) const override {
    double total = 0.0;
    for (std::size_t i = 0; i < ex.true_length; ++i) total += score_[ex.ids[i]];
    return {threshold_, total};
  }

 private:
  std::vector<double> score_;
  double threshold_;
};

struct Toy {
  text::Vocabulary vocab;
  text::SynonymLexicon lexicon;
  std::map<std::string, double> scores;
  double threshold = 0.0;
  Tokens sentence;
  std::unique_ptr<BagClassifier> victim;
  text::EmbeddingTable embeddings;

  void finalize() {
    for (const auto& [w, s] : scores) vocab.add(w);
    victim = std::make_unique<BagClassifier>(vocab, scores, threshold);
    // Orthogonal-ish random rows, then every synonym copies its headword so
    // the TextFooler filter passes unless asked to be stricter than 1.
    embeddings = text::random_embeddings(vocab, 16, 5);
    for (const auto& [head, syns] : lexicon.entries()) {
      const auto src = embeddings.row(vocab.id(head));
      for (const auto& s : syns) {
        const std::size_t r = vocab.id(s.token);
        for (std::size_t c = 0; c < 16; ++c) embeddings.matrix.data()[r * 16 + c] = src[c];
      }
    }
  }
  AttackContext ctx() const { return {victim.get(), &vocab, &lexicon, &embeddings}; }
};

// Sentence with true label 1: w0..w3 scores 1.2, 0.5, 0.4, 0.3 against a
// threshold of 1. Only w0 -> b0 flips it on its own.
Toy single_flip() {
  Toy t;
  t.scores = {{"w0", 1.2}, {"w1", 0.5}, {"w2", 0.4}, {"w3", 0.3},
              {"a0", 0.1}, {"b0", -0.3}, {"a1", -0.2}, {"a2", 0.0}};
  t.threshold = 1.0;
  t.lexicon.add("w0", {{"a0", text::Pos::Adj}, {"b0", text::Pos::Adj}});
  t.lexicon.add("w1", {{"a1", text::Pos::Adj}});
  t.lexicon.add("w2", {{"a2", text::Pos::Adj}});
  t.sentence = {"w0", "w1", "w2", "w3"};
  t.finalize();
  return t;
}

double true_prob(const Toy& t, const Tokens& s, std::size_t label) {
  return t.victim->probabilities(text::encode(s, t.vocab))[label];
}

struct Oracle {
  std::size_t flips = 0;
  std::size_t pos = 0;
  std::string word;
};

// Every (position, synonym) single substitution; reports the flipping ones.
Oracle exhaustive(const Toy& t, std::size_t label) {
  Oracle o;
  double best = -1.0;
  for (std::size_t i = 0; i < t.sentence.size(); ++i) {
    for (const auto& c : text::synonyms_in_vocab(t.sentence[i], t.lexicon, t.vocab)) {
      Tokens s = t.sentence;
      s[i] = c;
      const double drop = true_prob(t, t.sentence, label) - true_prob(t, s, label);
      if (t.victim->predict(text::encode(s, t.vocab)).label != label) ++o.flips;
      if (drop > best) {
        best = drop;
        o.pos = i;
        o.word = c;
      }
    }
  }
  return o;
}

Toy random_toy(std::mt19937_64& rng) {
  Toy t;
  std::uniform_int_distribution<int> len(4, 8), nsyn(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0), v(-1.0, 1.0);
  const int n = len(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::string w = "w" + std::to_string(i);
    t.scores[w] = u(rng);
    total += t.scores[w];
    t.sentence.push_back(w);
    std::vector<text::Synonym> syns;
    for (int j = nsyn(rng); j > 0; --j) {
      const std::string s = w + "s" + std::to_string(j);
      t.scores[s] = v(rng);
      syns.push_back({s, text::Pos::Noun});
    }
    t.lexicon.add(w, syns);
  }
  t.threshold = total - 0.8 - 0.4 * u(rng);
  t.finalize();
  return t;
}

std::vector<std::size_t> unk_importance(const Toy& t, std::size_t label) {
  std::vector<std::size_t> order;
  double best = -1e9;
  std::vector<double> imp;
  for (std::size_t i = 0; i < t.sentence.size(); ++i) {
    Tokens s = t.sentence;
    s[i] = "<unk>";
    imp.push_back(true_prob(t, t.sentence, label) - true_prob(t, s, label));
    best = std::max(best, imp.back());
  }
  for (std::size_t i = 0; i < imp.size(); ++i) {
    if (imp[i] == best) order.push_back(i);
  }
  return order;
}

AttackConfig config(AttackKind k, std::uint64_t seed = 1) {
  AttackConfig c;
  c.kind = k;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Budget, CeilOfFraction) {
  EXPECT_EQ(substitution_budget(4, 0.25), 1u);
  EXPECT_EQ(substitution_budget(5, 0.25), 2u);
  EXPECT_EQ(substitution_budget(8, 0.25), 2u);
  EXPECT_EQ(substitution_budget(1, 0.25), 1u);
  EXPECT_EQ(substitution_budget(20, 1.0), 20u);
}

TEST(AttackConfig, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.population = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.population = 2;
  c.max_fraction = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_attack("iga"), AttackKind::Iga);
  EXPECT_THROW(parse_attack("bert"), ConfigError);
}

TEST(Attacks, NoSynonymsMeansFailure) {
  Toy t = single_flip();
  t.lexicon = {};
  for (AttackKind k : kAttackKinds) {
    const auto r = run_attack(t.sentence, 1, t.ctx(), config(k));
    EXPECT_FALSE(r.success) << to_string(k);
    EXPECT_TRUE(r.substitutions.empty());
    EXPECT_EQ(r.adversarial, t.sentence);
  }
}

TEST(Attacks, MisclassifiedInputIsImmediateSuccess) {
  const Toy t = single_flip();
  for (AttackKind k : kAttackKinds) {
    const auto r = run_attack(t.sentence, 0, t.ctx(), config(k));
    EXPECT_TRUE(r.success) << to_string(k);
    EXPECT_TRUE(r.substitutions.empty());
  }
}

TEST(Attacks, HandBuiltSingleFlipMatchesOracle) {
  const Toy t = single_flip();
  const auto o = exhaustive(t, 1);
  ASSERT_EQ(o.flips, 1u);
  ASSERT_EQ(o.pos, 0u);
  ASSERT_EQ(o.word, "b0");
  for (AttackKind k : kAttackKinds) {
    const auto r = run_attack(t.sentence, 1, t.ctx(), config(k));
    ASSERT_TRUE(r.success) << to_string(k);
    ASSERT_EQ(r.substitutions.size(), 1u) << to_string(k);
    EXPECT_EQ(r.substitutions[0], (Substitution{0, "w0", "b0"})) << to_string(k);
    EXPECT_EQ(check_result(r, t.ctx(), 0.25), "");
  }
}

// On random toys with a unique flipping substitution at the most important
// word, both greedy attacks must land exactly on it.
TEST(Attacks, GreedyMatchesExhaustiveOracle) {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 3000 && checked < 50; ++trial) {
    const Toy t = random_toy(rng);
    if (t.victim->predict(text::encode(t.sentence, t.vocab)).label != 1) continue;
    const auto o = exhaustive(t, 1);
    if (o.flips != 1) continue;
    const auto top = unk_importance(t, 1);
    if (top.size() != 1 || top[0] != o.pos) continue;
    ++checked;
    for (AttackKind k : {AttackKind::Pwws, AttackKind::TextFooler}) {
      const auto r = run_attack(t.sentence, 1, t.ctx(), config(k));
      ASSERT_TRUE(r.success) << to_string(k) << " trial " << trial;
      ASSERT_FALSE(r.substitutions.empty());
      EXPECT_EQ(r.substitutions.front().position, o.pos);
      EXPECT_EQ(r.substitutions.front().new_word, o.word);
      EXPECT_EQ(r.substitutions.size(), 1u);
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(Attacks, ResultsSatisfyInvariantsOnRandomToys) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 150; ++trial) {
    const Toy t = random_toy(rng);
    for (AttackKind k : kAttackKinds) {
      AttackConfig c = config(k, static_cast<std::uint64_t>(trial));
      c.generations = 5;
      const auto r = run_attack(t.sentence, 1, t.ctx(), c);
      EXPECT_EQ(check_result(r, t.ctx(), c.max_fraction), "") << to_string(k);
      EXPECT_LE(r.substitutions.size(), substitution_budget(t.sentence.size(), 0.25));
    }
  }
}

TEST(Attacks, DeterministicUnderSeed) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Toy t = random_toy(rng);
    for (AttackKind k : kAttackKinds) {
      const auto a = run_attack(t.sentence, 1, t.ctx(), config(k, 9));
      const auto b = run_attack(t.sentence, 1, t.ctx(), config(k, 9));
      EXPECT_EQ(a.adversarial, b.adversarial);
      EXPECT_EQ(a.queries, b.queries);
    }
  }
}

TEST(TextFooler, UnitCosineThresholdRejectsDistinctVectors) {
  Toy t = single_flip();
  t.embeddings = text::random_embeddings(t.vocab, 16, 77);
  AttackConfig c = config(AttackKind::TextFooler);
  c.cosine_threshold = 1.0;
  const auto r = run_attack(t.sentence, 1, t.ctx(), c);
  EXPECT_FALSE(r.success);
  EXPECT_TRUE(r.substitutions.empty());
}

TEST(TextFooler, BudgetIsRespected) {
  // Ten words, each nudged down a little by its synonym; nothing flips
  // within ceil(0.25 * 10) = 3 substitutions.
  Toy t;
  for (int i = 0; i < 10; ++i) {
    const std::string w = "w" + std::to_string(i);
    t.scores[w] = 1.0;
    t.scores[w + "x"] = 0.9;
    t.lexicon.add(w, {{w + "x", text::Pos::Verb}});
    t.sentence.push_back(w);
  }
  t.threshold = 5.0;
  t.finalize();
  const auto r = run_attack(t.sentence, 1, t.ctx(), config(AttackKind::TextFooler));
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.substitutions.size(), 3u);
}

TEST(Genetic, ZeroGenerationsEvaluatesInitialPopulationOnly) {
  const Toy t = single_flip();
  for (bool improved : {false, true}) {
    AttackConfig c = config(improved ? AttackKind::Iga : AttackKind::Ga);
    c.generations = 0;
    c.population = 6;
    const auto r = attack_genetic(t.sentence, 1, t.ctx(), c, improved);
    // original + 4 UNK-free candidates at most: one query per distinct member
    EXPECT_LE(r.queries, 1u + c.population);
  }
}

// One word with four synonyms, only one of which flips. The initial
// population alone finds it with probability 1 - (3/4)^20.
TEST(Genetic, SingleWordFlipFoundInGenerationZero) {
  Toy t;
  t.scores = {{"w", 1.0}, {"s1", 0.9}, {"s2", 0.8}, {"s3", 0.7}, {"s4", -1.0}};
  t.threshold = 0.0;
  t.lexicon.add("w", {{"s1", text::Pos::Adj}, {"s2", text::Pos::Adj},
                      {"s3", text::Pos::Adj}, {"s4", text::Pos::Adj}});
  t.sentence = {"w"};
  t.finalize();
  for (bool improved : {false, true}) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      AttackConfig c = config(AttackKind::Ga, seed);
      c.generations = 0;
      const auto r = attack_genetic(t.sentence, 1, t.ctx(), c, improved);
      hits += r.success && r.adversarial == Tokens{"s4"};
    }
    EXPECT_GE(hits, 90) << (improved ? "iga" : "ga");
  }
}

TEST(Genetic, FitnessOfOracleBestExceedsOriginal) {
  const Toy t = single_flip();
  const auto o = exhaustive(t, 1);
  Tokens best = t.sentence;
  best[o.pos] = o.word;
  EXPECT_LT(1.0 - true_prob(t, t.sentence, 1), 1.0 - true_prob(t, best, 1));
}

TEST(Corpus, QuotaZeroIsEmpty) {
  const Toy t = single_flip();
  CorpusOptions opts;
  EXPECT_TRUE(generate_adversarial_corpus({{t.sentence, 1}}, t.ctx(), opts).empty());
}

TEST(Corpus, ShortfallWarnsAndKeepsSuccesses) {
  const Toy t = single_flip();
  std::vector<CorpusSentence> data;
  for (int i = 0; i < 12; ++i) data.push_back({t.sentence, 1});
  data.push_back({{"w3", "w3"}, 1});  // misclassified, never kept
  CorpusOptions opts;
  opts.per_class_quota = 100;
  opts.base.generations = 3;
  std::vector<std::string> warnings;
  opts.warn = [&](const std::string& w) { warnings.push_back(w); };
  const auto out = generate_adversarial_corpus(data, t.ctx(), opts);
  EXPECT_EQ(out.size(), 12u);
  EXPECT_FALSE(warnings.empty());
  std::map<AttackKind, int> per_kind;
  for (const auto& r : out) {
    EXPECT_EQ(check_result(r, t.ctx(), 0.25), "");
    EXPECT_TRUE(r.success);
    EXPECT_FALSE(r.substitutions.empty());
    ++per_kind[r.kind];
  }
  for (AttackKind k : kAttackKinds) EXPECT_EQ(per_kind[k], 3) << to_string(k);
}

TEST(Corpus, NothingSucceedsIsAnError) {
  Toy t = single_flip();
  t.lexicon = {};
  CorpusOptions opts;
  opts.per_class_quota = 4;
  EXPECT_THROW(generate_adversarial_corpus({{t.sentence, 1}}, t.ctx(), opts), Error);
}

TEST(Corpus, TsvRoundTrip) {
  const Toy t = single_flip();
  CorpusOptions opts;
  opts.per_class_quota = 4;
  std::vector<CorpusSentence> data(4, {t.sentence, 1});
  const auto out = generate_adversarial_corpus(data, t.ctx(), opts);
  const auto path = fs::temp_directory_path() / "textshield_adv.tsv";
  save_adversarial(path.string(), out);
  const auto back = load_adversarial(path.string());
  ASSERT_EQ(back.size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(back[i].adversarial, text::join(out[i].adversarial));
    EXPECT_EQ(back[i].original, text::join(out[i].original));
    EXPECT_EQ(back[i].kind, out[i].kind);
    EXPECT_EQ(back[i].n_subs, out[i].substitutions.size());
  }
  EXPECT_THROW(load_adversarial((path.string() + ".missing")), MissingArtifactError);
}
