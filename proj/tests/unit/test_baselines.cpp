#include <gtest/gtest.h>

#include <random>

#include "textshield/attacks/attacks.hpp"
#include "textshield/baselines/baselines.hpp"
#include "textshield/errors.hpp"

using namespace textshield;
using namespace textshield::baselines;
using text::Tokens;

namespace {

class BagClassifier : public victims::TextClassifier {
 public:
  BagClassifier(const text::Vocabulary& vocab, const std::map<std::string, double>& scores)
      : score_(vocab.size(), 0.0) {
    for (const auto& [w, s] : scores) score_.at(vocab.id(w)) = s;
  }
  std::size_t num_classes() const override { return 2; }
  std::vector<double> logits(const text::EncodedExample& ex) const override {
    double total = 0.0;
    for (std::size_t i = 0; i < ex.true_length; ++i) total += score_[ex.ids[i]];
    return {0.0, total};
  }

 private:
  std::vector<double> score_;
};

class ConstantClassifier : public victims::TextClassifier {
 public:
  std::size_t num_classes() const override { return 3; }
  std::vector<double> logits(const text::EncodedExample&) const override { return {0.2, 1.5, -1.0}; }
};

text::FrequencyTable freq_of(const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<Tokens> corpus;
  for (const auto& [tok, n] : counts) corpus.push_back(Tokens(n, tok));
  return text::FrequencyTable::build(corpus);
}

// Frequent positive words, each with a rare negative synonym. Half the
// distinct words have count 1, so only percentiles above 0.5 mark them rare.
struct Setting {
  text::Vocabulary vocab;
  text::SynonymLexicon lexicon;
  std::map<std::string, double> scores;
  text::FrequencyTable freq;
  std::unique_ptr<BagClassifier> victim;
};

Setting setting() {
  Setting s;
  std::vector<std::pair<std::string, int>> counts;
  for (int i = 0; i < 8; ++i) {
    const std::string w = "good" + std::to_string(i), r = "rare" + std::to_string(i);
    s.scores[w] = 1.0;
    s.scores[r] = -3.0;
    counts.push_back({w, 100 + i});
    counts.push_back({r, 1});
    s.lexicon.add(w, {{r, text::Pos::Adj}});
    s.lexicon.add(r, {{w, text::Pos::Adj}});
  }
  for (const auto& [w, v] : s.scores) s.vocab.add(w);
  s.freq = freq_of(counts);
  s.victim = std::make_unique<BagClassifier>(s.vocab, s.scores);
  return s;
}

}  // namespace

TEST(Fgws, FrequentWordsAreLeftAlone) {
  const auto s = setting();
  const Tokens x{"good0", "good1", "good2"};
  const auto out = fgws_detect(*s.victim, x, s.vocab, s.lexicon, s.freq, {});
  EXPECT_EQ(out.transformed, x);
  EXPECT_EQ(out.score, 0.0);
  EXPECT_FALSE(out.adversarial);
}

TEST(Fgws, GammaZeroFlagsAnyPositiveDrop) {
  const auto s = setting();
  const Tokens x{"good0", "rare1", "good2", "good3"};
  FgwsConfig cfg;
  cfg.delta_f = 0.6;
  const auto out = fgws_detect(*s.victim, x, s.vocab, s.lexicon, s.freq, cfg);
  EXPECT_EQ(out.transformed, Tokens({"good0", "good1", "good2", "good3"}));
  // x ties at logit 0 and goes to class 0; the corrected sentence does not
  EXPECT_GT(out.score, 0.0);
  EXPECT_TRUE(out.adversarial);
}

TEST(Fgws, AttackRoundTripGivesLargeScore) {
  const auto s = setting();
  const Tokens x{"good0", "good1", "good2", "good3", "good4", "good5", "good6", "good7"};
  const attacks::AttackContext ctx{s.victim.get(), &s.vocab, &s.lexicon, nullptr};
  const auto r = attacks::attack_pwws(x, 1, ctx, {});
  ASSERT_TRUE(r.success);
  FgwsConfig cfg;
  cfg.delta_f = 0.6;
  const auto out = fgws_detect(*s.victim, r.adversarial, s.vocab, s.lexicon, s.freq, cfg);
  EXPECT_EQ(out.transformed, x);
  EXPECT_GT(out.score, 0.45);  // adversarial input sits at a tie, p = 0.5
}

TEST(Fgws, ReplacementsNeverLowerFrequency) {
  const auto s = setting();
  std::mt19937_64 rng(3);
  const auto& toks = s.vocab.tokens();
  std::uniform_int_distribution<std::size_t> pick(2, toks.size() - 1);
  for (int trial = 0; trial < 100; ++trial) {
    Tokens x;
    for (int i = 0; i < 6; ++i) x.push_back(toks[pick(rng)]);
    const auto y = fgws_transform(x, s.lexicon, s.freq, s.vocab, 0.5);
    ASSERT_EQ(y.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_GE(s.freq.count(y[i]), s.freq.count(x[i]));
  }
}

TEST(Fgws, GammaTunedForBestF1) {
  const std::vector<double> scores{0.0, 0.05, 0.1, 0.6, 0.7, 0.9};
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
  const double g = tune_fgws_gamma(scores, labels);
  EXPECT_GE(g, 0.1);
  EXPECT_LT(g, 0.6);
  EXPECT_THROW(tune_fgws_gamma({}, {}), Error);
  FgwsConfig cfg;
  cfg.gamma = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Wdr, ConstantClassifierGivesConstantMargin) {
  text::Vocabulary v;
  v.add("a");
  const auto ex = text::encode(Tokens(5, "a"), v);
  const auto f = wdr_features(ConstantClassifier{}, ex);
  ASSERT_EQ(f.size(), 128u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(f[i], 1.3);
  for (std::size_t i = 5; i < 128; ++i) EXPECT_EQ(f[i], 0.0);
}

TEST(Wdr, SingleWordHasOneFeature) {
  const auto s = setting();
  const auto f = wdr_features(*s.victim, text::encode({"good3"}, s.vocab));
  // UNK scores 0: both logits 0, class 1 predicted by the word, margin 0 - 0
  EXPECT_EQ(f[0], 0.0);
  const auto g = wdr_features(*s.victim, text::encode({"good3", "good2"}, s.vocab));
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  for (std::size_t i = 2; i < 128; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(Wdr, OrderInvariant) {
  const auto s = setting();
  Tokens x{"good0", "rare1", "good2", "good3", "rare4"};
  const auto f = wdr_features(*s.victim, text::encode(x, s.vocab));
  EXPECT_TRUE(std::is_sorted(f.begin(), f.begin() + 5, std::greater<>()));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(x.begin(), x.end(), rng);
    EXPECT_EQ(wdr_features(*s.victim, text::encode(x, s.vocab)), f);
  }
}

namespace {

FeatureSet separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  FeatureSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % 2;
    std::vector<double> f(kWdrFeatures, 0.0);
    for (std::size_t j = 0; j < 10; ++j) f[j] = (y ? -1.0 : 1.0) + noise(rng);
    std::sort(f.begin(), f.begin() + 10, std::greater<>());
    s.features.push_back(f);
    s.labels.push_back(y);
  }
  return s;
}

}  // namespace

TEST(WdrTrain, SeparableFeatures) {
  WdrModel m(1);
  detector::DetectorTrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.max_epochs = 20;
  wdr_train(m, separable(280, 1), separable(80, 2), cfg);
  EXPECT_GE(wdr_evaluate(m, separable(200, 3)).accuracy, 0.99);
}

TEST(WdrTrain, ZeroEpochsAndDeterminism) {
  WdrModel a(4), b(4), c(4);
  detector::DetectorTrainConfig cfg;
  cfg.max_epochs = 0;
  const auto rec = wdr_train(a, separable(40, 1), separable(20, 2), cfg);
  EXPECT_EQ(a.params(), c.params());
  EXPECT_EQ(rec.dev_accuracy.size(), 1u);
  cfg.max_epochs = 3;
  WdrModel d(4);
  const auto r1 = wdr_train(b, separable(40, 1), separable(20, 2), cfg);
  const auto r2 = wdr_train(d, separable(40, 1), separable(20, 2), cfg);
  EXPECT_EQ(b.params(), d.params());
  EXPECT_EQ(r1.dev_accuracy, r2.dev_accuracy);
}

TEST(WdrTrain, CheckpointRoundTrip) {
  WdrModel m(5);
  const auto back = WdrModel::from_checkpoint(nn::deserialize(nn::serialize(m.to_checkpoint()), "mem"));
  EXPECT_EQ(back.params(), m.params());
}
