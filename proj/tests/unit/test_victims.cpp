#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "textshield/errors.hpp"
#include "textshield/grad/finite_difference.hpp"
#include "textshield/nn/checkpoint.hpp"
#include "textshield/nn/params.hpp"
#include "textshield/victims/victim.hpp"

namespace fs = std::filesystem;
using namespace textshield;
using namespace textshield::victims;
using textshield::grad::Tensor;
namespace ts_testing = textshield::testing;

namespace {

VictimConfig small_cnn() {
  VictimConfig cfg;
  cfg.widths = {2, 3};
  cfg.filters = 8;
  return cfg;
}

VictimConfig small_lstm() {
  VictimConfig cfg;
  cfg.arch = Arch::Lstm;
  cfg.hidden = 6;
  return cfg;
}

VictimModel make(const VictimConfig& cfg, const text::Vocabulary& vocab,
                 std::size_t dim = 8, std::uint64_t seed = 3) {
  return VictimModel(cfg, text::random_embeddings(vocab, dim, seed), seed);
}

text::EncodedExample random_example(std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 20);
  std::uniform_int_distribution<std::size_t> id(1, vocab - 1);
  text::EncodedExample ex;
  ex.ids.assign(text::kMaxLength, text::kPadId);
  ex.true_length = len(rng);
  for (std::size_t t = 0; t < ex.true_length; ++t) ex.ids[t] = id(rng);
  return ex;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "textshield_test_victims";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Softmax, ClosedForm) {
  const auto p = softmax(std::vector<double>{2.0, 0.0});
  EXPECT_NEAR(p[0], 0.8807970779778823, 1e-12);
  EXPECT_NEAR(p[1], 0.11920292202211755, 1e-12);
}

TEST(Predict, ArgmaxAndTieBreak) {
  auto a = argmax(std::vector<double>{0.9, 0.1});
  EXPECT_EQ(a.label, 0u);
  EXPECT_DOUBLE_EQ(a.confidence, 0.9);
  auto b = argmax(std::vector<double>{0.5, 0.5});
  EXPECT_EQ(b.label, 0u);
  EXPECT_DOUBLE_EQ(b.confidence, 0.5);
}

TEST(Victim, ProbabilitiesNormalisedAndPredictConsistent) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  for (const auto& cfg : {small_cnn(), small_lstm()}) {
    const auto model = make(cfg, toy.vocab);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
      const auto ex = random_example(toy.vocab.size(), rng);
      const auto p = model.probabilities(ex);
      double s = 0.0;
      for (double x : p) {
        EXPECT_GE(x, 0.0);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
      const auto pr = model.predict(ex);
      EXPECT_EQ(pr.label, p[1] > p[0] ? 1u : 0u);
    }
  }
}

TEST(Victim, UntrainedIsNearUniform) {
  const auto toy = ts_testing::separable_corpus(20, 1);
  const auto model = make(small_cnn(), toy.vocab);
  for (const auto& ex : toy.examples) {
    const auto p = model.probabilities(ex);
    EXPECT_NEAR(p[0], 0.5, 0.1);
  }
}

TEST(Victim, LearnsSeparableCorpus) {
  const auto toy = ts_testing::separable_corpus(200, 7);
  for (const auto& cfg : {small_cnn(), small_lstm()}) {
    auto model = make(cfg, toy.vocab);
    TrainConfig tc;
    tc.epochs = 5;
    tc.lr = 1e-2;
    tc.dropout = cfg.arch == Arch::TextCnn ? 0.5 : 0.0;
    const auto res = train_victim(model, toy.examples, tc);
    ASSERT_EQ(res.epoch_loss.size(), 5u);
    EXPECT_GE(accuracy(model, toy.examples), 0.99) << to_string(cfg.arch);
  }
}

TEST(Victim, LossNonIncreasingAfterEpochTwo) {
  const auto toy = ts_testing::separable_corpus(200, 9);
  auto model = make(small_cnn(), toy.vocab);
  TrainConfig tc;
  tc.epochs = 6;
  tc.dropout = 0.0;
  const auto res = train_victim(model, toy.examples, tc);
  for (std::size_t e = 2; e < res.epoch_loss.size(); ++e) {
    EXPECT_LE(res.epoch_loss[e], res.epoch_loss[e - 1]) << "epoch " << e + 1;
  }
}

TEST(Victim, ZeroEpochsLeavesParameters) {
  const auto toy = ts_testing::separable_corpus(10, 1);
  auto model = make(small_cnn(), toy.vocab);
  const auto before = model.params();
  TrainConfig tc;
  tc.epochs = 0;
  train_victim(model, toy.examples, tc);
  EXPECT_TRUE(model.params() == before);
}

TEST(Victim, TrainingIsDeterministic) {
  const auto toy = ts_testing::separable_corpus(64, 2);
  auto a = make(small_cnn(), toy.vocab);
  auto b = make(small_cnn(), toy.vocab);
  TrainConfig tc;
  tc.epochs = 2;
  train_victim(a, toy.examples, tc);
  train_victim(b, toy.examples, tc);
  EXPECT_TRUE(a.params() == b.params());
}

TEST(Victim, PadEmbeddingStaysZero) {
  const auto toy = ts_testing::separable_corpus(64, 2);
  auto model = make(small_cnn(), toy.vocab);
  TrainConfig tc;
  tc.epochs = 1;
  train_victim(model, toy.examples, tc);
  for (std::size_t c = 0; c < model.embed_dim(); ++c) {
    EXPECT_EQ(model.params()[0].at(text::kPadId, c), 0.0);
  }
}

TEST(Victim, TextCnnIgnoresOrderBeyondFilterWidth) {
  // Swapping two blocks separated by PAD runs longer than the widest filter
  // leaves the multiset of windows, and so the pooled features, unchanged.
  const auto toy = ts_testing::separable_corpus(2, 1);
  const auto model = make(small_cnn(), toy.vocab);
  text::EncodedExample a;
  a.ids.assign(text::kMaxLength, text::kPadId);
  a.true_length = 30;
  const std::size_t x[] = {2, 3, 4}, y[] = {7, 8, 9};
  for (int i = 0; i < 3; ++i) {
    a.ids[5 + i] = x[i];
    a.ids[20 + i] = y[i];
  }
  auto b = a;
  for (int i = 0; i < 3; ++i) {
    b.ids[5 + i] = y[i];
    b.ids[20 + i] = x[i];
  }
  EXPECT_EQ(model.logits(a), model.logits(b));
}

TEST(Victim, GradientsMatchFiniteDifferences) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  for (const auto& cfg : {small_cnn(), small_lstm()}) {
    const auto model = make(cfg, toy.vocab, 4);
    std::mt19937_64 rng(11);
    const auto ex = random_example(toy.vocab.size(), rng);
    const Tensor x0 = model.embed(ex);
    grad::Tape tape;
    const auto in = tape.leaf(x0, true);
    const auto out = select_logit(tape, model.record(tape, in, ex.true_length), 1);
    const auto g = tape.backward(out).at(in);
    const auto fd = grad::finite_difference(
        [&](const Tensor& x) {
          grad::Tape t;
          const auto i = t.leaf(x, false);
          return t.value(select_logit(t, model.record(t, i, ex.true_length), 1))[0];
        },
        x0);
    EXPECT_LE(ts_testing::relative_error(g, fd), 1e-4) << to_string(cfg.arch);
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  for (const auto& cfg : {small_cnn(), small_lstm()}) {
    const auto model = make(cfg, toy.vocab);
    const auto p1 = scratch("a.ckpt"), p2 = scratch("b.ckpt");
    save_victim(model, p1.string());
    const auto loaded = load_victim(p1.string());
    save_victim(loaded, p2.string());
    EXPECT_EQ(slurp(p1), slurp(p2));
    EXPECT_EQ(loaded.logits(toy.examples[0]), model.logits(toy.examples[0]));
  }
}

TEST(Checkpoint, CorruptedHeaderIsVersionError) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  auto bytes = nn::serialize(make(small_cnn(), toy.vocab).to_checkpoint());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(nn::deserialize(bad_magic), VersionError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(nn::deserialize(bad_version), VersionError);
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  auto bytes = nn::serialize(make(small_cnn(), toy.vocab).to_checkpoint());
  bytes.resize(bytes.size() - 3);
  try {
    nn::deserialize(bytes);
    FAIL();
  } catch (const VersionError&) {
    FAIL() << "truncation is not a version error";
  } catch (const FormatError&) {
  }
}

TEST(Checkpoint, ShapeMismatchRejected) {
  const auto toy = ts_testing::separable_corpus(2, 1);
  auto target = make(small_cnn(), toy.vocab).params();
  auto other_cfg = small_cnn();
  other_cfg.filters = 5;
  const auto other = make(other_cfg, toy.vocab).params();
  EXPECT_THROW(nn::assign_params(target, other), ShapeError);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_victim("/nonexistent/v.ckpt"), MissingArtifactError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::ParamStore ps;
  ps.add("w", Tensor::vector({1.0, -2.0}));
  nn::Gradients g(ps);
  g[0] = {0.5, -3.0};
  nn::Adam adam(ps, {0.1});
  adam.step(ps, g);
  EXPECT_NEAR(ps[0][0], 0.9, 1e-7);
  EXPECT_NEAR(ps[0][1], -1.9, 1e-7);
}
