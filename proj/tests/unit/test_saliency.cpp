#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_support.hpp"
#include "textshield/grad/finite_difference.hpp"
#include "textshield/saliency/awi.hpp"
#include "textshield/victims/victim.hpp"

using namespace textshield;
using namespace textshield::saliency;
using grad::NodeId;
using grad::Tape;
using grad::Tensor;
namespace ts_testing = textshield::testing;

namespace {

constexpr std::size_t L = text::kMaxLength;

// F_j = sum_i u_j . w_i, written as one conv window spanning the sentence.
class LinearBag : public victims::DifferentiableClassifier {
 public:
  LinearBag(Tensor u, double bias = 0.0) : u_(std::move(u)), bias_(bias) {}
  std::size_t num_classes() const override { return u_.rows(); }
  std::size_t embed_dim() const override { return u_.cols(); }
  Tensor embed(const text::EncodedExample&) const override { return Tensor({L, embed_dim()}); }
  NodeId record(Tape& tape, NodeId input, std::size_t) const override {
    const std::size_t k = embed_dim();
    Tensor f({num_classes(), L * k});
    for (std::size_t j = 0; j < num_classes(); ++j) {
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t c = 0; c < k; ++c) f.at(j, i * k + c) = u_.at(j, c);
      }
    }
    const NodeId fid = tape.leaf(std::move(f), false);
    const NodeId b = tape.leaf(Tensor::filled({num_classes()}, bias_), false);
    return tape.conv1d(input, fid, b, L);
  }

 private:
  Tensor u_;
  double bias_;
};

// Small model given as a recording function.
class FnModel : public victims::DifferentiableClassifier {
 public:
  using Fn = std::function<NodeId(Tape&, NodeId)>;
  FnModel(std::size_t classes, std::size_t k, Fn fn) : c_(classes), k_(k), fn_(std::move(fn)) {}
  std::size_t num_classes() const override { return c_; }
  std::size_t embed_dim() const override { return k_; }
  Tensor embed(const text::EncodedExample&) const override { return Tensor({L, k_}); }
  NodeId record(Tape& tape, NodeId input, std::size_t) const override { return fn_(tape, input); }

 private:
  std::size_t c_, k_;
  Fn fn_;
};

EmbeddedInput random_input(std::size_t k, std::size_t len, std::mt19937_64& rng,
                           double scale = 1.0) {
  EmbeddedInput in{Tensor({L, k}), len};
  std::uniform_real_distribution<double> u(-scale, scale);
  for (std::size_t i = 0; i < len * k; ++i) in.embedded[i] = u(rng);
  return in;
}

victims::VictimModel tiny_cnn(std::uint64_t seed, std::size_t k = 4,
                              double bias_scale = 0.0) {
  text::Vocabulary vocab;
  for (int i = 0; i < 10; ++i) vocab.add("w" + std::to_string(i), 1);
  victims::VictimConfig cfg;
  cfg.widths = {2, 3};
  cfg.filters = 6;
  victims::VictimModel m(cfg, text::random_embeddings(vocab, k, seed), seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-bias_scale, bias_scale);
  for (auto& p : m.params().entries()) {
    if (p.name.ends_with(".bias")) {
      for (double& b : p.value.data()) b = u(rng);
    }
  }
  return m;
}

double logit_at(const victims::DifferentiableClassifier& m, const Tensor& x,
                std::size_t len, std::size_t j) {
  Tape t;
  const auto in = t.leaf(x, false);
  return t.value(victims::select_logit(t, m.record(t, in, len), j))[0];
}

}  // namespace

TEST(Vg, ConstantClassifierGivesZero) {
  auto m = tiny_cnn(1);
  for (std::size_t i = 1; i < m.params().size(); ++i) {
    for (double& v : m.params()[i].data()) v = 0.0;
  }
  std::mt19937_64 rng(1);
  const auto a = awi_vg(m, random_input(4, 10, rng));
  for (double v : a.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(Vg, LinearBagIsMeanOfWeights) {
  const Tensor u = Tensor::matrix(2, 3, {1.0, 2.0, -6.0, 0.5, 0.5, 0.5});
  LinearBag m(u);
  std::mt19937_64 rng(2);
  const auto a = awi_vg(m, random_input(3, 7, rng));
  ASSERT_EQ(a.values.shape(), (grad::Shape{L, 2}));
  for (std::size_t i = 0; i < L; ++i) {
    EXPECT_NEAR(a.at(i, 0), 1.0, 1e-12);
    EXPECT_NEAR(a.at(i, 1), 0.5, 1e-12);
  }
}

TEST(Vg, TextCnnMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = tiny_cnn(seed, 3, 0.1);
    std::mt19937_64 rng(seed);
    // A full-length sentence keeps max-pool winners away from tied PAD windows.
    const auto in = random_input(3, L, rng, 0.5);
    const Tensor vg = signed_gradient(m, in, grad::BackwardMode::Standard);
    for (std::size_t j = 0; j < 2; ++j) {
      const auto fd = grad::finite_difference(
          [&](const Tensor& x) { return logit_at(m, x, in.true_length, j); }, in.embedded);
      Tensor want({L, 1}), got({L, 1});
      for (std::size_t i = 0; i < L; ++i) {
        want[i] = (fd.at(i, 0) + fd.at(i, 1) + fd.at(i, 2)) / 3.0;
        got[i] = vg.at(i, j);
      }
      EXPECT_LE(ts_testing::relative_error(got, want), 1e-4);
    }
  }
}

TEST(Gbp, EqualsVgOnLinearModel) {
  LinearBag m(Tensor::matrix(2, 2, {1.0, -3.0, 2.0, 0.25}));
  std::mt19937_64 rng(3);
  const auto in = random_input(2, 9, rng);
  EXPECT_EQ(awi_vg(m, in).values, awi_gbp(m, in).values);
}

TEST(Gbp, NegativeUpstreamGivesZero) {
  auto m = tiny_cnn(4);
  auto& out_w = m.params()[m.params().index("out.weight")];
  for (double& w : out_w.data()) w = -std::abs(w) - 0.1;
  std::mt19937_64 rng(4);
  const auto a = awi_gbp(m, random_input(4, 12, rng));
  for (double v : a.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gbp, HandTracedTwoWordNet) {
  // Two width-1 filters e0, e1 over k=2, max-pooled; logits (p0 - p1, p1 - p0).
  FnModel m(2, 2, [](Tape& t, NodeId x) {
    const NodeId f = t.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}), false);
    const NodeId b = t.leaf(Tensor({2}), false);
    const NodeId p = t.max_pool_time(t.relu(t.conv1d(x, f, b, 1)));
    const NodeId w = t.leaf(Tensor::matrix(2, 2, {1, -1, -1, 1}), false);
    return t.linear(p, w);
  });
  EmbeddedInput in{Tensor({L, 2}), 2};
  in.embedded.at(0, 0) = 1.0;
  in.embedded.at(0, 1) = -1.0;
  in.embedded.at(1, 0) = 0.5;
  in.embedded.at(1, 1) = 2.0;
  const auto vg = awi_vg(m, in);
  const auto gbp = awi_gbp(m, in);
  EXPECT_DOUBLE_EQ(vg.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(vg.at(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(gbp.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(gbp.at(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(gbp.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(gbp.at(1, 1), 0.5);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_LE(gbp.at(i, j), vg.at(i, j) + 1e-15);
  }
}

TEST(Lrp, LinearBagClosedForm) {
  const Tensor u = Tensor::matrix(2, 3, {0.3, -0.2, 0.9, 1.0, 0.4, -0.5});
  LinearBag m(u);
  std::mt19937_64 rng(5);
  const auto in = random_input(3, 5, rng);
  const auto a = awi_lrp(m, in);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double z = 0.0;
      for (std::size_t c = 0; c < 3; ++c) z += u.at(j, c) * in.embedded.at(i, c);
      EXPECT_NEAR(a.at(i, j), std::abs(z), 1e-5 * (1.0 + std::abs(z)));
    }
  }
}

TEST(Lrp, ConservesLogitWithoutBiases) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = tiny_cnn(seed, 4, 0.0);
    std::mt19937_64 rng(seed);
    const auto in = random_input(4, 8, rng);
    const Tensor r = signed_lrp(m, in, 1e-6);
    for (std::size_t j = 0; j < 2; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < L; ++i) total += r.at(i, j);
      const double logit = logit_at(m, in.embedded, in.true_length, j);
      EXPECT_LE(std::abs(total - logit), 0.02 * std::abs(logit) + 1e-9);
    }
  }
}

TEST(Lrp, ZeroInputGivesZero) {
  const auto m = tiny_cnn(6, 4, 0.1);
  const EmbeddedInput in{Tensor({L, 4}), 5};
  const auto a = awi_lrp(m, in);
  for (double v : a.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ig, LinearModelIsExactForAnyStepCount) {
  const Tensor u = Tensor::matrix(2, 2, {0.7, -1.1, 0.2, 0.9});
  LinearBag m(u, 0.3);
  std::mt19937_64 rng(7);
  const auto in = random_input(2, 6, rng);
  for (std::size_t steps : {1u, 3u, 32u}) {
    const Tensor ig = signed_ig(m, in, steps);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        const double want = u.at(j, 0) * in.embedded.at(i, 0) + u.at(j, 1) * in.embedded.at(i, 1);
        EXPECT_NEAR(ig.at(i, j), want, 1e-12);
      }
    }
  }
}

TEST(Ig, CompletenessAtHighStepCount) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = tiny_cnn(seed, 4, 0.1);
    std::mt19937_64 rng(seed + 100);
    const auto in = random_input(4, 10, rng);
    const Tensor ig = signed_ig(m, in, 512);
    const Tensor zero({L, 4});
    for (std::size_t j = 0; j < 2; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < L; ++i) total += ig.at(i, j);
      const double gap = logit_at(m, in.embedded, in.true_length, j) -
                         logit_at(m, zero, in.true_length, j);
      EXPECT_LE(std::abs(total - gap), 0.005 * std::abs(gap)) << "seed " << seed;
    }
  }
}

TEST(Ig, ErrorShrinksWithSteps) {
  const std::size_t grid[] = {1, 4, 16, 64};
  std::vector<double> mean_err(std::size(grid), 0.0);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto m = tiny_cnn(seed, 2, 0.1);
    std::mt19937_64 rng(seed);
    const auto in = random_input(2, 4, rng);
    const Tensor ref = signed_ig(m, in, 512);
    for (std::size_t g = 0; g < std::size(grid); ++g) {
      const Tensor ig = signed_ig(m, in, grid[g]);
      mean_err[g] += ts_testing::relative_error(ig, ref) / 100.0;
    }
  }
  for (std::size_t g = 1; g < std::size(grid); ++g) {
    EXPECT_LT(mean_err[g], mean_err[g - 1]) << "m=" << grid[g];
  }
}

TEST(AwiAll, ShapesNonNegativeAndDeterministic) {
  const auto m = tiny_cnn(8, 4, 0.1);
  std::mt19937_64 rng(8);
  const auto in = random_input(4, 11, rng);
  SaliencyOptions opts;
  opts.ig_steps = 8;
  const auto a = awi_all(m, in, opts);
  const auto b = awi_all(m, in, opts);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a[k].method, kMethods[k]);
    EXPECT_EQ(a[k].values.shape(), (grad::Shape{L, 2}));
    EXPECT_EQ(a[k].values, b[k].values);
    for (double v : a[k].values.data()) EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(a[0].values, awi_vg(m, in, opts).values);
  EXPECT_EQ(a[3].values, awi_ig(m, in, opts).values);
}

TEST(AwiAll, LinearModelVgEqualsGbp) {
  LinearBag m(Tensor::matrix(2, 2, {1.0, 2.0, -1.0, 0.5}));
  std::mt19937_64 rng(9);
  const auto a = awi_all(m, random_input(2, 4, rng));
  EXPECT_EQ(a[0].values, a[1].values);
}

TEST(AwiAll, MaskPadZeroesPadRows) {
  const auto m = tiny_cnn(9, 4, 0.1);
  std::mt19937_64 rng(9);
  SaliencyOptions opts;
  opts.mask_pad = true;
  opts.ig_steps = 4;
  const auto a = awi_all(m, random_input(4, 5, rng), opts);
  for (const auto& mat : a) {
    for (std::size_t i = 5; i < L; ++i) EXPECT_EQ(mat.at(i, 0) + mat.at(i, 1), 0.0);
  }
}

TEST(AwiRecord, RoundTrip) {
  const auto m = tiny_cnn(10, 4, 0.1);
  std::mt19937_64 rng(10);
  const auto a = awi_lrp(m, random_input(4, 5, rng));
  std::string bytes;
  append_awi(bytes, a);
  append_awi(bytes, a);
  std::size_t pos = 0;
  const auto b = read_awi(bytes, pos);
  const auto c = read_awi(bytes, pos);
  EXPECT_EQ(pos, bytes.size());
  EXPECT_EQ(b.values, a.values);
  EXPECT_EQ(c.method, Method::LRP);
  EXPECT_EQ(c.predicted, a.predicted);
}

TEST(ChainRule, UpdateMagnitudeFollowsSaliency) {
  // L = sigmoid(F_y); one SGD step on the input embeddings moves word i by
  // r1 * |dL/dF_y| * |r_iy| once the k components are averaged.
  const auto m = tiny_cnn(11, 4, 0.1);
  std::mt19937_64 rng(11);
  const auto in = random_input(4, 9, rng, 0.5);
  const double r1 = 0.5;
  const std::size_t y = 1;
  Tape t;
  const NodeId x = t.leaf(in.embedded, true);
  const NodeId fy = victims::select_logit(t, m.record(t, x, in.true_length), y);
  const NodeId loss = t.sigmoid(fy);
  const auto g = t.backward(loss).at(x);
  const double s = t.value(loss)[0];
  const double dl_df = s * (1.0 - s);
  const Tensor r = signed_gradient(m, in, grad::BackwardMode::Standard);
  for (std::size_t i = 0; i < L; ++i) {
    double step = 0.0;
    for (std::size_t c = 0; c < 4; ++c) step += -r1 * g.at(i, c);
    step /= 4.0;
    const double want = r1 * dl_df * std::abs(r.at(i, y));
    EXPECT_LE(std::abs(std::abs(step) - want), 1e-10 * std::max(want, 1e-300));
  }
}
