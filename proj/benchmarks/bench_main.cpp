// Hot paths of the pipeline on desk-sized models over the synthetic corpus.

#include <filesystem>
#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "textshield/attacks/attacks.hpp"
#include "textshield/detector/ensemble.hpp"
#include "textshield/harness/synth.hpp"
#include "textshield/saliency/awi.hpp"
#include "textshield/text/embeddings.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/tokenizer.hpp"
#include "textshield/victims/victim.hpp"

namespace fs = std::filesystem;
using namespace textshield;

namespace {

// Built once; every benchmark reads from it.
struct World {
  text::Vocabulary vocab;
  text::EmbeddingTable embeddings;
  text::SynonymLexicon lexicon;
  std::vector<text::Tokens> sentences;
  std::vector<std::size_t> labels;
  std::unique_ptr<victims::VictimModel> cnn, lstm;

  World() {
    harness::SynthConfig sc;
    sc.n_train = 300;
    sc.n_test = 50;
    const auto corpus = harness::make_synthetic(sc);
    const auto dir = fs::temp_directory_path() / "textshield_bench";
    harness::write_synthetic(corpus, dir.string());
    for (const auto& r : corpus.train) {
      sentences.push_back(text::tokenize(r.text));
      labels.push_back(r.label);
    }
    vocab = text::Vocabulary::build(sentences);
    embeddings = text::load_embeddings((dir / "embeddings.txt").string(), vocab, 1);
    lexicon = text::load_lexicon((dir / "lexicon.tsv").string());
    fs::remove_all(dir);

    std::vector<text::EncodedExample> train;
    for (std::size_t i = 0; i < sentences.size(); ++i)
      train.push_back(text::encode(sentences[i], vocab, labels[i]));
    victims::TrainConfig tc;
    tc.epochs = 1;
    victims::VictimConfig vc;
    cnn = std::make_unique<victims::VictimModel>(vc, embeddings, 1);
    victims::train_victim(*cnn, train, tc);
    vc.arch = victims::Arch::Lstm;
    lstm = std::make_unique<victims::VictimModel>(vc, embeddings, 1);
  }

  text::EncodedExample example(std::size_t i) const {
    return text::encode(sentences[i % sentences.size()], vocab, labels[i % labels.size()]);
  }
};

const World& world() {
  static const World w;
  return w;
}

const victims::VictimModel& victim(const benchmark::State& state) {
  return state.range(0) == 0 ? *world().cnn : *world().lstm;
}

void BM_Predict(benchmark::State& state) {
  const auto& m = victim(state);
  const auto ex = world().example(0);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(ex));
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->ArgNames({"lstm"})->Unit(benchmark::kMicrosecond);

void BM_VanillaGradient(benchmark::State& state) {
  const auto& m = victim(state);
  const auto in = saliency::embed(m, world().example(1));
  for (auto _ : state) benchmark::DoNotOptimize(saliency::awi_vg(m, in));
}
BENCHMARK(BM_VanillaGradient)->Arg(0)->Arg(1)->ArgNames({"lstm"})->Unit(benchmark::kMillisecond);

void BM_AwiAll(benchmark::State& state) {
  const auto& m = victim(state);
  const auto in = saliency::embed(m, world().example(2));
  for (auto _ : state) benchmark::DoNotOptimize(saliency::awi_all(m, in));
}
BENCHMARK(BM_AwiAll)->Arg(0)->Arg(1)->ArgNames({"lstm"})->Unit(benchmark::kMillisecond);

void BM_DetectorForward(benchmark::State& state) {
  detector::DetectorConfig dc;
  dc.hidden = static_cast<std::size_t>(state.range(0));
  const detector::DetectorEnsemble ens(dc, 1);
  const auto awi = saliency::awi_all(*world().cnn, world().example(3));
  for (auto _ : state) benchmark::DoNotOptimize(ens.forward(awi));
}
BENCHMARK(BM_DetectorForward)->Arg(32)->Arg(128)->ArgNames({"hidden"})->Unit(benchmark::kMillisecond);

void BM_Attack(benchmark::State& state) {
  const auto& w = world();
  const attacks::AttackContext ctx{w.cnn.get(), &w.vocab, &w.lexicon, &w.embeddings};
  attacks::AttackConfig cfg;
  cfg.kind = static_cast<attacks::AttackKind>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& s = w.sentences[i % w.sentences.size()];
    benchmark::DoNotOptimize(attacks::run_attack(s, w.labels[i % w.labels.size()], ctx, cfg));
    ++i;
  }
  state.SetLabel(attacks::to_string(cfg.kind));
}
BENCHMARK(BM_Attack)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
