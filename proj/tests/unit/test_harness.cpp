#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <set>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/harness/config.hpp"
#include "textshield/harness/pipeline.hpp"
#include "textshield/harness/report.hpp"
#include "textshield/harness/synth.hpp"
#include "textshield/text/dataset.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/tokenizer.hpp"

using namespace textshield;
using namespace textshield::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("textshield_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

SynthConfig tiny_synth() {
  SynthConfig s;
  s.n_train = 400;
  s.n_test = 120;
  return s;
}

ExperimentConfig tiny_config(const fs::path& data, const fs::path& out) {
  ExperimentConfig c;
  c.out = out.string();
  c.train_path = (data / "train.tsv").string();
  c.test_path = (data / "test.tsv").string();
  c.embeddings_path = (data / "embeddings.txt").string();
  c.attack_lexicon = (data / "lexicon.tsv").string();
  c.victim.widths = {2, 3};
  c.victim.filters = 16;
  c.attack.population = 8;
  c.attack.generations = 5;
  c.k = 20;
  c.held_out_k = 8;
  c.detector.hidden = 8;
  c.detector.combiner_hidden = 8;
  c.detector_train.max_epochs = 4;
  c.detector_train.patience = 2;
  c.saliency.ig_steps = 4;
  c.eval_n = 20;
  c.ablate_betas = {0.0, 0.4, 1.0};
  c.ablate_k_grid = {5, 10, 20};
  c.ablate_seeds = 1;
  return c;
}

}  // namespace

// ---- config ----

TEST(Config, ParsesCommentsAndLists) {
  const auto c = parse_config(
      "# comment\n"
      "seed = 7   # trailing\n"
      "attack.train = pwws, ga\n"
      "corrector.beta = 0.25\n"
      "victim.widths = 2,4\n");
  EXPECT_EQ(c.seed, 7u);
  ASSERT_EQ(c.train_attacks.size(), 2u);
  EXPECT_EQ(c.train_attacks[1], attacks::AttackKind::Ga);
  EXPECT_DOUBLE_EQ(c.corrector.beta, 0.25);
  EXPECT_EQ(c.victim.widths, (std::vector<std::size_t>{2, 4}));
}

TEST(Config, ErrorsNameSourceAndLine) {
  try {
    parse_config("seed = 1\nbogus.key = 3\n", "exp.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("exp.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("corrector.strategy = magic\n"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/exp.cfg"), MissingArtifactError);
}

TEST(Config, ValidateRejectsHeldOutLeakage) {
  auto c = tiny_config("/d", "/o");
  c.validate();
  c.held_out = "pwws";
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config("/d", "/o");
  c.test_path = c.train_path;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config("/d", "/o");
  c.attack_lexicon.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config("/d", "/o");
  c.ablate_betas = {1.5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, CanonicalTextRoundTripsAndHashes) {
  auto c = tiny_config("/d", "/o");
  const auto text = canonical_text(c);
  EXPECT_EQ(canonical_text(parse_config(text)), text);
  EXPECT_EQ(config_hash(parse_config(text)), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);

  auto moved = c;
  moved.out = "/elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  auto other = c;
  set_key(other, "corrector.beta", "0.5");
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(Config, EveryKeyIsDocumentedAndReadable) {
  const ExperimentConfig c;
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_FALSE(k.doc.empty()) << k.name;
    EXPECT_TRUE(names.insert(k.name).second) << "duplicate " << k.name;
    EXPECT_NO_THROW(get_key(c, k.name)) << k.name;
  }
  EXPECT_EQ(get_key(c, "saliency.target"), "probability");
  EXPECT_THROW(get_key(c, "nope"), ConfigError);
}

// ---- report ----

TEST(Report, OneRowGivesOneRowTable) {
  const auto dir = scratch("one_row");
  RowSet rows;
  rows.table1.push_back({"textcnn", "TextShield", "pwws", 0.9, 0.7, 10, 1, "abc"});
  const auto f = write_report(rows, {}, dir.string());
  const auto t1 = slurp(f.table1_csv);
  EXPECT_EQ(count_lines(t1), 2u);
  EXPECT_EQ(t1.substr(t1.find('\n') + 1), "textcnn,TextShield,pwws,0.900000,0.700000,10,1,abc\n");
  EXPECT_EQ(count_lines(slurp(f.table2_csv)), 1u);
}

TEST(Report, SortsBySeedAndIsByteDeterministic) {
  const auto dir = scratch("sorted");
  RowSet rows;
  rows.table1.push_back({"textcnn", "none", "pwws", 1.0, 0.2, 10, 3, "h"});
  rows.table1.push_back({"textcnn", "none", "pwws", 1.0, 0.3, 10, 1, "h"});
  rows.table1.push_back({"textcnn", "TextShield", "ga", 1.0, 0.8, 10, 2, "h"});
  rows.table1.push_back({"lstm", "none", "pwws", 1.0, 0.4, 10, 1, "h"});
  const auto f = write_report(rows, {{"h", "seed = 1\n"}}, dir.string());
  std::istringstream in(slurp(f.table1_csv));
  std::string line;
  std::vector<std::string> keys;
  std::getline(in, line);
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(",1.0")));
  EXPECT_EQ(keys, (std::vector<std::string>{"lstm,none,pwws", "textcnn,TextShield,ga",
                                            "textcnn,none,pwws", "textcnn,none,pwws"}));
  EXPECT_NE(slurp(f.table1_csv).find("0.300000,10,1,h\ntextcnn,none,pwws,1.000000,0.200000,10,3"),
            std::string::npos);

  const auto before = slurp(f.bundle_json);
  std::reverse(rows.table1.begin(), rows.table1.end());
  write_report(rows, {{"h", "seed = 1\n"}}, dir.string());
  EXPECT_EQ(slurp(f.bundle_json), before);
}

TEST(Report, SummaryHasMeanAndSampleSd) {
  const auto dir = scratch("summary");
  RowSet rows;
  for (std::uint64_t s : {1, 2, 3}) {
    rows.table2.push_back({"synth", "pwws", "TextShield", "in-distribution",
                           0.8 + 0.1 * static_cast<double>(s - 1), 1.0, 1.0, 1.0, 5, s, "h"});
  }
  const auto f = write_report(rows, {}, dir.string());
  const auto b = nlohmann::json::parse(slurp(f.bundle_json));
  // f1 values 0.8, 0.9, 1.0: mean 0.9, sample sd 0.1.
  const auto& f1 = b["summary"]["table2"][0]["f1"];
  EXPECT_NEAR(f1["mean"].get<double>(), 0.9, 1e-12);
  EXPECT_NEAR(f1["sd"].get<double>(), 0.1, 1e-12);
  EXPECT_EQ(f1["count"].get<int>(), 3);
}

TEST(Report, EmptyRowsThrowAndJsonlRoundTrips) {
  const auto dir = scratch("jsonl");
  EXPECT_THROW(write_report(RowSet{}, {}, dir.string()), Error);
  RowSet rows;
  rows.table1.push_back({"textcnn", "none", "pooled", 1.0, 0.25, 20, 9, "h1"});
  rows.table2.push_back({"synth", "all", "WDR", "held-out", 0.5, 0.25, 0.75, 0.6, 40, 9, "h1"});
  rows.ablation.push_back({"k_sweep", "K=5", "all", "dev_f1", 0.125, 9, 2, "h1"});
  write_rows((dir / "a.jsonl").string(), rows);
  const auto back = read_rows((dir / "a.jsonl").string());
  ASSERT_EQ(back.table1.size(), 1u);
  ASSERT_EQ(back.table2.size(), 1u);
  ASSERT_EQ(back.ablation.size(), 1u);
  EXPECT_EQ(back.table2[0].protocol, "held-out");
  EXPECT_DOUBLE_EQ(back.ablation[0].value, 0.125);
  EXPECT_EQ(back.ablation[0].sub_seed, 2u);
  EXPECT_EQ(read_row_dir(dir.string()).table1.size(), 1u);
}

// ---- synthetic corpus ----

TEST(Synth, DeterministicDisjointAndSymmetric) {
  const auto a = make_synthetic(tiny_synth());
  const auto b = make_synthetic(tiny_synth());
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::string> train;
  std::size_t ones = 0;
  for (const auto& r : a.train) {
    train.insert(r.text);
    ones += r.label;
  }
  EXPECT_EQ(train.size(), a.train.size());
  for (const auto& r : a.test) EXPECT_EQ(train.count(r.text), 0u) << r.text;
  EXPECT_NEAR(static_cast<double>(ones) / static_cast<double>(a.train.size()), 0.5, 0.1);
  EXPECT_TRUE(a.lexicon.has_pos_tags());
  for (const auto& [w, syns] : a.lexicon.entries()) {
    for (const auto& s : syns) {
      const auto& back = a.lexicon.synonyms(s.token);
      EXPECT_TRUE(std::any_of(back.begin(), back.end(), [&](const auto& x) { return x.token == w; }))
          << w << " -> " << s.token;
    }
  }
  auto other = tiny_synth();
  other.seed = 2;
  EXPECT_NE(make_synthetic(other).train, a.train);
}

TEST(Synth, WrittenFilesLoad) {
  const auto dir = scratch("synth_files");
  write_synthetic(make_synthetic(tiny_synth()), dir.string());
  EXPECT_EQ(text::load_dataset((dir / "train.tsv").string(), 2).size(), 400u);
  EXPECT_GT(text::load_lexicon((dir / "lexicon.tsv").string()).size(), 0u);
  EXPECT_TRUE(fs::exists(dir / "embeddings.txt"));
}

// ---- pipeline ----

TEST(Pipeline, CommandsNameMissingArtifacts) {
  const auto data = scratch("missing_data");
  write_synthetic(make_synthetic(tiny_synth()), data.string());
  const auto cfg = tiny_config(data, scratch("missing_out"));
  set_log_sink({});
  try {
    cmd_train_victim(cfg);
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("prepare"), std::string::npos) << e.what();
  }
  cmd_prepare(cfg);
  try {
    cmd_gen_adv(cfg);
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("train-victim"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cmd_report(cfg), Error);
}

TEST(Pipeline, RefusesTestSentencesSeenInTraining) {
  const auto data = scratch("leak_data");
  auto corpus = make_synthetic(tiny_synth());
  corpus.test.push_back(corpus.train.front());
  write_synthetic(corpus, data.string());
  set_log_sink({});
  try {
    cmd_prepare(tiny_config(data, scratch("leak_out")));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("leakage"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, AblationModesParse) {
  EXPECT_EQ(parse_ablation("beta_sweep"), AblationMode::BetaSweep);
  EXPECT_EQ(parse_ablation(to_string(AblationMode::DropSubdetector)), AblationMode::DropSubdetector);
  EXPECT_THROW(parse_ablation("everything"), ConfigError);
}

class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    set_log_sink({});
    const auto data = scratch("tiny_data");
    write_synthetic(make_synthetic(tiny_synth()), data.string());
    cfg_ = new ExperimentConfig(tiny_config(data, scratch("tiny_out")));
    cmd_prepare(*cfg_);
    cmd_train_victim(*cfg_);
    cmd_gen_adv(*cfg_);
    cmd_train_detector(*cfg_);
  }
  static void TearDownTestSuite() {
    delete cfg_;
    cfg_ = nullptr;
  }
  static ExperimentConfig* cfg_;
};

ExperimentConfig* TinyPipeline::cfg_ = nullptr;

TEST_F(TinyPipeline, UndefendedRowsMatchTheVictim) {
  const auto rows = cmd_eval_defense(*cfg_);
  const Paths p(cfg_->out);
  const auto res = load_resources(*cfg_);
  const auto victim = victims::load_victim(p.victim);
  for (const auto& r : rows.table1) {
    if (r.defense != "none" || r.attack == "pooled") continue;
    const auto adv = attacks::load_adversarial(p.adv_eval(attacks::parse_attack(r.attack)));
    std::size_t hit = 0;
    for (const auto& a : adv) {
      hit += victim.predict(text::encode(text::tokenize(a.adversarial), res.vocab)).label == a.label;
    }
    EXPECT_DOUBLE_EQ(r.adversarial_accuracy, static_cast<double>(hit) / static_cast<double>(adv.size()))
        << r.attack;
  }
  // Idempotent: a rerun (now from the analysis cache) gives the same rows.
  const auto again = cmd_eval_defense(*cfg_);
  ASSERT_EQ(again.table1.size(), rows.table1.size());
  for (std::size_t i = 0; i < rows.table1.size(); ++i) {
    EXPECT_EQ(again.table1[i].adversarial_accuracy, rows.table1[i].adversarial_accuracy);
    EXPECT_EQ(again.table1[i].clean_accuracy, rows.table1[i].clean_accuracy);
  }
}

TEST_F(TinyPipeline, DetectionRowReproducesEvaluate) {
  const auto rows = cmd_eval_detection(*cfg_);
  const Paths p(cfg_->out);
  const auto ens = detector::load_detector(p.detector);
  const auto data = detector::load_detection_data(p.detector_data);
  const auto m = detector::evaluate(ens, data.split(detector::Split::Test));
  bool found = false;
  for (const auto& r : rows.table2) {
    if (r.detector == "TextShield" && r.attack == "all") {
      found = true;
      EXPECT_EQ(r.f1, m.f1);
      EXPECT_EQ(r.recall, m.recall);
      EXPECT_EQ(r.protocol, "in-distribution");
    }
    EXPECT_FALSE(r.config_hash.empty());
    EXPECT_EQ(r.seed, cfg_->seed);
  }
  EXPECT_TRUE(found);
}

TEST_F(TinyPipeline, BetaOneEqualsVerdictOnly) {
  const auto rows = cmd_ablate(*cfg_, AblationMode::BetaSweep);
  std::map<std::string, double> b1, vo;
  for (const auto& r : rows.ablation) {
    if (r.setting == "beta=1.00") b1[r.attack + r.metric] = r.value;
    if (r.setting == "verdict_only") vo[r.attack + r.metric] = r.value;
  }
  ASSERT_FALSE(b1.empty());
  EXPECT_EQ(b1, vo);
}

TEST_F(TinyPipeline, KSweepRetrainsOncePerGridPoint) {
  const auto rows = cmd_ablate(*cfg_, AblationMode::KSweep);
  std::set<std::string> settings;
  std::size_t trained = 0;
  for (const auto& r : rows.ablation) {
    settings.insert(r.setting);
    trained += r.metric == "test_f1";
  }
  EXPECT_EQ(trained, 3u);
  EXPECT_EQ(settings, (std::set<std::string>{"K=10", "K=20", "K=5"}));
}

TEST_F(TinyPipeline, AllMasksRemovedRoutesToTheVictim) {
  const auto defense = cmd_eval_defense(*cfg_);
  double undefended = -1.0;
  for (const auto& r : defense.table1) {
    if (r.defense == "none" && r.attack == "pooled") undefended = r.adversarial_accuracy;
  }
  const auto rows = cmd_ablate(*cfg_, AblationMode::DropSubdetector);
  std::set<std::string> settings;
  for (const auto& r : rows.ablation) {
    settings.insert(r.setting);
    if (r.setting == "mask=-All" && r.attack == "pooled") EXPECT_EQ(r.value, undefended);
  }
  EXPECT_EQ(settings, (std::set<std::string>{"full", "mask=-All", "mask=-GBP", "mask=-IG",
                                             "mask=-LRP", "mask=-VG"}));
  const auto files = cmd_report(*cfg_);
  EXPECT_GT(count_lines(slurp(files.ablation_csv)), 10u);
}
