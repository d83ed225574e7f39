#include "textshield/harness/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "textshield/attacks/attacks.hpp"
#include "textshield/baselines/baselines.hpp"
#include "textshield/corrector/corrector.hpp"
#include "textshield/errors.hpp"
#include "textshield/nn/checkpoint.hpp"
#include "textshield/text/dataset.hpp"
#include "textshield/text/lexicon.hpp"
#include "textshield/text/tokenizer.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::harness {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::function<void(const std::string&)>& sink() {
  static std::function<void(const std::string&)> s = [](const std::string& m) {
    std::cerr << "[textshield] " << m << "\n";
  };
  return s;
}

void log(const std::string& m) {
  if (sink()) sink()(m);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

void require(const std::string& path, const std::string& produced_by) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + path + " (run `" + produced_by + "` first)");
  }
}

void save_sentences(const std::string& path, const std::vector<Sentence>& xs) {
  std::vector<text::Record> recs;
  for (const auto& s : xs) recs.push_back({s.label, text::join(s.tokens)});
  fs::create_directories(fs::path(path).parent_path());
  text::save_dataset(path, recs);
}

std::vector<Sentence> load_sentences(const std::string& path, std::size_t classes) {
  std::vector<Sentence> out;
  for (const auto& r : text::load_dataset(path, classes)) {
    out.push_back({text::tokenize(r.text), r.label});
  }
  return out;
}

text::EncodedExample encode(const Sentence& s, const text::Vocabulary& vocab) {
  auto ex = text::encode(s.tokens, vocab);
  ex.label = s.label;
  return ex;
}

std::vector<text::EncodedExample> encode_all(const std::vector<Sentence>& xs,
                                             const text::Vocabulary& vocab) {
  std::vector<text::EncodedExample> out;
  for (const auto& s : xs) out.push_back(encode(s, vocab));
  return out;
}

victims::VictimModel load_victim_model(const Paths& p) {
  require(p.victim, "train-victim");
  return victims::load_victim(p.victim);
}

detector::DetectorEnsemble load_detector_model(const Paths& p) {
  require(p.detector, "train-detector");
  return detector::load_detector(p.detector);
}

void snapshot_config(const ExperimentConfig& cfg) {
  write_text((fs::path(cfg.out) / "configs" / (config_hash(cfg) + ".txt")).string(),
             canonical_text(cfg));
}

std::string rows_file(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(Paths(cfg.out).rows) / (name + "-s" + std::to_string(cfg.seed) + ".jsonl"))
      .string();
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<attacks::AdversarialRecord> load_adv(const std::string& path) {
  require(path, "gen-adv");
  return attacks::load_adversarial(path);
}

}  // namespace

void set_log_sink(std::function<void(const std::string&)> s) { sink() = std::move(s); }

Paths::Paths(const std::string& out) {
  const fs::path r(out);
  root = r.string();
  prepared = (r / "prepared").string();
  train = (r / "prepared" / "train.tsv").string();
  dev = (r / "prepared" / "dev.tsv").string();
  test = (r / "prepared" / "test.tsv").string();
  vocab = (r / "prepared" / "vocab.tsv").string();
  victim = (r / "victim" / "victim.ckpt").string();
  adv_dir = (r / "adv").string();
  adv_train = (r / "adv" / "train.tsv").string();
  adv_held_out = (r / "adv" / "held_out.tsv").string();
  eval_benign = (r / "adv" / "eval_benign.tsv").string();
  detector_data = (r / "detector" / "data.bin").string();
  detector = (r / "detector" / "detector.ckpt").string();
  rows = (r / "rows").string();
  reports = (r / "reports").string();
  analysis = (r / "defense" / "analysis.bin").string();
}

std::string Paths::adv_eval(attacks::AttackKind k) const {
  return (fs::path(adv_dir) / ("eval_" + attacks::to_string(k) + ".tsv")).string();
}

std::uint64_t sentence_hash(const text::Tokens& tokens) { return fnv1a64(text::join(tokens)); }

Resources load_resources(const ExperimentConfig& cfg) {
  const Paths p(cfg.out);
  for (const auto& f : {p.train, p.dev, p.test, p.vocab}) require(f, "prepare");
  Resources r;
  r.train = load_sentences(p.train, cfg.num_classes);
  r.dev = load_sentences(p.dev, cfg.num_classes);
  r.test = load_sentences(p.test, cfg.num_classes);
  r.vocab = text::Vocabulary::load(p.vocab);
  std::vector<text::Tokens> toks;
  for (const auto& s : r.train) toks.push_back(s.tokens);
  r.freq = text::FrequencyTable::build(toks);
  r.embeddings = cfg.embeddings_path.empty()
                     ? text::random_embeddings(r.vocab, cfg.embed_dim,
                                               derive_seed(cfg.seed, "embeddings"))
                     : text::load_embeddings(cfg.embeddings_path, r.vocab,
                                             derive_seed(cfg.seed, "embeddings"));
  r.attack_lexicon = text::load_lexicon(cfg.attack_lexicon);
  r.corrector_lexicon = cfg.corrector_lexicon.empty() ? r.attack_lexicon
                                                      : text::load_lexicon(cfg.corrector_lexicon);
  return r;
}

PrepareSummary cmd_prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  std::vector<Sentence> all;
  for (const auto& r : text::load_dataset(cfg.train_path, cfg.num_classes)) {
    all.push_back({text::tokenize(r.text), r.label});
  }
  std::vector<Sentence> test;
  for (const auto& r : text::load_dataset(cfg.test_path, cfg.num_classes)) {
    test.push_back({text::tokenize(r.text), r.label});
  }
  if (all.size() < 2) throw ConfigError("data.train needs at least two sentences");
  if (test.empty()) throw ConfigError("data.test is empty");
  // Check the lexicon early so a typo fails here rather than three steps on.
  (void)text::load_lexicon(cfg.attack_lexicon);
  if (!cfg.corrector_lexicon.empty()) (void)text::load_lexicon(cfg.corrector_lexicon);

  std::set<std::uint64_t> seen;
  for (const auto& s : all) seen.insert(sentence_hash(s.tokens));
  std::size_t overlap = 0;
  for (const auto& s : test) overlap += seen.count(sentence_hash(s.tokens));
  if (overlap > 0) {
    throw ConfigError("leakage: " + std::to_string(overlap) +
                      " test sentences also occur in data.train");
  }

  const auto order = shuffled(all.size(), derive_seed(cfg.seed, "dev-split"));
  const auto n_dev = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.dev_fraction * static_cast<double>(all.size()))),
      1, all.size() - 1);
  std::vector<Sentence> train, dev;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_dev ? dev : train).push_back(all[order[i]]);
  }
  std::vector<text::Tokens> toks;
  for (const auto& s : train) toks.push_back(s.tokens);
  const auto vocab = text::Vocabulary::build(toks);

  save_sentences(p.train, train);
  save_sentences(p.dev, dev);
  save_sentences(p.test, test);
  vocab.save(p.vocab);
  snapshot_config(cfg);
  log("prepare: " + std::to_string(train.size()) + " train, " + std::to_string(dev.size()) +
      " dev, " + std::to_string(test.size()) + " test, vocabulary " +
      std::to_string(vocab.size()));
  return {train.size(), dev.size(), test.size(), vocab.size()};
}

VictimSummary cmd_train_victim(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  auto vc = cfg.victim;
  vc.num_classes = cfg.num_classes;
  victims::VictimModel model(vc, res.embeddings, derive_seed(cfg.seed, "victim"));
  auto tc = cfg.victim_train;
  tc.seed = derive_seed(cfg.seed, "victim-train");
  VictimSummary s;
  s.epoch_loss = victims::train_victim(model, encode_all(res.train, res.vocab), tc).epoch_loss;
  s.dev_accuracy = victims::accuracy(model, encode_all(res.dev, res.vocab));
  s.test_accuracy = victims::accuracy(model, encode_all(res.test, res.vocab));
  fs::create_directories(fs::path(p.victim).parent_path());
  victims::save_victim(model, p.victim);
  Json j{{"epoch_loss", s.epoch_loss},
         {"dev_accuracy", s.dev_accuracy},
         {"test_accuracy", s.test_accuracy}};
  write_text((fs::path(p.victim).parent_path() / "metrics.json").string(), j.dump(2) + "\n");
  snapshot_config(cfg);
  log("train-victim: dev accuracy " + std::to_string(s.dev_accuracy) + ", test accuracy " +
      std::to_string(s.test_accuracy));
  return s;
}

GenAdvSummary cmd_gen_adv(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  const auto victim = load_victim_model(p);
  const attacks::AttackContext ctx{&victim, &res.vocab, &res.attack_lexicon, &res.embeddings};
  GenAdvSummary s;
  fs::create_directories(p.adv_dir);

  auto corpus = [&](const std::vector<Sentence>& split, const std::string& tag) {
    std::vector<attacks::CorpusSentence> data;
    for (std::size_t i : shuffled(split.size(), derive_seed(cfg.seed, tag + "-order"))) {
      data.push_back({split[i].tokens, split[i].label});
    }
    return data;
  };

  attacks::CorpusOptions opts;
  opts.kinds = cfg.train_attacks;
  opts.per_class_quota = cfg.k;
  opts.num_classes = cfg.num_classes;
  opts.base = cfg.attack;
  opts.base.seed = derive_seed(cfg.seed, "attack-train");
  opts.warn = [](const std::string& w) { log("gen-adv: " + w); };
  const auto train_adv = attacks::generate_adversarial_corpus(corpus(res.train, "train"), ctx, opts);
  attacks::save_adversarial(p.adv_train, train_adv);
  s.train_adversarial = train_adv.size();

  if (!cfg.held_out.empty()) {
    attacks::CorpusOptions h = opts;
    h.kinds = {attacks::parse_attack(cfg.held_out)};
    h.per_class_quota = cfg.held_out_k;
    h.base.seed = derive_seed(cfg.seed, "attack-held-out");
    const auto held = attacks::generate_adversarial_corpus(corpus(res.dev, "dev"), ctx, h);
    attacks::save_adversarial(p.adv_held_out, held);
    s.held_out_adversarial = held.size();
  }

  const auto order = shuffled(res.test.size(), derive_seed(cfg.seed, "eval-sample"));
  std::vector<Sentence> sample;
  for (std::size_t i = 0; i < std::min(cfg.eval_n, order.size()); ++i) {
    sample.push_back(res.test[order[i]]);
  }
  save_sentences(p.eval_benign, sample);
  s.eval_sentences = sample.size();
  for (auto kind : cfg.eval_attacks) {
    auto ac = cfg.attack;
    ac.kind = kind;
    const auto base = derive_seed(cfg.seed, "attack-eval-" + attacks::to_string(kind));
    std::vector<attacks::AttackResult> out;
    std::size_t wins = 0, eligible = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      ac.seed = derive_seed(base, static_cast<std::uint64_t>(i));
      out.push_back(attacks::run_attack(sample[i].tokens, sample[i].label, ctx, ac));
      if (!out.back().substitutions.empty() || !out.back().success) {
        ++eligible;
        wins += out.back().success;
      }
    }
    attacks::save_adversarial(p.adv_eval(kind), out);
    const double rate = eligible ? static_cast<double>(wins) / static_cast<double>(eligible) : 0.0;
    s.eval_success_rate.emplace_back(attacks::to_string(kind), rate);
    log("gen-adv: " + attacks::to_string(kind) + " succeeds on " + std::to_string(rate) +
        " of correctly classified eval sentences");
  }
  snapshot_config(cfg);
  log("gen-adv: " + std::to_string(s.train_adversarial) + " training and " +
      std::to_string(s.held_out_adversarial) + " held-out adversarial sentences");
  return s;
}

detector::DetectionDataset build_detection_dataset(const ExperimentConfig& cfg,
                                                   const victims::VictimModel& victim,
                                                   const Resources& res, std::size_t k) {
  const Paths p(cfg.out);
  const auto adv = load_adv(p.adv_train);
  std::vector<detector::SentenceSample> adversarial;
  std::set<std::uint64_t> originals;
  std::vector<std::size_t> taken(cfg.num_classes, 0);
  for (const auto& r : adv) {
    const auto orig = text::tokenize(r.original);
    originals.insert(sentence_hash(orig));
    if (r.label >= cfg.num_classes || taken[r.label] >= k) continue;
    ++taken[r.label];
    auto ex = text::encode(text::tokenize(r.adversarial), res.vocab);
    ex.label = r.label;
    adversarial.push_back({ex, r.adversarial, attacks::to_string(r.kind)});
  }
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    if (taken[c] < k) {
      log("detector data: class " + std::to_string(c) + " has " + std::to_string(taken[c]) +
          " adversarial sentences, fewer than K = " + std::to_string(k));
    }
  }
  std::vector<detector::SentenceSample> benign;
  for (std::size_t i : shuffled(res.train.size(), derive_seed(cfg.seed, "benign-order"))) {
    const auto& s = res.train[i];
    if (originals.count(sentence_hash(s.tokens))) continue;
    benign.push_back({encode(s, res.vocab), text::join(s.tokens), ""});
  }
  return detector::assemble_detection_data(victim, adversarial, benign, cfg.held_out,
                                           derive_seed(cfg.seed, "detector-split"),
                                           cfg.saliency);
}

detector::DetectorEnsemble train_detector_model(const ExperimentConfig& cfg,
                                                const detector::DetectionDataset& data,
                                                const detector::Mask& active,
                                                std::uint64_t seed,
                                                detector::DetectorTrainRecord* record) {
  auto dc = cfg.detector;
  dc.num_classes = cfg.num_classes;
  dc.active = active;
  detector::DetectorEnsemble ens(dc, seed);
  auto tc = cfg.detector_train;
  tc.seed = derive_seed(seed, "train");
  auto rec = detector::train_detector(ens, data, tc);
  if (record) *record = std::move(rec);
  return ens;
}

detector::DetectorTrainRecord cmd_train_detector(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  const auto victim = load_victim_model(p);
  const auto data = build_detection_dataset(cfg, victim, res, cfg.k);
  fs::create_directories(fs::path(p.detector_data).parent_path());
  detector::save_detection_data(data, p.detector_data);
  detector::DetectorTrainRecord rec;
  const auto ens = train_detector_model(cfg, data, detector::kAllActive,
                                        derive_seed(cfg.seed, "detector"), &rec);
  detector::save_detector(ens, p.detector);
  Json j{{"train_loss", rec.train_loss},
         {"dev_accuracy", rec.dev_accuracy},
         {"best_epoch", rec.best_epoch},
         {"best_dev_accuracy", rec.best_dev_accuracy},
         {"examples", data.examples.size()}};
  write_text((fs::path(p.detector).parent_path() / "train.json").string(), j.dump(2) + "\n");
  snapshot_config(cfg);
  log("train-detector: best dev accuracy " + std::to_string(rec.best_dev_accuracy) +
      " at epoch " + std::to_string(rec.best_epoch));
  return rec;
}

namespace {

using ExampleList = std::vector<const detector::DetectionExample*>;

// Held-out attack sentences plus as many unattacked dev sentences.
std::vector<detector::DetectionExample> held_out_examples(const ExperimentConfig& cfg,
                                                          const victims::VictimModel& victim,
                                                          const Resources& res,
                                                          const detector::DetectionDataset& data) {
  const Paths p(cfg.out);
  const auto adv = load_adv(p.adv_held_out);
  std::set<std::uint64_t> trained;
  for (const auto& e : data.examples) trained.insert(fnv1a64(e.text));
  std::set<std::uint64_t> originals;
  std::vector<detector::DetectionExample> out;
  auto add = [&](const text::Tokens& toks, std::size_t label, std::size_t cls,
                 const std::string& attack) {
    if (trained.count(sentence_hash(toks))) {
      throw ConfigError("leakage: held-out evaluation sentence found in detector training data");
    }
    detector::DetectionExample e;
    auto ex = text::encode(toks, res.vocab);
    e.awi = saliency::awi_all(victim, ex, cfg.saliency);
    e.label = label;
    e.true_class = cls;
    e.attack = attack;
    e.text = text::join(toks);
    e.split = detector::Split::Test;
    out.push_back(std::move(e));
  };
  for (const auto& r : adv) {
    originals.insert(sentence_hash(text::tokenize(r.original)));
    add(text::tokenize(r.adversarial), 1, r.label, attacks::to_string(r.kind));
  }
  std::size_t benign = 0;
  for (std::size_t i : shuffled(res.dev.size(), derive_seed(cfg.seed, "held-out-benign"))) {
    if (benign == adv.size()) break;
    if (originals.count(sentence_hash(res.dev[i].tokens))) continue;
    add(res.dev[i].tokens, 0, res.dev[i].label, "");
    ++benign;
  }
  return out;
}

std::vector<std::size_t> labels_of(const ExampleList& xs) {
  std::vector<std::size_t> out;
  for (const auto* e : xs) out.push_back(e->label);
  return out;
}

}  // namespace

RowSet cmd_eval_detection(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  const auto victim = load_victim_model(p);
  const auto ens = load_detector_model(p);
  require(p.detector_data, "train-detector");
  const auto data = detector::load_detection_data(p.detector_data);
  const auto hash = config_hash(cfg);

  // Evaluation sets: whole test split, each training attack, held-out attack.
  struct Set {
    std::string attack, protocol;
    ExampleList xs;
  };
  std::vector<Set> sets;
  const auto test = data.split(detector::Split::Test);
  sets.push_back({"all", "in-distribution", test});
  std::vector<std::string> names;
  for (const auto* e : test) {
    if (e->label == 1 && std::find(names.begin(), names.end(), e->attack) == names.end()) {
      names.push_back(e->attack);
    }
  }
  std::sort(names.begin(), names.end());
  for (const auto& a : names) {
    Set s{a, "in-distribution", {}};
    for (const auto* e : test) {
      if (e->label == 1 && e->attack == a) s.xs.push_back(e);
    }
    const std::size_t n = s.xs.size();
    for (const auto* e : test) {
      if (s.xs.size() == 2 * n) break;
      if (e->label == 0) s.xs.push_back(e);
    }
    sets.push_back(std::move(s));
  }
  std::vector<detector::DetectionExample> held;
  if (!cfg.held_out.empty()) {
    held = held_out_examples(cfg, victim, res, data);
    Set s{cfg.held_out, "held-out", {}};
    for (const auto& e : held) s.xs.push_back(&e);
    sets.push_back(std::move(s));
  }

  // FGWS threshold from dev scores.
  baselines::FgwsConfig fg;
  fg.delta_f = cfg.fgws_delta_f;
  std::map<const detector::DetectionExample*, double> fgws_score;
  auto score_of = [&](const detector::DetectionExample* e) {
    auto it = fgws_score.find(e);
    if (it != fgws_score.end()) return it->second;
    const double s = baselines::fgws_detect(victim, text::tokenize(e->text), res.vocab,
                                            res.corrector_lexicon, res.freq, fg)
                         .score;
    fgws_score.emplace(e, s);
    return s;
  };
  const auto dev = data.split(detector::Split::Dev);
  {
    std::vector<double> scores;
    for (const auto* e : dev) scores.push_back(score_of(e));
    fg.gamma = baselines::tune_fgws_gamma(scores, labels_of(dev));
  }

  // WDR head on the detector's train split.
  auto features = [&](const ExampleList& xs) {
    baselines::FeatureSet f;
    for (const auto* e : xs) {
      f.features.push_back(baselines::wdr_features(victim, text::encode(text::tokenize(e->text), res.vocab)));
      f.labels.push_back(e->label);
    }
    return f;
  };
  baselines::WdrModel wdr(derive_seed(cfg.seed, "wdr"));
  auto wtc = cfg.detector_train;
  wtc.seed = derive_seed(cfg.seed, "wdr-train");
  baselines::wdr_train(wdr, features(data.split(detector::Split::Train)), features(dev), wtc);

  RowSet rows;
  for (const auto& s : sets) {
    if (s.xs.empty()) continue;
    const auto truth = labels_of(s.xs);
    auto row = [&](const std::string& name, const detector::DetectionMetrics& m) {
      rows.table2.push_back({cfg.dataset_name, s.attack, name, s.protocol, m.f1, m.recall,
                             m.precision, m.accuracy, s.xs.size(), cfg.seed, hash});
    };
    row("TextShield", detector::evaluate(ens, s.xs));
    std::vector<std::size_t> fp;
    for (const auto* e : s.xs) fp.push_back(score_of(e) > fg.gamma ? 1 : 0);
    row("FGWS", detector::evaluate_detection(fp, truth));
    row("WDR", baselines::wdr_evaluate(wdr, features(s.xs)));
  }
  write_rows(rows_file(cfg, "eval-detection"), rows);
  snapshot_config(cfg);
  for (const auto& r : rows.table2) {
    if (r.detector == "TextShield") {
      log("eval-detection: " + r.attack + " (" + r.protocol + ") F1 " + std::to_string(r.f1));
    }
  }
  return rows;
}

namespace {

// One evaluation sentence with its AWI matrices, shared across defenses.
struct Analysed {
  text::Tokens tokens;
  std::size_t label = 0;
  detector::Awi4 awi;
};

struct EvalSets {
  std::vector<Analysed> clean;
  std::vector<std::pair<std::string, std::vector<Analysed>>> attacked;
};

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < 8) throw FormatError("truncated analysis cache");
  std::uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

void put_list(std::string& out, const std::vector<Analysed>& xs) {
  put_u64(out, xs.size());
  for (const auto& a : xs) {
    const auto t = text::join(a.tokens);
    put_u64(out, t.size());
    out += t;
    put_u64(out, a.label);
    for (const auto& m : a.awi) saliency::append_awi(out, m);
  }
}

std::vector<Analysed> get_list(std::string_view in, std::size_t& pos) {
  std::vector<Analysed> xs(get_u64(in, pos));
  for (auto& a : xs) {
    const auto len = get_u64(in, pos);
    if (in.size() - pos < len) throw FormatError("truncated analysis cache");
    a.tokens = text::tokenize(in.substr(pos, len));
    pos += len;
    a.label = get_u64(in, pos);
    for (auto& m : a.awi) m = saliency::read_awi(in, pos);
  }
  return xs;
}

// AWI matrices of the evaluation sentences, cached on disk under a key built
// from the victim bytes, the evaluation files and the saliency options.
EvalSets analyse(const ExperimentConfig& cfg, const victims::VictimModel& victim,
                 const Resources& res) {
  const Paths p(cfg.out);
  std::string key = slurp(p.victim) + slurp(p.eval_benign);
  for (auto k : cfg.eval_attacks) key += slurp(p.adv_eval(k));
  key += std::to_string(cfg.saliency.ig_steps) + "/" +
         std::to_string(static_cast<int>(cfg.saliency.target));
  const std::uint64_t tag = fnv1a64(key);

  if (fs::exists(p.analysis)) {
    const auto bytes = slurp(p.analysis);
    std::size_t pos = 0;
    if (bytes.size() >= 16 && bytes.compare(0, 8, "TSAN0001") == 0) {
      pos = 8;
      if (get_u64(bytes, pos) == tag) {
        EvalSets s;
        s.clean = get_list(bytes, pos);
        for (auto k : cfg.eval_attacks) s.attacked.emplace_back(attacks::to_string(k), get_list(bytes, pos));
        return s;
      }
    }
  }

  std::set<std::uint64_t> training;
  for (const auto& s : res.train) training.insert(sentence_hash(s.tokens));
  for (const auto& s : res.dev) training.insert(sentence_hash(s.tokens));
  auto one = [&](const text::Tokens& toks, std::size_t label) {
    Analysed a{toks, label, {}};
    a.awi = saliency::awi_all(victim, text::encode(toks, res.vocab), cfg.saliency);
    return a;
  };
  EvalSets s;
  for (const auto& x : load_sentences(p.eval_benign, cfg.num_classes)) {
    if (training.count(sentence_hash(x.tokens))) {
      throw ConfigError("leakage: evaluation sentence found in the training or dev split");
    }
    s.clean.push_back(one(x.tokens, x.label));
  }
  for (auto k : cfg.eval_attacks) {
    std::vector<Analysed> xs;
    for (const auto& r : load_adv(p.adv_eval(k))) {
      if (training.count(sentence_hash(text::tokenize(r.original)))) {
        throw ConfigError("leakage: attacked evaluation sentence comes from the training split");
      }
      xs.push_back(one(text::tokenize(r.adversarial), r.label));
    }
    s.attacked.emplace_back(attacks::to_string(k), std::move(xs));
  }
  std::string out = "TSAN0001";
  put_u64(out, tag);
  put_list(out, s.clean);
  for (const auto& [name, xs] : s.attacked) put_list(out, xs);
  write_text(p.analysis, out);
  return s;
}

std::vector<detector::DetectorOutput> verdicts(const detector::DetectorEnsemble& ens,
                                               const std::vector<Analysed>& xs) {
  std::vector<const detector::Awi4*> batch;
  for (const auto& a : xs) batch.push_back(&a.awi);
  std::vector<detector::DetectorOutput> out;
  for (std::size_t i = 0; i < batch.size(); i += 64) {
    const std::size_t end = std::min(batch.size(), i + 64);
    const auto part = ens.forward_batch(std::span<const detector::Awi4* const>(batch.data() + i, end - i));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

// Accuracy after the defense; no verdicts means the detector is bypassed.
double defended_accuracy(const std::vector<Analysed>& xs,
                         const std::vector<detector::DetectorOutput>* v,
                         const corrector::DefenseContext& ctx,
                         const corrector::CorrectorConfig& cc) {
  if (xs.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto out = corrector::resolve(xs[i].tokens, xs[i].awi[0], v ? &(*v)[i] : nullptr, ctx, cc);
    hit += out.final_label == xs[i].label;
  }
  return static_cast<double>(hit) / static_cast<double>(xs.size());
}

struct DefenseScores {
  double clean = 0.0;
  std::vector<std::pair<std::string, double>> attacked;
  double pooled = 0.0;
};

DefenseScores score_defense(const EvalSets& sets, const detector::DetectorEnsemble* ens,
                            const corrector::DefenseContext& ctx,
                            const corrector::CorrectorConfig& cc) {
  DefenseScores s;
  auto run = [&](const std::vector<Analysed>& xs) {
    if (!ens) return defended_accuracy(xs, nullptr, ctx, cc);
    const auto v = verdicts(*ens, xs);
    return defended_accuracy(xs, &v, ctx, cc);
  };
  s.clean = run(sets.clean);
  std::size_t total = 0;
  double hits = 0.0;
  for (const auto& [name, xs] : sets.attacked) {
    const double acc = run(xs);
    s.attacked.emplace_back(name, acc);
    hits += acc * static_cast<double>(xs.size());
    total += xs.size();
  }
  s.pooled = total ? hits / static_cast<double>(total) : 0.0;
  return s;
}

corrector::DefenseContext defense_context(const ExperimentConfig& cfg,
                                          const victims::VictimModel& victim,
                                          const detector::DetectorEnsemble* ens,
                                          const Resources& res) {
  corrector::DefenseContext ctx;
  ctx.victim = &victim;
  ctx.detector = ens;
  ctx.vocab = &res.vocab;
  ctx.lexicon = &res.corrector_lexicon;
  ctx.freq = &res.freq;
  ctx.saliency = cfg.saliency;
  return ctx;
}

}  // namespace

RowSet cmd_eval_defense(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  const auto victim = load_victim_model(p);
  const auto ens = load_detector_model(p);
  const auto sets = analyse(cfg, victim, res);
  const auto ctx = defense_context(cfg, victim, &ens, res);
  const auto hash = config_hash(cfg);
  const std::string vname = victims::to_string(cfg.victim.arch);

  RowSet rows;
  auto emit = [&](const std::string& defense, const DefenseScores& s) {
    for (const auto& [attack, acc] : s.attacked) {
      rows.table1.push_back({vname, defense, attack, s.clean, acc, sets.clean.size(), cfg.seed, hash});
    }
    rows.table1.push_back({vname, defense, "pooled", s.clean, s.pooled, sets.clean.size(), cfg.seed, hash});
  };
  emit("none", score_defense(sets, nullptr, ctx, cfg.corrector));
  auto main = cfg.corrector;
  main.strategy = corrector::Strategy::Saliency;
  emit("TextShield", score_defense(sets, &ens, ctx, main));
  std::vector<corrector::Strategy> variants{corrector::Strategy::FreqLow};
  if (res.corrector_lexicon.has_pos_tags()) {
    variants.insert(variants.begin(), {corrector::Strategy::PosNoun, corrector::Strategy::PosVerb,
                                       corrector::Strategy::PosNounVerb});
  }
  for (auto st : variants) {
    auto cc = cfg.corrector;
    cc.strategy = st;
    emit("TextShield/" + corrector::to_string(st), score_defense(sets, &ens, ctx, cc));
  }
  write_rows(rows_file(cfg, "eval-defense"), rows);
  snapshot_config(cfg);
  for (const auto& r : rows.table1) {
    if (r.attack == "pooled") {
      log("eval-defense: " + r.defense + " clean " + std::to_string(r.clean_accuracy) +
          ", adversarial " + std::to_string(r.adversarial_accuracy));
    }
  }
  return rows;
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::BetaSweep: return "beta_sweep";
    case AblationMode::KSweep: return "k_sweep";
    case AblationMode::DropSubdetector: return "drop_subdetector";
  }
  return "?";
}

AblationMode parse_ablation(const std::string& s) {
  for (auto m : {AblationMode::BetaSweep, AblationMode::KSweep, AblationMode::DropSubdetector}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown ablation '" + s + "' (beta_sweep, k_sweep, drop_subdetector)");
}

RowSet cmd_ablate(const ExperimentConfig& cfg, AblationMode mode) {
  cfg.validate();
  const Paths p(cfg.out);
  const auto res = load_resources(cfg);
  const auto victim = load_victim_model(p);
  const auto sets = analyse(cfg, victim, res);
  const auto hash = config_hash(cfg);
  RowSet rows;
  auto add = [&](const std::string& setting, const std::string& attack, const std::string& metric,
                 double value, std::uint64_t sub) {
    rows.ablation.push_back({to_string(mode), setting, attack, metric, value, cfg.seed, sub, hash});
  };
  auto add_scores = [&](const std::string& setting, const DefenseScores& s, std::uint64_t sub) {
    add(setting, "clean", "accuracy", s.clean, sub);
    for (const auto& [a, acc] : s.attacked) add(setting, a, "adversarial_accuracy", acc, sub);
    add(setting, "pooled", "adversarial_accuracy", s.pooled, sub);
  };
  auto cc = cfg.corrector;
  cc.strategy = corrector::Strategy::Saliency;

  if (mode == AblationMode::BetaSweep) {
    const auto ens = load_detector_model(p);
    const auto ctx = defense_context(cfg, victim, &ens, res);
    for (double b : cfg.ablate_betas) {
      auto c = cc;
      c.beta = b;
      char buf[32];
      std::snprintf(buf, sizeof buf, "beta=%.2f", b);
      add_scores(buf, score_defense(sets, &ens, ctx, c), 0);
    }
    // Detector verdicts without correction: every input keeps its prediction.
    add_scores("verdict_only", score_defense(sets, nullptr, ctx, cc), 0);
  } else if (mode == AblationMode::KSweep) {
    for (std::size_t k : cfg.ablate_k_grid) {
      const auto data = build_detection_dataset(cfg, victim, res, k);
      const auto ens = train_detector_model(cfg, data, detector::kAllActive,
                                            derive_seed(cfg.seed, "k-sweep-" + std::to_string(k)));
      const auto ctx = defense_context(cfg, victim, &ens, res);
      const std::string setting = "K=" + std::to_string(k);
      add(setting, "all", "train_examples",
          static_cast<double>(data.split(detector::Split::Train).size()), 0);
      add(setting, "all", "dev_f1", detector::evaluate(ens, data.split(detector::Split::Dev)).f1, 0);
      add(setting, "all", "test_f1", detector::evaluate(ens, data.split(detector::Split::Test)).f1, 0);
      add_scores(setting, score_defense(sets, &ens, ctx, cc), 0);
      log("ablate k_sweep: " + setting + " done");
    }
  } else {
    require(p.detector_data, "train-detector");
    const auto data = detector::load_detection_data(p.detector_data);
    const auto dev = data.split(detector::Split::Dev);
    const char* names[] = {"-VG", "-GBP", "-LRP", "-IG"};
    for (std::uint64_t r = 1; r <= cfg.ablate_seeds; ++r) {
      const auto seed = derive_seed(cfg.seed, "drop-subdetector-" + std::to_string(r));
      for (int drop = -1; drop < 4; ++drop) {
        detector::Mask mask = detector::kAllActive;
        if (drop >= 0) mask[static_cast<std::size_t>(drop)] = false;
        const std::string setting = drop < 0 ? "full" : std::string("mask=") + names[drop];
        const auto ens = train_detector_model(cfg, data, mask, seed);
        const auto ctx = defense_context(cfg, victim, &ens, res);
        add(setting, "all", "dev_f1", detector::evaluate(ens, dev).f1, r);
        add_scores(setting, score_defense(sets, &ens, ctx, cc), r);
        log("ablate drop_subdetector: seed " + std::to_string(r) + " " + setting + " done");
      }
      // -All: nothing left to detect with, inputs go straight to the victim.
      const auto ctx = defense_context(cfg, victim, nullptr, res);
      const std::vector<std::size_t> none(dev.size(), 0);
      add("mask=-All", "all", "dev_f1", detector::evaluate_detection(none, labels_of(dev)).f1, r);
      add_scores("mask=-All", score_defense(sets, nullptr, ctx, cc), r);
    }
  }
  write_rows(rows_file(cfg, "ablate-" + to_string(mode)), rows);
  snapshot_config(cfg);
  return rows;
}

ReportFiles cmd_report(const ExperimentConfig& cfg) {
  const Paths p(cfg.out);
  const auto rows = read_row_dir(p.rows);
  std::vector<std::pair<std::string, std::string>> configs;
  const fs::path dir = fs::path(cfg.out) / "configs";
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".txt") configs.emplace_back(e.path().stem().string(), slurp(e.path().string()));
    }
  }
  const auto files = write_report(rows, configs, p.reports);
  log("report: wrote " + files.table1_csv + ", " + files.table2_csv + ", " + files.ablation_csv +
      ", " + files.bundle_json);
  return files;
}

ReportFiles run_all(const ExperimentConfig& cfg, bool with_ablations) {
  cmd_prepare(cfg);
  cmd_train_victim(cfg);
  cmd_gen_adv(cfg);
  cmd_train_detector(cfg);
  cmd_eval_detection(cfg);
  cmd_eval_defense(cfg);
  if (with_ablations) {
    for (auto m : {AblationMode::BetaSweep, AblationMode::KSweep, AblationMode::DropSubdetector}) {
      cmd_ablate(cfg, m);
    }
  }
  return cmd_report(cfg);
}

}  // namespace textshield::harness
