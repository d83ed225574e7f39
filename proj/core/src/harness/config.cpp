#include "textshield/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::harness {

namespace {

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  // Shortest text that parses back to the same double.
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

template <class T, class F>
std::string join_list(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

struct Entry {
  ConfigKey key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define TS_STR(name, field, doc)                                                      \
  Entry{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
        [](const ExperimentConfig& c) { return c.field; }}
#define TS_UINT(name, field, doc)                                                     \
  Entry{{name, doc},                                                                  \
        [](ExperimentConfig& c, const std::string& v) {                               \
          c.field = static_cast<decltype(c.field)>(to_u64(name, v));                  \
        },                                                                            \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define TS_REAL(name, field, doc)                                                          \
  Entry{{name, doc},                                                                       \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.field); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      TS_UINT("seed", seed, "master seed; every component seed derives from it (default 1)"),
      TS_STR("out", out, "output directory for artifacts, rows and reports (default runs/default)"),
      TS_STR("data.name", dataset_name, "dataset label used in report rows (default synth)"),
      TS_STR("data.train", train_path, "training TSV, label<TAB>text (required)"),
      TS_STR("data.test", test_path, "test TSV; must not share sentences with data.train (required)"),
      TS_UINT("data.num_classes", num_classes, "number of classes (default 2)"),
      TS_REAL("data.dev_fraction", dev_fraction, "share of data.train held out as dev (default 0.1)"),
      TS_STR("data.embeddings", embeddings_path, "embedding text file; empty for seeded random vectors"),
      TS_UINT("data.embed_dim", embed_dim, "embedding size when data.embeddings is empty (default 32)"),
      TS_STR("lexicon.attack", attack_lexicon, "synonym lexicon used by attacks (required)"),
      TS_STR("lexicon.corrector", corrector_lexicon, "synonym lexicon used by the corrector and FGWS; empty reuses lexicon.attack"),
      Entry{{"victim.arch", "textcnn or lstm (default textcnn)"},
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.victim.arch = victims::parse_arch(v);
              } catch (const Error& e) {
                throw ConfigError(std::string("victim.arch: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return victims::to_string(c.victim.arch); }},
      Entry{{"victim.widths", "TextCNN filter widths (default 3,4,5)"},
            [](ExperimentConfig& c, const std::string& v) {
              c.victim.widths.clear();
              for (const auto& w : split_list(v)) c.victim.widths.push_back(to_u64("victim.widths", w));
            },
            [](const ExperimentConfig& c) {
              return join_list(c.victim.widths, [](std::size_t w) { return std::to_string(w); });
            }},
      TS_UINT("victim.filters", victim.filters, "TextCNN filters per width (default 100)"),
      TS_UINT("victim.hidden", victim.hidden, "LSTM hidden size (default 128)"),
      TS_UINT("victim.epochs", victim_train.epochs, "victim training epochs (default 3)"),
      TS_REAL("victim.lr", victim_train.lr, "victim Adam learning rate (default 0.001)"),
      TS_UINT("victim.batch_size", victim_train.batch_size, "victim mini-batch size (default 32)"),
      TS_REAL("victim.dropout", victim_train.dropout, "dropout on pooled/hidden features (default 0.5)"),
      Entry{{"attack.train", "attacks generating detector training data (default pwws,textfooler,ga)"},
            [](ExperimentConfig& c, const std::string& v) {
              c.train_attacks.clear();
              for (const auto& a : split_list(v)) c.train_attacks.push_back(attacks::parse_attack(a));
            },
            [](const ExperimentConfig& c) {
              return join_list(c.train_attacks, [](auto k) { return attacks::to_string(k); });
            }},
      TS_STR("attack.held_out", held_out, "attack kept out of detector training for the leave-one-out check; empty disables (default iga)"),
      Entry{{"attack.eval", "attacks used for defense evaluation (default pwws,textfooler,ga,iga)"},
            [](ExperimentConfig& c, const std::string& v) {
              c.eval_attacks.clear();
              for (const auto& a : split_list(v)) c.eval_attacks.push_back(attacks::parse_attack(a));
            },
            [](const ExperimentConfig& c) {
              return join_list(c.eval_attacks, [](auto k) { return attacks::to_string(k); });
            }},
      TS_REAL("attack.max_fraction", attack.max_fraction, "substitution budget as a share of sentence length, rounded up (default 0.25)"),
      TS_UINT("attack.population", attack.population, "GA/IGA population (default 20)"),
      TS_UINT("attack.generations", attack.generations, "GA/IGA generations (default 20)"),
      TS_REAL("attack.mutation_rate", attack.mutation_rate, "GA/IGA mutation probability per child (default 0.3)"),
      TS_REAL("attack.cosine_threshold", attack.cosine_threshold, "TextFooler embedding cosine filter (default 0.5)"),
      TS_UINT("detector.k", k, "adversarial training sentences per class (default 200)"),
      TS_UINT("detector.held_out_k", held_out_k, "held-out attack sentences per class (default 50)"),
      TS_UINT("detector.hidden", detector.hidden, "sub-detector LSTM hidden size (default 128)"),
      TS_UINT("detector.combiner_hidden", detector.combiner_hidden, "combiner hidden width (default 64)"),
      Entry{{"detector.mode", "combiner input: logits or hidden (default logits)"},
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.detector.mode = detector::parse_combiner_mode(v);
              } catch (const Error& e) {
                throw ConfigError(std::string("detector.mode: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return detector::to_string(c.detector.mode); }},
      Entry{{"detector.view", "sub-detector input: matrix or column (default matrix)"},
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.detector.view = detector::parse_input_view(v);
              } catch (const Error& e) {
                throw ConfigError(std::string("detector.view: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return detector::to_string(c.detector.view); }},
      TS_REAL("detector.lr", detector_train.lr, "detector Adam learning rate (default 0.0005)"),
      TS_UINT("detector.batch_size", detector_train.batch_size, "detector mini-batch size (default 32)"),
      TS_UINT("detector.max_epochs", detector_train.max_epochs, "detector epoch cap (default 30)"),
      TS_UINT("detector.patience", detector_train.patience, "epochs without dev improvement before stopping (default 5)"),
      TS_UINT("saliency.ig_steps", saliency.ig_steps, "integrated-gradients steps (default 32)"),
      Entry{{"saliency.target", "logit or probability (default probability)"},
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "logit") {
                c.saliency.target = saliency::Target::Logit;
              } else if (v == "probability") {
                c.saliency.target = saliency::Target::Probability;
              } else {
                throw ConfigError("saliency.target: expected logit or probability, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(c.saliency.target == saliency::Target::Logit ? "logit" : "probability");
            }},
      TS_REAL("corrector.beta", corrector.beta, "suspect threshold ratio in [0, 1] (default 0.4)"),
      Entry{{"corrector.strategy", "saliency, pos_verb, pos_noun, pos_noun_verb or freq_low (default saliency)"},
            [](ExperimentConfig& c, const std::string& v) { c.corrector.strategy = corrector::parse_strategy(v); },
            [](const ExperimentConfig& c) { return corrector::to_string(c.corrector.strategy); }},
      TS_REAL("corrector.freq_low_percentile", corrector.freq_low_percentile, "percentile for the freq_low strategy (default 0.25)"),
      TS_REAL("fgws.delta_f", fgws_delta_f, "FGWS rare-word percentile (default 0.1)"),
      TS_UINT("eval.n", eval_n, "benign test sentences attacked for defense evaluation (default 200)"),
      Entry{{"ablate.betas", "beta grid for beta_sweep (default 0,0.1,...,1)"},
            [](ExperimentConfig& c, const std::string& v) {
              c.ablate_betas.clear();
              for (const auto& b : split_list(v)) c.ablate_betas.push_back(to_double("ablate.betas", b));
            },
            [](const ExperimentConfig& c) { return join_list(c.ablate_betas, fmt); }},
      Entry{{"ablate.k_grid", "per-class K values for k_sweep (default 50,100,200)"},
            [](ExperimentConfig& c, const std::string& v) {
              c.ablate_k_grid.clear();
              for (const auto& k : split_list(v)) c.ablate_k_grid.push_back(to_u64("ablate.k_grid", k));
            },
            [](const ExperimentConfig& c) {
              return join_list(c.ablate_k_grid, [](std::size_t k) { return std::to_string(k); });
            }},
      TS_UINT("ablate.seeds", ablate_seeds, "detector seeds averaged in drop_subdetector (default 3)"),
  };
  return table;
}

#undef TS_STR
#undef TS_UINT
#undef TS_REAL

const Entry& find(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  try {
    find(key).set(cfg, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string get_key(const ExperimentConfig& cfg, const std::string& key) {
  return find(key).get(cfg);
}

void ExperimentConfig::validate() const {
  if (train_path.empty()) throw ConfigError("data.train is required");
  if (test_path.empty()) throw ConfigError("data.test is required");
  if (train_path == test_path) {
    throw ConfigError("data.test names the same file as data.train; test data must be disjoint");
  }
  if (attack_lexicon.empty()) throw ConfigError("lexicon.attack is required");
  if (num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("data.dev_fraction must be in (0, 1)");
  if (embed_dim == 0) throw ConfigError("data.embed_dim must be >= 1");
  if (train_attacks.empty()) throw ConfigError("attack.train must list at least one attack");
  if (!held_out.empty()) {
    const auto h = attacks::parse_attack(held_out);
    if (std::find(train_attacks.begin(), train_attacks.end(), h) != train_attacks.end()) {
      throw ConfigError("attack.held_out '" + held_out + "' also appears in attack.train");
    }
  }
  if (eval_attacks.empty()) throw ConfigError("attack.eval must list at least one attack");
  try {
    attack.validate();
    corrector.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("attack/corrector: ") + e.what());
  }
  if (k == 0) throw ConfigError("detector.k must be >= 1");
  if (eval_n == 0) throw ConfigError("eval.n must be >= 1");
  if (saliency.ig_steps == 0) throw ConfigError("saliency.ig_steps must be >= 1");
  if (!(fgws_delta_f > 0.0 && fgws_delta_f < 1.0)) throw ConfigError("fgws.delta_f must be in (0, 1)");
  if (victim.arch == victims::Arch::TextCnn && victim.widths.empty()) {
    throw ConfigError("victim.widths must not be empty");
  }
  for (double b : ablate_betas) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("ablate.betas values must lie in [0, 1]");
  }
  if (ablate_seeds == 0) throw ConfigError("ablate.seeds must be >= 1");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::stringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(no) + ": expected 'key = value'");
    }
    try {
      set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("config file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) {
    if (e.key.name == "out") continue;  // where results go is not what produced them
    out += e.key.name + " = " + e.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
  return buf;
}

}  // namespace textshield::harness
