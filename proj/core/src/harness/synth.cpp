#include "textshield/harness/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::harness {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                   "s", "t", "v", "z", "ch", "sh", "tr", "pl"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

struct Group {
  std::vector<std::string> forms;  // canonical first
  std::vector<double> centre;
};

class Words {
 public:
  explicit Words(std::uint64_t seed) : rng_(derive_seed(seed, "synth-words")) {}

  std::string fresh() {
    std::uniform_int_distribution<std::size_t> syl(2, 3);
    std::uniform_int_distribution<std::size_t> on(0, std::size(kOnsets) - 1);
    std::uniform_int_distribution<std::size_t> vo(0, std::size(kVowels) - 1);
    for (;;) {
      std::string w;
      for (std::size_t s = syl(rng_); s > 0; --s) {
        w += kOnsets[on(rng_)];
        w += kVowels[vo(rng_)];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

std::vector<double> unit_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = n(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::size_t pick_form(std::mt19937_64& rng, const std::vector<double>& weights) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

}  // namespace

SynthCorpus make_synthetic(const SynthConfig& cfg) {
  if (cfg.concepts_per_class == 0 || cfg.neutral_groups == 0) {
    throw ConfigError("synth: need at least one concept per class and one neutral group");
  }
  if (cfg.min_length < 4 || cfg.max_length < cfg.min_length || cfg.max_length > 128) {
    throw ConfigError("synth: lengths must satisfy 4 <= min <= max <= 128");
  }
  if (cfg.embed_dim == 0) throw ConfigError("synth: embed_dim must be >= 1");

  Words words(cfg.seed);
  std::mt19937_64 erng(derive_seed(cfg.seed, "synth-embeddings"));
  SynthCorpus out;

  auto make_group = [&](std::size_t size, text::Pos pos) {
    Group g;
    for (std::size_t i = 0; i < size; ++i) g.forms.push_back(words.fresh());
    g.centre = unit_vector(cfg.embed_dim, erng);
    for (const auto& f : g.forms) {
      auto noise = unit_vector(cfg.embed_dim, erng);
      std::vector<double> v(cfg.embed_dim);
      for (std::size_t c = 0; c < cfg.embed_dim; ++c) {
        v[c] = g.centre[c] + cfg.embed_spread * noise[c];
      }
      out.embeddings.emplace_back(f, std::move(v));
      std::vector<text::Synonym> syn;
      for (const auto& other : g.forms) {
        if (other != f) syn.push_back({other, pos});
      }
      out.lexicon.add(f, syn);
    }
    return g;
  };

  // concepts[c]: sentiment groups of class c; forms = canonical, medium, rare, rare
  std::vector<std::vector<Group>> concepts(2);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < cfg.concepts_per_class; ++i) {
      concepts[c].push_back(make_group(4, text::Pos::Adj));
    }
  }
  std::vector<Group> neutral;
  for (std::size_t i = 0; i < cfg.neutral_groups; ++i) {
    neutral.push_back(make_group(3, i % 2 ? text::Pos::Verb : text::Pos::Noun));
  }
  out.lexicon.mark_tagged();

  auto sentence = [&](std::mt19937_64& rng, std::size_t label) {
    std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
    std::uniform_int_distribution<std::size_t> slots(2, 3);
    std::uniform_int_distribution<std::size_t> concept_of(0, cfg.concepts_per_class - 1);
    std::uniform_int_distribution<std::size_t> group_of(0, cfg.neutral_groups - 1);
    std::uniform_int_distribution<std::size_t> rare(2, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = len(rng);
    std::vector<std::string> toks(n);
    for (auto& t : toks) {
      const auto& g = neutral[group_of(rng)];
      t = g.forms[pick_form(rng, {0.7, 0.25, 0.05})];
    }
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = i;
    std::shuffle(pos.begin(), pos.end(), rng);
    std::size_t next = 0;
    for (std::size_t s = slots(rng); s > 0; --s) {
      toks[pos[next++]] = concepts[label][concept_of(rng)].forms[pick_form(rng, {0.75, 0.25})];
    }
    if (u(rng) < cfg.noise_prob) {
      toks[pos[next++]] = concepts[1 - label][concept_of(rng)].forms[rare(rng)];
    }
    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) text += ' ';
      text += toks[i];
    }
    return text;
  };

  std::mt19937_64 srng(derive_seed(cfg.seed, "synth-sentences"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::set<std::string> seen;
  auto fill = [&](std::vector<text::Record>& dst, std::size_t count, double label_noise) {
    while (dst.size() < count) {
      const std::size_t label = dst.size() % 2;
      std::string text = sentence(srng, label);
      // Keep train and test disjoint as sentences.
      if (!seen.insert(text).second) continue;
      const std::size_t shown = u(srng) < label_noise ? 1 - label : label;
      dst.push_back({shown, std::move(text)});
    }
  };
  fill(out.train, cfg.n_train, cfg.label_noise);
  fill(out.test, cfg.n_test, 0.0);
  return out;
}

void write_synthetic(const SynthCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  text::save_dataset((d / "train.tsv").string(), corpus.train);
  text::save_dataset((d / "test.tsv").string(), corpus.test);
  corpus.lexicon.save((d / "lexicon.tsv").string());
  std::ofstream emb(d / "embeddings.txt", std::ios::binary);
  if (!emb) throw Error("cannot write " + (d / "embeddings.txt").string());
  char buf[32];
  for (const auto& [tok, v] : corpus.embeddings) {
    emb << tok;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.6f", x);
      emb << buf;
    }
    emb << '\n';
  }
}

}  // namespace textshield::harness
