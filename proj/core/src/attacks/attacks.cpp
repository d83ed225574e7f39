#include "textshield/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "textshield/errors.hpp"
#include "textshield/util/seed.hpp"

namespace textshield::attacks {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Pwws: return "pwws";
    case AttackKind::TextFooler: return "textfooler";
    case AttackKind::Ga: return "ga";
    case AttackKind::Iga: return "iga";
  }
  return "?";
}

AttackKind parse_attack(const std::string& s) {
  for (AttackKind k : kAttackKinds) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown attack '" + s + "'");
}

void AttackConfig::validate() const {
  if (!(max_fraction > 0.0 && max_fraction <= 1.0)) {
    throw ConfigError("attack max_fraction must be in (0, 1]");
  }
  if (population < 2) throw ConfigError("attack population must be >= 2");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw ConfigError("attack mutation_rate must be in [0, 1]");
  }
}

std::size_t substitution_budget(std::size_t true_length, double fraction) {
  // Guard against 0.25 * 8 landing a hair above 2.
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(true_length) - 1e-9));
}

namespace {

// Memoised victim queries against one true label.
class Probe {
 public:
  Probe(const AttackContext& ctx, std::size_t label) : ctx_(ctx), label_(label) {
    if (!ctx.victim || !ctx.vocab || !ctx.lexicon) throw Error("attack: incomplete context");
    if (label >= ctx.victim->num_classes()) {
      throw ConfigError("attack: label " + std::to_string(label) + " outside victim classes");
    }
  }

  const std::vector<double>& probs(const text::Tokens& s) {
    auto ex = text::encode(s, *ctx_.vocab);
    ex.ids.resize(ex.true_length);
    auto it = cache_.find(ex.ids);
    if (it != cache_.end()) return it->second;
    ++queries_;
    auto p = ctx_.victim->probabilities(text::encode(s, *ctx_.vocab));
    return cache_.emplace(std::move(ex.ids), std::move(p)).first->second;
  }
  double true_prob(const text::Tokens& s) { return probs(s)[label_]; }
  bool flipped(const text::Tokens& s) { return victims::argmax(probs(s)).label != label_; }
  std::size_t queries() const { return queries_; }

 private:
  const AttackContext& ctx_;
  std::size_t label_;
  std::size_t queries_ = 0;
  std::map<std::vector<std::size_t>, std::vector<double>> cache_;
};

std::size_t attackable_length(const text::Tokens& s) {
  return std::min(s.size(), text::kMaxLength);
}

AttackResult start(AttackKind kind, const text::Tokens& sentence, std::size_t label,
                   Probe& probe) {
  if (sentence.empty()) throw Error("attack: empty sentence");
  AttackResult r;
  r.kind = kind;
  r.original = sentence;
  r.label = label;
  r.adversarial = sentence;
  r.confidence_before = probe.true_prob(sentence);
  r.confidence_after = r.confidence_before;
  r.success = probe.flipped(sentence);
  return r;
}

void finish(AttackResult& r, Probe& probe) {
  r.substitutions.clear();
  for (std::size_t i = 0; i < r.original.size(); ++i) {
    if (r.adversarial[i] != r.original[i]) {
      r.substitutions.push_back({i, r.original[i], r.adversarial[i]});
    }
  }
  r.confidence_after = probe.true_prob(r.adversarial);
  r.success = probe.flipped(r.adversarial);
  r.queries = probe.queries();
}

std::vector<std::vector<std::string>> candidate_lists(const text::Tokens& s,
                                                      const AttackContext& ctx) {
  std::vector<std::vector<std::string>> out(attackable_length(s));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = text::synonyms_in_vocab(s[i], *ctx.lexicon, *ctx.vocab);
  }
  return out;
}

// Drop in true-class probability when word i becomes UNK.
std::vector<double> deletion_importance(const text::Tokens& s, double p0, Probe& probe) {
  std::vector<double> out(attackable_length(s));
  for (std::size_t i = 0; i < out.size(); ++i) {
    text::Tokens t = s;
    t[i] = std::string(text::kUnkToken);
    out[i] = p0 - probe.true_prob(t);
  }
  return out;
}

std::vector<std::size_t> descending(const std::vector<double>& score) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

}  // namespace

AttackResult attack_pwws(const text::Tokens& sentence, std::size_t label,
                         const AttackContext& ctx, const AttackConfig& cfg) {
  cfg.validate();
  Probe probe(ctx, label);
  AttackResult r = start(AttackKind::Pwws, sentence, label, probe);
  if (r.success) {
    finish(r, probe);
    return r;
  }
  const double p0 = r.confidence_before;
  const auto cands = candidate_lists(sentence, ctx);
  const auto saliency = deletion_importance(sentence, p0, probe);
  const std::size_t n = cands.size();

  std::vector<std::string> best(n);
  std::vector<double> gain(n, 0.0);
  std::vector<bool> usable(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : cands[i]) {
      text::Tokens t = sentence;
      t[i] = c;
      const double d = p0 - probe.true_prob(t);
      if (!usable[i] || d > gain[i]) {
        usable[i] = true;
        gain[i] = d;
        best[i] = c;
      }
    }
  }
  const double peak = *std::max_element(saliency.begin(), saliency.end());
  double z = 0.0;
  for (double s : saliency) z += std::exp(s - peak);
  std::vector<double> score(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    if (usable[i]) score[i] = std::exp(saliency[i] - peak) / z * gain[i];
  }

  const std::size_t budget = substitution_budget(n, cfg.max_fraction);
  std::size_t used = 0;
  for (std::size_t i : descending(score)) {
    if (used == budget || !usable[i]) break;
    r.adversarial[i] = best[i];
    ++used;
    if (probe.flipped(r.adversarial)) break;
  }
  finish(r, probe);
  return r;
}

AttackResult attack_textfooler(const text::Tokens& sentence, std::size_t label,
                               const AttackContext& ctx, const AttackConfig& cfg) {
  cfg.validate();
  if (!ctx.embeddings) throw Error("textfooler: embeddings required");
  Probe probe(ctx, label);
  AttackResult r = start(AttackKind::TextFooler, sentence, label, probe);
  if (r.success) {
    finish(r, probe);
    return r;
  }
  const auto cands = candidate_lists(sentence, ctx);
  const auto importance = deletion_importance(sentence, r.confidence_before, probe);
  const std::size_t budget = substitution_budget(cands.size(), cfg.max_fraction);
  const auto& vocab = *ctx.vocab;
  std::size_t used = 0;
  for (std::size_t i : descending(importance)) {
    if (used == budget) break;
    const auto origin = ctx.embeddings->row(vocab.id(sentence[i]));
    double current = probe.true_prob(r.adversarial);
    const std::string* pick = nullptr;
    for (const auto& c : cands[i]) {
      if (text::cosine_similarity(origin, ctx.embeddings->row(vocab.id(c))) <
          cfg.cosine_threshold) {
        continue;
      }
      text::Tokens t = r.adversarial;
      t[i] = c;
      const double p = probe.true_prob(t);
      if (p < current) {
        current = p;
        pick = &c;
      }
    }
    if (!pick) continue;
    r.adversarial[i] = *pick;
    ++used;
    if (probe.flipped(r.adversarial)) break;
  }
  finish(r, probe);
  return r;
}

AttackResult attack_genetic(const text::Tokens& sentence, std::size_t label,
                            const AttackContext& ctx, const AttackConfig& cfg, bool improved) {
  cfg.validate();
  Probe probe(ctx, label);
  AttackResult r =
      start(improved ? AttackKind::Iga : AttackKind::Ga, sentence, label, probe);
  if (r.success) {
    finish(r, probe);
    return r;
  }
  const auto cands = candidate_lists(sentence, ctx);
  const std::size_t n = cands.size();
  std::vector<std::size_t> open;  // positions with at least one synonym
  for (std::size_t i = 0; i < n; ++i) {
    if (!cands[i].empty()) open.push_back(i);
  }
  if (open.empty()) {
    finish(r, probe);
    return r;
  }
  const std::size_t budget = substitution_budget(n, cfg.max_fraction);
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](std::size_t size) {
    return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
  };
  auto substituted = [&](const text::Tokens& x) {
    std::vector<std::size_t> out;
    for (std::size_t i : open) {
      if (x[i] != sentence[i]) out.push_back(i);
    }
    return out;
  };
  auto mutate_at = [&](text::Tokens& x, std::size_t i) {
    x[i] = cands[i][pick(cands[i].size())];
  };
  // A full individual may only move substitutions it already has; plain GA
  // otherwise prefers fresh positions, IGA may revisit any position.
  auto mutate = [&](text::Tokens& x) {
    const auto done = substituted(x);
    std::vector<std::size_t> pool;
    if (done.size() >= budget) {
      if (improved) pool = done;
    } else if (improved) {
      pool = open;
    } else {
      for (std::size_t i : open) {
        if (x[i] == sentence[i]) pool.push_back(i);
      }
    }
    if (pool.empty()) return;
    mutate_at(x, pool[pick(pool.size())]);
  };
  auto repair = [&](text::Tokens& x) {
    auto done = substituted(x);
    while (done.size() > budget) {
      const std::size_t j = pick(done.size());
      x[done[j]] = sentence[done[j]];
      done.erase(done.begin() + static_cast<std::ptrdiff_t>(j));
    }
  };

  std::vector<text::Tokens> pop;
  for (std::size_t m = 0; m < cfg.population; ++m) {
    text::Tokens x = sentence;
    if (improved) {
      mutate_at(x, open[m % open.size()]);
    } else {
      mutate(x);
    }
    pop.push_back(std::move(x));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t g = 0;; ++g) {
    std::vector<double> fit(pop.size());
    std::size_t best = 0, best_flip = pop.size();
    for (std::size_t m = 0; m < pop.size(); ++m) {
      fit[m] = 1.0 - probe.true_prob(pop[m]);
      if (fit[m] > fit[best]) best = m;
      if (probe.flipped(pop[m]) && (best_flip == pop.size() || fit[m] > fit[best_flip])) {
        best_flip = m;
      }
    }
    if (best_flip < pop.size()) {
      r.adversarial = pop[best_flip];
      break;
    }
    r.adversarial = pop[best];
    if (g == cfg.generations) break;

    std::vector<double> weights = fit;
    for (double& w : weights) w += 1e-12;
    std::discrete_distribution<std::size_t> select(weights.begin(), weights.end());
    std::vector<text::Tokens> next{pop[best]};
    while (next.size() < cfg.population) {
      const auto& a = pop[select(rng)];
      const auto& b = pop[select(rng)];
      text::Tokens child = a;
      if (n >= 2) {
        const std::size_t cut = 1 + pick(n - 1);
        std::copy(b.begin() + static_cast<std::ptrdiff_t>(cut),
                  b.begin() + static_cast<std::ptrdiff_t>(n),
                  child.begin() + static_cast<std::ptrdiff_t>(cut));
      } else if (unit(rng) < 0.5) {
        child = b;
      }
      repair(child);
      if (unit(rng) < cfg.mutation_rate) mutate(child);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  finish(r, probe);
  return r;
}

AttackResult run_attack(const text::Tokens& sentence, std::size_t label,
                        const AttackContext& ctx, const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::Pwws: return attack_pwws(sentence, label, ctx, cfg);
    case AttackKind::TextFooler: return attack_textfooler(sentence, label, ctx, cfg);
    case AttackKind::Ga: return attack_genetic(sentence, label, ctx, cfg, false);
    case AttackKind::Iga: return attack_genetic(sentence, label, ctx, cfg, true);
  }
  throw ConfigError("unknown attack kind");
}

std::string check_result(const AttackResult& r, const AttackContext& ctx, double max_fraction) {
  if (r.adversarial.size() != r.original.size()) return "token count changed";
  const std::size_t n = attackable_length(r.original);
  if (r.substitutions.size() > substitution_budget(n, max_fraction)) return "over budget";
  for (const auto& s : r.substitutions) {
    if (s.position >= n) return "substitution beyond the model window";
    if (r.original[s.position] != s.old_word || r.adversarial[s.position] != s.new_word) {
      return "substitution list disagrees with the sentences";
    }
    const auto& syn = ctx.lexicon->synonyms(s.old_word);
    if (std::none_of(syn.begin(), syn.end(),
                     [&](const text::Synonym& x) { return x.token == s.new_word; })) {
      return "'" + s.new_word + "' is not a synonym of '" + s.old_word + "'";
    }
  }
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < r.original.size(); ++i) diffs += r.original[i] != r.adversarial[i];
  if (diffs != r.substitutions.size()) return "unlisted substitution";
  const bool flipped =
      ctx.victim->predict(text::encode(r.adversarial, *ctx.vocab)).label != r.label;
  if (flipped != r.success) return "success flag disagrees with the victim";
  return {};
}

std::vector<AttackResult> generate_adversarial_corpus(const std::vector<CorpusSentence>& data,
                                                      const AttackContext& ctx,
                                                      const CorpusOptions& opts) {
  if (opts.kinds.empty()) throw ConfigError("no attack kinds given");
  opts.base.validate();
  std::vector<AttackResult> out;
  if (opts.per_class_quota == 0) return out;
  const std::size_t nk = opts.kinds.size();
  // need[c][k]: results still wanted for class c from kind k
  std::vector<std::vector<std::size_t>> need(opts.num_classes, std::vector<std::size_t>(nk));
  for (auto& row : need) {
    for (std::size_t k = 0; k < nk; ++k) {
      row[k] = opts.per_class_quota / nk + (k < opts.per_class_quota % nk ? 1 : 0);
    }
  }
  std::vector<std::size_t> turn(opts.num_classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (s.label >= opts.num_classes) throw ConfigError("corpus label out of range");
    auto& row = need[s.label];
    std::size_t k = turn[s.label];
    std::size_t tries = 0;
    while (row[k] == 0 && tries < nk) {
      k = (k + 1) % nk;
      ++tries;
    }
    if (row[k] == 0) continue;
    turn[s.label] = (k + 1) % nk;
    AttackConfig cfg = opts.base;
    cfg.kind = opts.kinds[k];
    cfg.seed = derive_seed(opts.base.seed, static_cast<std::uint64_t>(i));
    AttackResult r = run_attack(s.tokens, s.label, ctx, cfg);
    if (!r.success || r.substitutions.empty()) continue;
    out.push_back(std::move(r));
    --row[k];
    bool done = true;
    for (const auto& rr : need) {
      for (std::size_t v : rr) done = done && v == 0;
    }
    if (done) break;
  }
  if (out.empty()) throw Error("adversarial generation produced no successful attacks");
  if (opts.warn) {
    for (std::size_t c = 0; c < opts.num_classes; ++c) {
      for (std::size_t k = 0; k < nk; ++k) {
        if (need[c][k] > 0) {
          opts.warn("class " + std::to_string(c) + ", attack " + to_string(opts.kinds[k]) +
                    ": " + std::to_string(need[c][k]) + " short of quota");
        }
      }
    }
  }
  return out;
}

void save_adversarial(const std::string& path, const std::vector<AttackResult>& results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : results) {
    out << r.label << '\t' << text::join(r.adversarial) << '\t' << text::join(r.original) << '\t'
        << to_string(r.kind) << '\t' << r.substitutions.size() << '\n';
  }
}

std::vector<AdversarialRecord> load_adversarial(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("adversarial corpus not found: " + path);
  std::vector<AdversarialRecord> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
    auto bad = [&](const std::string& why) {
      return FormatError(path + ":" + std::to_string(no) + ": " + why);
    };
    if (f.size() != 5) throw bad("expected 5 tab-separated fields");
    AdversarialRecord rec;
    try {
      std::size_t used = 0;
      rec.label = std::stoul(f[0], &used);
      if (used != f[0].size()) throw bad("bad label");
      rec.n_subs = std::stoul(f[4], &used);
      if (used != f[4].size()) throw bad("bad substitution count");
      rec.kind = parse_attack(f[3]);
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw bad(e.what());
    }
    rec.adversarial = f[1];
    rec.original = f[2];
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace textshield::attacks
