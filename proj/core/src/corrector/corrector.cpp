#include "textshield/corrector/corrector.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "textshield/errors.hpp"
#include "textshield/text/tokenizer.hpp"

namespace textshield::corrector {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Saliency: return "saliency";
    case Strategy::PosVerb: return "pos_verb";
    case Strategy::PosNoun: return "pos_noun";
    case Strategy::PosNounVerb: return "pos_noun_verb";
    case Strategy::FreqLow: return "freq_low";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  for (Strategy x : {Strategy::Saliency, Strategy::PosVerb, Strategy::PosNoun,
                     Strategy::PosNounVerb, Strategy::FreqLow}) {
    if (s == to_string(x)) return x;
  }
  throw ConfigError("unknown corrector strategy '" + s + "'");
}

void CorrectorConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
  if (!(freq_low_percentile > 0.0 && freq_low_percentile < 1.0)) {
    throw ConfigError("freq_low_percentile must be in (0, 1)");
  }
}

std::vector<std::size_t> select_suspects(std::span<const double> column, double beta) {
  if (column.empty()) return {};
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  // Same value as beta * (max - min) + min, but exact at both ends of beta.
  const double threshold = (1.0 - beta) * *lo + beta * *hi;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (column[i] > threshold) out.push_back(i);
  }
  return out;
}

text::Tokens correct(const text::Tokens& tokens, const std::vector<std::size_t>& suspects,
                     const text::SynonymLexicon& lexicon, const text::FrequencyTable& freq,
                     const text::Vocabulary& vocab) {
  text::Tokens out = tokens;
  for (std::size_t i : suspects) {
    if (i >= out.size()) throw Error("suspect index " + std::to_string(i) + " out of range");
    const auto candidates = text::synonyms_in_vocab(tokens[i], lexicon, vocab);
    const std::string* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& c : candidates) {
      const auto n = freq.count(c);
      if (!best || n > best_count || (n == best_count && c < *best)) {
        best = &c;
        best_count = n;
      }
    }
    if (best) out[i] = *best;
  }
  return out;
}

std::vector<std::size_t> baseline_strategies(const text::Tokens& tokens, Strategy strategy,
                                             const text::SynonymLexicon& lexicon,
                                             const text::FrequencyTable& freq,
                                             const CorrectorConfig& cfg) {
  std::vector<std::size_t> out;
  const std::size_t n = std::min(tokens.size(), text::kMaxLength);
  if (strategy == Strategy::FreqLow) {
    for (std::size_t i = 0; i < n; ++i) {
      if (freq.is_low_frequency(tokens[i], cfg.freq_low_percentile)) out.push_back(i);
    }
    return out;
  }
  if (strategy == Strategy::Saliency) throw Error("saliency strategy needs AWI values");
  if (!lexicon.has_pos_tags()) {
    throw ConfigError("strategy " + to_string(strategy) + " needs a POS-tagged lexicon");
  }
  const bool verbs = strategy == Strategy::PosVerb || strategy == Strategy::PosNounVerb;
  const bool nouns = strategy == Strategy::PosNoun || strategy == Strategy::PosNounVerb;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = lexicon.pos_of(tokens[i]);
    if (!pos) continue;
    if ((verbs && *pos == text::Pos::Verb) || (nouns && *pos == text::Pos::Noun)) out.push_back(i);
  }
  return out;
}

namespace {

void check_context(const DefenseContext& ctx) {
  if (!ctx.victim || !ctx.vocab || !ctx.lexicon || !ctx.freq) {
    throw Error("defend: incomplete defense context");
  }
  if (ctx.detector && ctx.detector->config().num_classes != ctx.victim->num_classes()) {
    throw ConfigError("defend: detector expects " +
                      std::to_string(ctx.detector->config().num_classes) +
                      " classes, victim has " + std::to_string(ctx.victim->num_classes()));
  }
}

}  // namespace

DefenseOutcome resolve(const text::Tokens& tokens, const saliency::AwiMatrix& vg,
                       const detector::DetectorOutput* verdict, const DefenseContext& ctx,
                       const CorrectorConfig& cfg) {
  check_context(ctx);
  cfg.validate();
  DefenseOutcome out;
  out.input = tokens;
  const auto ex = text::encode(tokens, *ctx.vocab);
  const auto initial = ctx.victim->predict(ex);
  if (initial.label != vg.predicted) throw Error("resolve: AWI matrix belongs to another input");
  out.initial_label = initial.label;
  out.initial_confidence = initial.confidence;
  out.final_label = initial.label;
  out.final_confidence = initial.confidence;
  if (!verdict) return out;
  out.detector_probs = verdict->probs;
  out.adversarial = verdict->verdict == 1;
  if (!out.adversarial) return out;

  std::vector<std::size_t> suspects;
  if (cfg.strategy == Strategy::Saliency) {
    std::vector<double> column(ex.true_length);
    for (std::size_t i = 0; i < ex.true_length; ++i) column[i] = vg.at(i, initial.label);
    suspects = select_suspects(column, cfg.beta);
  } else {
    suspects = baseline_strategies(tokens, cfg.strategy, *ctx.lexicon, *ctx.freq, cfg);
  }
  for (std::size_t i : suspects) out.suspects.push_back({i, vg.at(i, initial.label)});
  out.corrected = correct(tokens, suspects, *ctx.lexicon, *ctx.freq, *ctx.vocab);
  const auto final = ctx.victim->predict(text::encode(*out.corrected, *ctx.vocab));
  out.final_label = final.label;
  out.final_confidence = final.confidence;
  return out;
}

DefenseOutcome defend(const text::Tokens& tokens, const DefenseContext& ctx,
                      const CorrectorConfig& cfg) {
  check_context(ctx);
  cfg.validate();
  const auto ex = text::encode(tokens, *ctx.vocab);
  if (!ctx.detector) {
    saliency::AwiMatrix none;
    none.predicted = ctx.victim->predict(ex).label;
    return resolve(tokens, none, nullptr, ctx, cfg);
  }
  const auto awi = saliency::awi_all(*ctx.victim, ex, ctx.saliency);
  const auto verdict = ctx.detector->forward(awi);
  return resolve(tokens, awi[0], &verdict, ctx, cfg);
}

DefenseOutcome defend(const std::string& sentence, const DefenseContext& ctx,
                      const CorrectorConfig& cfg) {
  return defend(text::tokenize(sentence), ctx, cfg);
}

std::string to_json(const DefenseOutcome& o) {
  nlohmann::ordered_json j;
  j["input"] = text::join(o.input);
  j["verdict"] = o.adversarial ? "adversarial" : "benign";
  j["corrected"] = o.corrected ? nlohmann::ordered_json(text::join(*o.corrected))
                               : nlohmann::ordered_json(nullptr);
  auto& sus = j["suspects"] = nlohmann::ordered_json::array();
  for (const auto& s : o.suspects) {
    sus.push_back({{"position", s.position}, {"word", o.input.at(s.position)}, {"awi", s.awi}});
  }
  j["initial_label"] = o.initial_label;
  j["initial_confidence"] = o.initial_confidence;
  j["detector_probs"] = o.detector_probs;
  j["final_label"] = o.final_label;
  j["final_confidence"] = o.final_confidence;
  return j.dump();
}

}  // namespace textshield::corrector
