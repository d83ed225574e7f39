#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textshield/text/vocabulary.hpp"

namespace textshield::text {

enum class Pos { Noun, Verb, Adj, Adv, Other };

std::string_view to_string(Pos pos);
std::optional<Pos> parse_pos(std::string_view s);

struct Synonym {
  std::string token;
  Pos pos = Pos::Other;

  friend bool operator==(const Synonym&, const Synonym&) = default;
};

// headword -> ordered synonym list. A headword never lists itself and lists
// carry no duplicate tokens.
class SynonymLexicon {
 public:
  void add(const std::string& headword, std::vector<Synonym> synonyms);

  const std::vector<Synonym>& synonyms(std::string_view headword) const;
  bool contains(std::string_view headword) const;
  std::size_t size() const { return entries_.size(); }
  // True once any entry carried an explicit `:pos` tag.
  bool has_pos_tags() const { return tagged_; }
  void mark_tagged() { tagged_ = true; }

  // Part of speech of a token, read from the first entry that lists it (as a
  // synonym) or from its own list. nullopt when the lexicon never tags it.
  std::optional<Pos> pos_of(std::string_view token) const;

  const std::map<std::string, std::vector<Synonym>, std::less<>>& entries() const {
    return entries_;
  }

  void save(const std::string& path) const;

 private:
  std::map<std::string, std::vector<Synonym>, std::less<>> entries_;
  std::map<std::string, Pos, std::less<>> pos_index_;
  bool tagged_ = false;
};

// `headword<TAB>synonym:pos,synonym:pos,...`; pos optional (`other`).
SynonymLexicon load_lexicon(const std::string& path);

// Synonyms present in the vocabulary, optionally restricted to one POS, in
// lexicon order.
std::vector<std::string> synonyms_in_vocab(std::string_view word,
                                           const SynonymLexicon& lexicon,
                                           const Vocabulary& vocab,
                                           std::optional<Pos> pos_filter = {});

}  // namespace textshield::text
