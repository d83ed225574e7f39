#include "textshield/text/lexicon.hpp"

#include <algorithm>
#include <fstream>

#include "textshield/errors.hpp"

namespace textshield::text {

std::string_view to_string(Pos pos) {
  switch (pos) {
    case Pos::Noun: return "noun";
    case Pos::Verb: return "verb";
    case Pos::Adj: return "adj";
    case Pos::Adv: return "adv";
    case Pos::Other: return "other";
  }
  return "other";
}

std::optional<Pos> parse_pos(std::string_view s) {
  for (Pos p : {Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv, Pos::Other}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

void SynonymLexicon::add(const std::string& headword, std::vector<Synonym> synonyms) {
  auto& list = entries_[headword];
  for (Synonym& s : synonyms) {
    if (s.token == headword) continue;
    const bool dup = std::any_of(list.begin(), list.end(),
                                 [&](const Synonym& e) { return e.token == s.token; });
    if (dup) continue;
    pos_index_.emplace(s.token, s.pos);
    list.push_back(std::move(s));
  }
}

const std::vector<Synonym>& SynonymLexicon::synonyms(std::string_view headword) const {
  static const std::vector<Synonym> kEmpty;
  auto it = entries_.find(headword);
  return it == entries_.end() ? kEmpty : it->second;
}

bool SynonymLexicon::contains(std::string_view headword) const {
  return entries_.find(headword) != entries_.end();
}

std::optional<Pos> SynonymLexicon::pos_of(std::string_view token) const {
  if (auto it = pos_index_.find(token); it != pos_index_.end()) return it->second;
  // A headword shares the sense of its synonyms.
  if (auto it = entries_.find(token); it != entries_.end() && !it->second.empty()) {
    return it->second.front().pos;
  }
  return std::nullopt;
}

void SynonymLexicon::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [head, list] : entries_) {
    out << head << '\t';
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i) out << ',';
      out << list[i].token << ':' << to_string(list[i].pos);
    }
    out << '\n';
  }
}

SynonymLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read lexicon " + path);
  SynonymLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError(where + "expected headword<TAB>synonyms");
    }
    const std::string head = line.substr(0, tab);
    std::vector<Synonym> list;
    std::string_view rest(line);
    rest.remove_prefix(tab + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (item.empty()) throw FormatError(where + "empty synonym entry");
      Synonym s;
      const auto colon = item.find(':');
      s.token = std::string(item.substr(0, colon));
      if (s.token.empty()) throw FormatError(where + "empty synonym token");
      if (colon != std::string_view::npos) {
        auto pos = parse_pos(item.substr(colon + 1));
        if (!pos) {
          throw FormatError(where + "unknown POS '" +
                            std::string(item.substr(colon + 1)) + "'");
        }
        s.pos = *pos;
        lexicon.mark_tagged();
      }
      list.push_back(std::move(s));
    }
    lexicon.add(head, std::move(list));
  }
  return lexicon;
}

std::vector<std::string> synonyms_in_vocab(std::string_view word,
                                           const SynonymLexicon& lexicon,
                                           const Vocabulary& vocab,
                                           std::optional<Pos> pos_filter) {
  std::vector<std::string> out;
  for (const Synonym& s : lexicon.synonyms(word)) {
    if (!vocab.contains(s.token)) continue;
    if (pos_filter && s.pos != *pos_filter) continue;
    out.push_back(s.token);
  }
  return out;
}

}  // namespace textshield::text
