#include "textshield/text/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "textshield/errors.hpp"

namespace textshield::text {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& corpus,
                             std::size_t min_count) {
  std::map<std::string, std::uint64_t, std::less<>> counts;
  for (const Tokens& sentence : corpus) {
    for (const std::string& t : sentence) ++counts[t];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(),
                                                            counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) {
    if (count < min_count || token == kPadToken || token == kUnkToken) continue;
    vocab.add(token, count);
  }
  return vocab;
}

std::size_t Vocabulary::add(std::string_view token, std::uint64_t count) {
  if (auto it = index_.find(std::string(token)); it != index_.end()) {
    return it->second;
  }
  const std::size_t id = tokens_.size();
  tokens_.emplace_back(token);
  counts_.push_back(count);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw Error("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read vocabulary " + path);
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.counts_.clear();
  vocab.index_.clear();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": missing tab");
    }
    const std::string token = line.substr(0, tab);
    if (vocab.contains(token)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate token");
    }
    vocab.add(token, std::stoull(line.substr(tab + 1)));
  }
  if (vocab.size() < 2 || vocab.tokens_[kPadId] != kPadToken ||
      vocab.tokens_[kUnkId] != kUnkToken) {
    throw FormatError(path + ": PAD/UNK must occupy ids 0 and 1");
  }
  return vocab;
}

EncodedExample encode(const Tokens& tokens, const Vocabulary& vocab,
                      std::size_t label) {
  if (tokens.empty()) throw FormatError("empty sentence");
  EncodedExample ex;
  ex.ids.assign(kMaxLength, kPadId);
  ex.true_length = std::min(tokens.size(), kMaxLength);
  ex.label = label;
  for (std::size_t i = 0; i < ex.true_length; ++i) ex.ids[i] = vocab.id(tokens[i]);
  return ex;
}

Tokens decode(const EncodedExample& ex, const Vocabulary& vocab) {
  Tokens out;
  out.reserve(ex.true_length);
  for (std::size_t i = 0; i < ex.true_length; ++i) out.push_back(vocab.token(ex.ids[i]));
  return out;
}

}  // namespace textshield::text
