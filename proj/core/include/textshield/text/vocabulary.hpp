#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "textshield/text/tokenizer.hpp"

namespace textshield::text {

inline constexpr std::size_t kMaxLength = 128;
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Bijective token <-> id map with per-token corpus counts. Ids 0 and 1 are
// reserved for PAD and UNK.
class Vocabulary {
 public:
  Vocabulary();

  // Ids assigned by descending count, ties broken lexicographically.
  static Vocabulary build(const std::vector<Tokens>& corpus,
                          std::size_t min_count = 1);

  // Appends a token (no-op if present) and returns its id.
  std::size_t add(std::string_view token, std::uint64_t count = 0);

  std::size_t id(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  std::uint64_t count(std::size_t id) const { return counts_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line: `token<TAB>count`, in id order.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EncodedExample {
  std::vector<std::size_t> ids;  // always kMaxLength entries
  std::size_t true_length = 0;
  std::size_t label = 0;
};

// Truncates to kMaxLength, right-pads with PAD, maps unknown tokens to UNK.
EncodedExample encode(const Tokens& tokens, const Vocabulary& vocab,
                      std::size_t label = 0);

// Tokens at positions < true_length.
Tokens decode(const EncodedExample& ex, const Vocabulary& vocab);

}  // namespace textshield::text
