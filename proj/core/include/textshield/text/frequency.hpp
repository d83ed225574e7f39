#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "textshield/text/tokenizer.hpp"

namespace textshield::text {

// Token counts over the training split.
class FrequencyTable {
 public:
  static FrequencyTable build(const std::vector<Tokens>& train_split);

  std::uint64_t count(std::string_view token) const;
  std::uint64_t total() const { return total_; }
  std::size_t distinct() const { return counts_.size(); }

  // Count at the given quantile of the distinct-token count distribution
  // (nearest-rank). Tokens with count strictly below it are "low frequency".
  std::uint64_t quantile(double p) const;
  bool is_low_frequency(std::string_view token, double percentile) const;

  const std::map<std::string, std::uint64_t, std::less<>>& counts() const {
    return counts_;
  }

 private:
  std::map<std::string, std::uint64_t, std::less<>> counts_;
  std::vector<std::uint64_t> sorted_;
  std::uint64_t total_ = 0;
};

}  // namespace textshield::text
