#include "textshield/text/frequency.hpp"

#include <algorithm>
#include <cmath>

namespace textshield::text {

FrequencyTable FrequencyTable::build(const std::vector<Tokens>& train_split) {
  FrequencyTable table;
  for (const Tokens& sentence : train_split) {
    for (const std::string& t : sentence) {
      ++table.counts_[t];
      ++table.total_;
    }
  }
  table.sorted_.reserve(table.counts_.size());
  for (const auto& [token, c] : table.counts_) table.sorted_.push_back(c);
  std::sort(table.sorted_.begin(), table.sorted_.end());
  return table;
}

std::uint64_t FrequencyTable::count(std::string_view token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t FrequencyTable::quantile(double p) const {
  if (sorted_.empty()) return 0;
  p = std::clamp(p, 0.0, 1.0);
  const auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(sorted_.size())));
  return sorted_[rank == 0 ? 0 : rank - 1];
}

bool FrequencyTable::is_low_frequency(std::string_view token,
                                      double percentile) const {
  if (percentile <= 0.0) return false;
  return count(token) < quantile(percentile);
}

}  // namespace textshield::text
