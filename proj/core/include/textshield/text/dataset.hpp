#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

namespace textshield::text {

struct Record {
  std::size_t label = 0;
  std::string text;

  friend bool operator==(const Record&, const Record&) = default;
};

// UTF-8 TSV, one `label<TAB>text` record per line, 0-based labels below
// `num_classes`. Blank lines are skipped. Errors carry the line number.
std::vector<Record> parse_dataset(std::istream& in, std::size_t num_classes,
                                  const std::string& source = "<stream>");
std::vector<Record> load_dataset(const std::string& path,
                                 std::size_t num_classes);
void save_dataset(const std::string& path, const std::vector<Record>& records);

}  // namespace textshield::text
