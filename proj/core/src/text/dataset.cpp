#include "textshield/text/dataset.hpp"

#include <charconv>
#include <fstream>

#include "textshield/errors.hpp"

namespace textshield::text {

std::vector<Record> parse_dataset(std::istream& in, std::size_t num_classes,
                                  const std::string& source) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(where + "missing tab");
    std::size_t label = 0;
    const char* first = line.data();
    const char* last = line.data() + tab;
    auto [ptr, ec] = std::from_chars(first, last, label);
    if (ec != std::errc() || ptr != last || tab == 0) {
      throw FormatError(where + "label is not a non-negative integer");
    }
    if (label >= num_classes) {
      throw FormatError(where + "unknown label " + std::to_string(label) +
                        " (class count " + std::to_string(num_classes) + ")");
    }
    out.push_back({label, line.substr(tab + 1)});
  }
  return out;
}

std::vector<Record> load_dataset(const std::string& path,
                                 std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read dataset " + path);
  return parse_dataset(in, num_classes, path);
}

void save_dataset(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const Record& r : records) out << r.label << '\t' << r.text << '\n';
}

}  // namespace textshield::text
