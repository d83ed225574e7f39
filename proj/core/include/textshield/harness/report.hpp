#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace textshield::harness {

// Accuracy of a (victim, defense) pair on clean and attacked sentences.
struct Table1Row {
  std::string victim;
  std::string defense;
  std::string attack;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Detection quality per attack. protocol is "in-distribution" or "held-out".
struct Table2Row {
  std::string dataset;
  std::string attack;
  std::string detector;
  std::string protocol;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// One point of an ablation curve.
struct AblationRow {
  std::string mode;     // beta_sweep, k_sweep, drop_subdetector
  std::string setting;  // e.g. beta=0.4, K=100, mask=-VG
  std::string attack;   // attack name, pooled or clean
  std::string metric;   // adversarial_accuracy, dev_f1, ...
  double value = 0.0;
  std::uint64_t seed = 0;      // master seed
  std::uint64_t sub_seed = 0;  // ablation repeat, 0 when unused
  std::string config_hash;
};

struct RowSet {
  std::vector<Table1Row> table1;
  std::vector<Table2Row> table2;
  std::vector<AblationRow> ablation;

  bool empty() const { return table1.empty() && table2.empty() && ablation.empty(); }
  void append(const RowSet& other);
};

// JSON lines, one row per line, tagged by table.
void write_rows(const std::string& path, const RowSet& rows);
RowSet read_rows(const std::string& path);

// Reads every `*.jsonl` under `dir` in name order.
RowSet read_row_dir(const std::string& dir);

struct ReportFiles {
  std::string table1_csv;
  std::string table2_csv;
  std::string ablation_csv;
  std::string bundle_json;
};

// Sorted CSVs plus a JSON bundle holding the rows, mean and sample standard
// deviation across seeds, and the canonical text of each config hash found in
// `configs` (hash, text pairs). Throws Error when there are no rows.
ReportFiles write_report(const RowSet& rows,
                         const std::vector<std::pair<std::string, std::string>>& configs,
                         const std::string& dir);

}  // namespace textshield::harness
