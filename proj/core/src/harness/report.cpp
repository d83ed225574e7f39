#include "textshield/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "textshield/errors.hpp"

namespace textshield::harness {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

void RowSet::append(const RowSet& o) {
  table1.insert(table1.end(), o.table1.begin(), o.table1.end());
  table2.insert(table2.end(), o.table2.begin(), o.table2.end());
  ablation.insert(ablation.end(), o.ablation.begin(), o.ablation.end());
}

namespace {

Json to_json(const Table1Row& r) {
  return Json{{"table", "table1"},
              {"victim", r.victim},
              {"defense", r.defense},
              {"attack", r.attack},
              {"clean_accuracy", r.clean_accuracy},
              {"adversarial_accuracy", r.adversarial_accuracy},
              {"n", r.n},
              {"seed", r.seed},
              {"config_hash", r.config_hash}};
}

Json to_json(const Table2Row& r) {
  return Json{{"table", "table2"},     {"dataset", r.dataset},   {"attack", r.attack},
              {"detector", r.detector}, {"protocol", r.protocol}, {"f1", r.f1},
              {"recall", r.recall},     {"precision", r.precision}, {"accuracy", r.accuracy},
              {"n", r.n},               {"seed", r.seed},         {"config_hash", r.config_hash}};
}

Json to_json(const AblationRow& r) {
  return Json{{"table", "ablation"}, {"mode", r.mode},   {"setting", r.setting},
              {"attack", r.attack},  {"metric", r.metric}, {"value", r.value},
              {"seed", r.seed},      {"sub_seed", r.sub_seed}, {"config_hash", r.config_hash}};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Quotes a CSV field when it needs it.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

Json stats_json(const std::vector<double>& xs) {
  const auto s = stats(xs);
  return Json{{"mean", s.mean}, {"sd", s.sd}, {"count", s.count}};
}

}  // namespace

void write_rows(const std::string& path, const RowSet& rows) {
  fs::create_directories(fs::path(path).parent_path());
  std::string out;
  for (const auto& r : rows.table1) out += to_json(r).dump() + "\n";
  for (const auto& r : rows.table2) out += to_json(r).dump() + "\n";
  for (const auto& r : rows.ablation) out += to_json(r).dump() + "\n";
  write_file(path, out);
}

RowSet read_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("row file not found: " + path);
  RowSet rows;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      const auto table = j.at("table").get<std::string>();
      if (table == "table1") {
        rows.table1.push_back({j.at("victim"), j.at("defense"), j.at("attack"),
                               j.at("clean_accuracy"), j.at("adversarial_accuracy"), j.at("n"),
                               j.at("seed"), j.at("config_hash")});
      } else if (table == "table2") {
        rows.table2.push_back({j.at("dataset"), j.at("attack"), j.at("detector"),
                               j.at("protocol"), j.at("f1"), j.at("recall"), j.at("precision"),
                               j.at("accuracy"), j.at("n"), j.at("seed"), j.at("config_hash")});
      } else if (table == "ablation") {
        rows.ablation.push_back({j.at("mode"), j.at("setting"), j.at("attack"), j.at("metric"),
                                 j.at("value"), j.at("seed"), j.at("sub_seed"),
                                 j.at("config_hash")});
      } else {
        throw FormatError("unknown table '" + table + "'");
      }
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return rows;
}

RowSet read_row_dir(const std::string& dir) {
  RowSet rows;
  if (!fs::is_directory(dir)) return rows;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) rows.append(read_rows(f.string()));
  return rows;
}

ReportFiles write_report(const RowSet& input,
                         const std::vector<std::pair<std::string, std::string>>& configs,
                         const std::string& dir) {
  if (input.empty()) throw Error("report: no metric rows found; run an evaluation command first");
  RowSet rows = input;
  std::sort(rows.table1.begin(), rows.table1.end(), [](const auto& a, const auto& b) {
    return std::tie(a.victim, a.defense, a.attack, a.seed, a.config_hash) <
           std::tie(b.victim, b.defense, b.attack, b.seed, b.config_hash);
  });
  std::sort(rows.table2.begin(), rows.table2.end(), [](const auto& a, const auto& b) {
    return std::tie(a.dataset, a.detector, a.protocol, a.attack, a.seed, a.config_hash) <
           std::tie(b.dataset, b.detector, b.protocol, b.attack, b.seed, b.config_hash);
  });
  std::sort(rows.ablation.begin(), rows.ablation.end(), [](const auto& a, const auto& b) {
    return std::tie(a.mode, a.setting, a.attack, a.metric, a.seed, a.sub_seed, a.config_hash) <
           std::tie(b.mode, b.setting, b.attack, b.metric, b.seed, b.sub_seed, b.config_hash);
  });

  fs::create_directories(dir);
  ReportFiles files;
  files.table1_csv = (fs::path(dir) / "table1.csv").string();
  files.table2_csv = (fs::path(dir) / "table2.csv").string();
  files.ablation_csv = (fs::path(dir) / "ablation.csv").string();
  files.bundle_json = (fs::path(dir) / "bundle.json").string();

  std::string t1 = "victim,defense,attack,clean_accuracy,adversarial_accuracy,n,seed,config_hash\n";
  for (const auto& r : rows.table1) {
    t1 += field(r.victim) + "," + field(r.defense) + "," + field(r.attack) + "," +
          num(r.clean_accuracy) + "," + num(r.adversarial_accuracy) + "," + std::to_string(r.n) +
          "," + std::to_string(r.seed) + "," + r.config_hash + "\n";
  }
  std::string t2 = "dataset,attack,detector,protocol,f1,recall,precision,accuracy,n,seed,config_hash\n";
  for (const auto& r : rows.table2) {
    t2 += field(r.dataset) + "," + field(r.attack) + "," + field(r.detector) + "," +
          field(r.protocol) + "," + num(r.f1) + "," + num(r.recall) + "," + num(r.precision) +
          "," + num(r.accuracy) + "," + std::to_string(r.n) + "," + std::to_string(r.seed) +
          "," + r.config_hash + "\n";
  }
  std::string ab = "mode,setting,attack,metric,value,seed,sub_seed,config_hash\n";
  for (const auto& r : rows.ablation) {
    ab += field(r.mode) + "," + field(r.setting) + "," + field(r.attack) + "," +
          field(r.metric) + "," + num(r.value) + "," + std::to_string(r.seed) + "," +
          std::to_string(r.sub_seed) + "," + r.config_hash + "\n";
  }
  write_file(files.table1_csv, t1);
  write_file(files.table2_csv, t2);
  write_file(files.ablation_csv, ab);

  // Mean and sample sd over seeds for each row key.
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> s1;
  for (const auto& r : rows.table1) {
    auto& acc = s1[{r.victim, r.defense, r.attack}];
    acc.first.push_back(r.clean_accuracy);
    acc.second.push_back(r.adversarial_accuracy);
  }
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> s2;
  for (const auto& r : rows.table2) {
    auto& acc = s2[{r.dataset, r.detector, r.protocol, r.attack}];
    acc.first.push_back(r.f1);
    acc.second.push_back(r.recall);
  }
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>> sa;
  for (const auto& r : rows.ablation) sa[{r.mode, r.setting, r.attack, r.metric}].push_back(r.value);

  Json bundle;
  bundle["table1"] = Json::array();
  for (const auto& r : rows.table1) bundle["table1"].push_back(to_json(r));
  bundle["table2"] = Json::array();
  for (const auto& r : rows.table2) bundle["table2"].push_back(to_json(r));
  bundle["ablation"] = Json::array();
  for (const auto& r : rows.ablation) bundle["ablation"].push_back(to_json(r));
  auto& summary = bundle["summary"];
  summary["table1"] = Json::array();
  for (const auto& [k, v] : s1) {
    summary["table1"].push_back({{"victim", std::get<0>(k)}, {"defense", std::get<1>(k)},
                                 {"attack", std::get<2>(k)}, {"clean_accuracy", stats_json(v.first)},
                                 {"adversarial_accuracy", stats_json(v.second)}});
  }
  summary["table2"] = Json::array();
  for (const auto& [k, v] : s2) {
    summary["table2"].push_back({{"dataset", std::get<0>(k)}, {"detector", std::get<1>(k)},
                                 {"protocol", std::get<2>(k)}, {"attack", std::get<3>(k)},
                                 {"f1", stats_json(v.first)}, {"recall", stats_json(v.second)}});
  }
  summary["ablation"] = Json::array();
  for (const auto& [k, v] : sa) {
    summary["ablation"].push_back({{"mode", std::get<0>(k)}, {"setting", std::get<1>(k)},
                                   {"attack", std::get<2>(k)}, {"metric", std::get<3>(k)},
                                   {"value", stats_json(v)}});
  }
  auto sorted_configs = configs;
  std::sort(sorted_configs.begin(), sorted_configs.end());
  bundle["configs"] = Json::object();
  for (const auto& [hash, text] : sorted_configs) bundle["configs"][hash] = text;
  write_file(files.bundle_json, bundle.dump(2) + "\n");
  return files;
}

}  // namespace textshield::harness
