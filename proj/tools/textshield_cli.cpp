// textshield: experiment driver.
//
//   textshield synth --out data/synth
//   textshield run-all --config exp.cfg --seed 3
//
// Exit codes: 0 ok, 2 config error, 3 missing artifact, 1 anything else.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textshield/errors.hpp"
#include "textshield/harness/config.hpp"
#include "textshield/harness/pipeline.hpp"
#include "textshield/harness/synth.hpp"

namespace ts = textshield;
namespace h = textshield::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;  // key=value overrides
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config file");
  app->add_option("--seed", c.seed, "master seed (overrides the config)");
  app->add_option("--out", c.out, "output directory (overrides the config)");
  app->add_option("--set", c.sets, "override one key, e.g. --set corrector.beta=0.3");
  app->add_flag("-q,--quiet", c.quiet, "no progress messages");
}

h::ExperimentConfig resolve_config(const Common& c) {
  h::ExperimentConfig cfg = c.config.empty() ? h::ExperimentConfig{} : h::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ts::ConfigError("--set expects key=value, got '" + s + "'");
    h::set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.quiet) h::set_log_sink({});
  return cfg;
}

int report_error(const std::string& kind, const std::exception& e) {
  std::cerr << "error: " << kind << ": " << e.what() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TextShield: saliency-based detection and correction of adversarial text"};
  app.require_subcommand(1);
  Common common;

  h::SynthConfig synth;
  std::string synth_out = "data/synth";
  auto* s = app.add_subcommand("synth", "write the synthetic desk-scale corpus");
  s->add_option("--out", synth_out, "directory for train/test/lexicon/embeddings");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--train", synth.n_train, "training sentences");
  s->add_option("--test", synth.n_test, "test sentences");
  s->add_option("--noise", synth.noise_prob, "chance of one rare opposite-class word");

  auto* prepare = app.add_subcommand("prepare", "split train/dev, build the vocabulary");
  auto* victim = app.add_subcommand("train-victim", "train the victim classifier");
  auto* gen = app.add_subcommand("gen-adv", "generate adversarial corpora");
  auto* det = app.add_subcommand("train-detector", "build detection data and train the detector");
  auto* evd = app.add_subcommand("eval-detection", "detection F1/recall per attack");
  auto* evf = app.add_subcommand("eval-defense", "clean and adversarial accuracy per defense");
  std::string mode;
  auto* abl = app.add_subcommand("ablate", "beta_sweep, k_sweep or drop_subdetector");
  abl->add_option("mode", mode, "ablation")->required();
  auto* rep = app.add_subcommand("report", "CSV tables and JSON bundle from metric rows");
  bool ablations = false;
  auto* all = app.add_subcommand("run-all", "prepare through report");
  all->add_flag("--ablations", ablations, "also run the three ablations");
  auto* keys = app.add_subcommand("config-keys", "print every config key with its default");
  for (auto* sub : {prepare, victim, gen, det, evd, evf, abl, rep, all, keys}) add_common(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) {
      h::write_synthetic(h::make_synthetic(synth), synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }
    const auto cfg = resolve_config(common);
    if (keys->parsed()) {
      for (const auto& k : h::config_keys()) {
        std::cout << k.name << " = " << h::get_key(cfg, k.name) << "    # " << k.doc << "\n";
      }
    } else if (prepare->parsed()) {
      h::cmd_prepare(cfg);
    } else if (victim->parsed()) {
      h::cmd_train_victim(cfg);
    } else if (gen->parsed()) {
      h::cmd_gen_adv(cfg);
    } else if (det->parsed()) {
      h::cmd_train_detector(cfg);
    } else if (evd->parsed()) {
      h::cmd_eval_detection(cfg);
    } else if (evf->parsed()) {
      h::cmd_eval_defense(cfg);
    } else if (abl->parsed()) {
      h::cmd_ablate(cfg, h::parse_ablation(mode));
    } else if (rep->parsed()) {
      const auto f = h::cmd_report(cfg);
      std::cout << f.table1_csv << "\n" << f.table2_csv << "\n" << f.ablation_csv << "\n"
                << f.bundle_json << "\n";
    } else if (all->parsed()) {
      const auto f = h::run_all(cfg, ablations);
      std::cout << f.bundle_json << "\n";
    }
    return 0;
  } catch (const ts::ConfigError& e) {
    report_error("config", e);
    return 2;
  } catch (const ts::MissingArtifactError& e) {
    report_error("missing artifact", e);
    return 3;
  } catch (const std::exception& e) {
    return report_error("failed", e);
  }
}
