// odn: command-line driver for open-set sessions and experiments.
//
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "odn/odn.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raised for runtime failures; carries the stage that failed.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  bool quiet = false;
};

/// Flag values, in command-line order, that override config-file keys.
using Overrides = std::vector<std::pair<std::string, std::string>>;

void bind_option(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&ov, key](const std::string& v) { ov.emplace_back(key, v); }, help);
}

void bind_switch(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key,
                 const std::string& value, const std::string& help) {
  cmd->add_flag_callback(flag, [&ov, key, value]() { ov.emplace_back(key, value); }, help);
}

void add_data_flags(CLI::App* cmd, Overrides& ov) {
  bind_option(cmd, ov, "--data", "data", "feature CSV (default: synthetic blobs)");
  bind_option(cmd, ov, "--classes", "synth_classes", "synthetic class count");
  bind_option(cmd, ov, "--per-class", "synth_per_class", "synthetic samples per class");
  bind_option(cmd, ov, "--dim", "synth_dim", "synthetic feature dimension");
  bind_option(cmd, ov, "--spread", "synth_spread", "synthetic cluster standard deviation");
  bind_option(cmd, ov, "--separation", "synth_separation", "synthetic cluster center distance from origin");
}

void add_train_flags(CLI::App* cmd, Overrides& ov) {
  bind_option(cmd, ov, "--epochs", "epochs", "SGD epochs");
  bind_option(cmd, ov, "--lr", "learning_rate", "learning rate");
  bind_option(cmd, ov, "--batch-size", "batch_size", "mini-batch size");
  bind_option(cmd, ov, "--l2", "l2", "L2 weight penalty");
}

void add_threshold_flags(CLI::App* cmd, Overrides& ov) {
  bind_option(cmd, ov, "--epsilon", "epsilon", "reject threshold scale, in (0, 1]");
  bind_option(cmd, ov, "--rho", "rho", "distance-reject threshold scale");
  bind_switch(cmd, ov, "--softmax-confidence", "softmax_confidence", "true", "threshold softmax outputs instead of activations");
}

void add_session_flags(CLI::App* cmd, Overrides& ov) {
  add_data_flags(cmd, ov);
  add_train_flags(cmd, ov);
  add_threshold_flags(cmd, ov);
  bind_option(cmd, ov, "--known", "n_known", "number of known categories");
  bind_option(cmd, ov, "--n-unknown", "n_unknown", "cap on unknown categories (default: all)");
  bind_option(cmd, ov, "--train-frac", "train_frac", "per-class training fraction");
  bind_option(cmd, ov, "--alpha", "alpha", "weight of the all-column mean");
  bind_option(cmd, ov, "--beta", "beta", "weight of the top-M column mean");
  bind_option(cmd, ov, "--m", "emphasis_m", "columns in the emphasis set");
  bind_option(cmd, ov, "--init", "init", "new-column initialization: mean | stochastic");
  bind_option(cmd, ov, "--budget", "teacher_budget", "teacher labels per category");
  bind_option(cmd, ov, "--passes", "passes", "detection passes per sweep");
  bind_option(cmd, ov, "--max-iterations", "max_iterations", "incorporation iteration cap");
  bind_option(cmd, ov, "--patience", "patience", "idle sweeps before declaring a stall");
  bind_switch(cmd, ov, "--no-allometry", "allometry", "false", "fine-tune all columns at the full rate");
  bind_switch(cmd, ov, "--no-emphasis", "emphasis", "false", "initialize new columns with the plain column mean");
  cmd->add_option_function<std::string>(
      "--set",
      [&ov](const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value");
        ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      },
      "override any config key (key=value)");
}

odn::SessionConfig resolve(const Globals& g, const Overrides& ov) {
  odn::SessionConfig cfg;
  if (!g.config_path.empty()) cfg = odn::load_config(g.config_path);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  for (const auto& [key, value] : ov) cfg.set(key, value);
  if (!g.out.empty()) cfg.out = g.out;
  if (!g.format.empty()) cfg.format = g.format;
  cfg.validate();
  return cfg;
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const odn::Error& e) {
    if (e.kind() == odn::ErrorKind::config) throw;
    throw StageError(name, e.what());
  }
}

std::string with_ext(const fs::path& dir, const std::string& stem, odn::OutputFormat fmt) {
  return (dir / (stem + (fmt == odn::OutputFormat::csv ? ".csv" : ".json"))).string();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StageError("output", "cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw StageError("output", "cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoul(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw odn::Error(odn::ErrorKind::config, "expected a comma-separated list of counts, got '" + text + "'");
    }
  }
  return out;
}

odn::OpenSplit build_split(const odn::SessionConfig& cfg) {
  auto ds = stage("data", [&] { return odn::load_session_data(cfg); });
  return stage("split", [&] { return odn::build_open_split(ds, cfg); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set recognition sessions: detect unknowns, label, open the classifier, fine-tune."};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "key=value session config file");
  app.add_option("--seed", g.seed, "seed for every seeded stage");
  app.add_option("--out", g.out, "output file or directory (per command)");
  app.add_option("--format", g.format, "csv | json");
  app.add_flag("--quiet", g.quiet, "no summary on stdout");

  Overrides ov;

  auto* synth = app.add_subcommand("synth", "write a synthetic Gaussian-blob dataset");
  add_data_flags(synth, ov);

  auto* split = app.add_subcommand("split", "write train / known_test / unknown_pool CSVs");
  add_data_flags(split, ov);
  bind_option(split, ov, "--known", "n_known", "number of known categories");
  bind_option(split, ov, "--n-unknown", "n_unknown", "cap on unknown categories (default: all)");
  bind_option(split, ov, "--train-frac", "train_frac", "per-class training fraction");

  std::string train_data;
  auto* train = app.add_subcommand("train", "train the initial classifier and write a checkpoint");
  train->add_option("--train", train_data, "training CSV with labels 1..N")->required();
  add_train_flags(train, ov);

  std::string model_path, calib_data;
  auto* calib = app.add_subcommand("calibrate", "compute triplet thresholds for a checkpoint");
  calib->add_option("--model", model_path, "checkpoint")->required();
  calib->add_option("--train", calib_data, "calibration CSV with labels 1..K")->required();
  add_threshold_flags(calib, ov);

  auto* run = app.add_subcommand("run", "run a full open-world session");
  add_session_flags(run, ov);

  std::string eval_model, eval_thresholds, eval_test, eval_unknown;
  bool eval_closed = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on test data");
  eval->add_option("--model", eval_model, "checkpoint")->required();
  eval->add_option("--thresholds", eval_thresholds, "thresholds JSON (open evaluation)");
  eval->add_option("--test", eval_test, "known-category test CSV")->required();
  eval->add_option("--unknown-test", eval_unknown, "unknown-category test CSV (open evaluation)");
  eval->add_flag("--closed", eval_closed, "plain argmax accuracy, no thresholds");

  std::string sweep_counts = "1,2,5,10";
  auto* sweep = app.add_subcommand("sweep", "accuracy against the number of unknown categories");
  add_session_flags(sweep, ov);
  sweep->add_option("--unknowns", sweep_counts, "comma-separated unknown-category counts");

  std::size_t n_seeds = 5;
  auto* compare = app.add_subcommand("compare", "mean vs random initialization of new columns");
  add_session_flags(compare, ov);
  compare->add_option("--seeds", n_seeds, "number of seeds");

  auto* ablate = app.add_subcommand("ablate", "emphasis / allometry ablation");
  add_session_flags(ablate, ov);
  ablate->add_option("--seeds", n_seeds, "number of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const odn::SessionConfig cfg = resolve(g, ov);
    const auto fmt = odn::parse_format(cfg.format);
    const auto echo = cfg.to_json();
    auto say = [&](const std::string& msg) {
      if (!g.quiet) std::cout << msg << '\n';
    };

    if (*synth) {
      if (g.out.empty()) throw odn::Error(odn::ErrorKind::config, "synth requires --out FILE");
      auto ds = stage("synth", [&] { return odn::synth_blobs(cfg.blob_params()); });
      stage("output", [&] { odn::save_csv(ds, g.out); return 0; });
      say("wrote " + std::to_string(ds.size()) + " samples to " + g.out);
    } else if (*split) {
      const fs::path dir = cfg.out;
      ensure_dir(dir);
      auto s = build_split(cfg);
      stage("output", [&] {
        odn::save_csv(s.train, (dir / "train.csv").string());
        odn::save_csv(s.known_test, (dir / "known_test.csv").string());
        odn::save_csv(s.unknown_pool, (dir / "unknown_pool.csv").string());
        return 0;
      });
      nlohmann::ordered_json j;
      j["config"] = echo;
      j["known_original"] = s.known_original;
      j["unknown_labels"] = s.unknown_labels;
      j["train"] = s.train.size();
      j["known_test"] = s.known_test.size();
      j["unknown_pool"] = s.unknown_pool.size();
      write_json(j, (dir / "split.json").string());
      say("split written to " + dir.string());
    } else if (*train) {
      const std::string out = g.out.empty() ? "model.ckpt" : g.out;
      auto ds = stage("data", [&] { return odn::load_csv(train_data); });
      auto state = stage("train", [&] { return odn::train_initial(ds, cfg.train_config()); });
      stage("output", [&] { odn::save_checkpoint(state, out); return 0; });
      auto closed = odn::evaluate_closed(state, ds);
      say("trained " + std::to_string(state.n_categories()) + " categories, train accuracy " +
          odn::format_double(closed.overall_accuracy) + ", checkpoint " + out);
    } else if (*calib) {
      const std::string out = g.out.empty() ? "thresholds.json" : g.out;
      auto state = stage("model", [&] { return odn::load_checkpoint(model_path); });
      auto ds = stage("data", [&] { return odn::load_csv(calib_data); });
      auto t = stage("calibrate", [&] { return odn::calibrate(state, ds, cfg.epsilon, cfg.rho, cfg.confidence_mode()); });
      stage("output", [&] { odn::save_thresholds(t, out); return 0; });
      say("thresholds for " + std::to_string(t.size()) + " categories written to " + out);
    } else if (*run) {
      const fs::path dir = cfg.out;
      ensure_dir(dir);
      auto s = build_split(cfg);
      auto log = stage("session", [&] { return odn::run_open_world(s, cfg); });
      write_json(odn::to_json(log), (dir / "session.json").string());
      stage("output", [&] {
        odn::emit_table(odn::metrics_table(log.final_report()), fmt, with_ext(dir, "metrics", fmt), &echo);
        odn::emit_table(odn::session_table(log), fmt, with_ext(dir, "iterations", fmt), &echo);
        odn::save_checkpoint(log.final_state, (dir / "model.ckpt").string());
        odn::save_thresholds(log.final_thresholds, (dir / "thresholds.json").string());
        return 0;
      });
      const auto& fin = log.final_report();
      say("incorporated " + std::to_string(log.incorporated.size()) + "/" + std::to_string(log.unknown_categories) +
          " unknown categories (" + std::string(odn::to_string(log.stop_reason)) + "), overall " +
          odn::format_double(fin.overall_accuracy) + ", known " + odn::format_double(fin.known_accuracy) +
          ", unknown " + odn::format_double(fin.unknown_accuracy) + ", labels/category " +
          odn::format_double(log.average_labels_per_category));
    } else if (*eval) {
      auto state = stage("model", [&] { return odn::load_checkpoint(eval_model); });
      auto test = stage("data", [&] { return odn::load_csv(eval_test); });
      odn::MetricsReport report;
      if (eval_closed) {
        report = stage("eval", [&] { return odn::evaluate_closed(state, test); });
      } else {
        if (eval_thresholds.empty()) throw odn::Error(odn::ErrorKind::config, "open evaluation needs --thresholds (or --closed)");
        auto t = stage("thresholds", [&] { return odn::load_thresholds(eval_thresholds); });
        odn::Dataset unknown(test.dim());
        if (!eval_unknown.empty()) {
          // the unknown CSV numbers its rows from 0 as well; shift ids past the known set
          auto raw = stage("data", [&] { return odn::load_csv(eval_unknown); });
          for (auto s : raw) {
            s.id += test.size();
            unknown.add(std::move(s));
          }
        }
        report = stage("eval", [&] { return odn::evaluate_open(state, t, test, unknown, {}); });
      }
      if (g.out.empty()) {
        odn::write_table(std::cout, odn::metrics_table(report), fmt, &echo);
      } else {
        stage("output", [&] { odn::emit_table(odn::metrics_table(report), fmt, g.out, &echo); return 0; });
      }
    } else if (*sweep) {
      const fs::path dir = cfg.out;
      ensure_dir(dir);
      const auto counts = parse_count_list(sweep_counts);
      auto ds = stage("data", [&] { return odn::load_session_data(cfg); });
      auto rows = stage("sweep", [&] { return odn::openness_sweep(ds, cfg.n_known, counts, cfg); });
      stage("output", [&] { odn::emit_table(odn::sweep_table(rows), fmt, with_ext(dir, "sweep", fmt), &echo); return 0; });
      say("sweep: " + std::to_string(rows.size()) + " rows in " + with_ext(dir, "sweep", fmt));
    } else if (*compare || *ablate) {
      const fs::path dir = cfg.out;
      ensure_dir(dir);
      auto s = build_split(cfg);
      const auto seeds = odn::seed_range(cfg.train_seed, n_seeds);
      std::vector<odn::ArmResult> arms;
      std::string stem;
      if (*compare) {
        auto c = stage("compare", [&] { return odn::compare_init_strategies(s, cfg, seeds); });
        arms = {std::move(c.mean_init), std::move(c.stochastic_init)};
        stem = "compare";
      } else {
        arms = stage("ablate", [&] { return odn::ablation_table(s, cfg, seeds); });
        stem = "ablation";
      }
      stage("output", [&] { odn::emit_table(odn::arms_table(arms), fmt, with_ext(dir, stem, fmt), &echo); return 0; });
      for (const auto& a : arms) say(a.arm + ": final accuracy " + odn::format_double(a.final_accuracy));
    }
    return 0;
  } catch (const odn::Error& e) {
    std::cerr << "odn: " << e.what() << '\n';
    return e.kind() == odn::ErrorKind::config ? kExitUsage : kExitRuntime;
  } catch (const StageError& e) {
    std::cerr << "odn: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "odn: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "odn: " << e.what() << '\n';
    return kExitRuntime;
  }
}
