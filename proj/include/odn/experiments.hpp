#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "odn/config.hpp"
#include "odn/dataset.hpp"
#include "odn/metrics.hpp"
#include "odn/openworld.hpp"

namespace odn {

/// Builds the dataset a session config points at: the CSV file if set,
/// synthetic blobs otherwise.
inline Dataset load_session_data(const SessionConfig& cfg) {
  return cfg.data.empty() ? synth_blobs(cfg.blob_params()) : load_csv(cfg.data);
}

/// Keeps only the first `n` unknown categories (in selection order).
inline OpenSplit restrict_unknowns(const OpenSplit& split, std::size_t n) {
  if (n > split.unknown_labels.size()) {
    throw Error(ErrorKind::config, "split has only " + std::to_string(split.unknown_labels.size()) + " unknown categories");
  }
  OpenSplit out = split;
  out.unknown_labels.resize(n);
  std::set<CategoryId> keep(out.unknown_labels.begin(), out.unknown_labels.end());
  Dataset pool(split.unknown_pool.dim());
  for (const auto& s : split.unknown_pool) {
    if (keep.count(s.true_label)) pool.add(s);
  }
  out.unknown_pool = std::move(pool);
  return out;
}

/// The split a session config describes, including the n_unknown cap.
inline OpenSplit build_open_split(const Dataset& ds, const SessionConfig& cfg) {
  auto split = make_open_split(ds, cfg.n_known, cfg.train_frac, cfg.split_seed);
  return cfg.n_unknown ? restrict_unknowns(split, *cfg.n_unknown) : split;
}

// ---------------------------------------------------------------------------

struct SweepRow {
  std::size_t unknown_count = 0;
  MetricsReport report;  // final snapshot of the session
};

/// One full session per unknown-category count with a fixed known set. The
/// unknown sets are nested: count k uses the first k unknowns of the split.
inline std::vector<SweepRow> openness_sweep(const Dataset& ds, std::size_t n_known, std::vector<std::size_t> unknown_counts,
                                            const SessionConfig& cfg) {
  std::sort(unknown_counts.begin(), unknown_counts.end());
  if (std::adjacent_find(unknown_counts.begin(), unknown_counts.end()) != unknown_counts.end()) {
    throw Error(ErrorKind::config, "unknown counts must be distinct");
  }
  const std::size_t most = unknown_counts.empty() ? 0 : unknown_counts.back();
  if (ds.labels().size() < n_known + std::max<std::size_t>(most, 1)) {
    throw Error(ErrorKind::config, "dataset has " + std::to_string(ds.labels().size()) + " categories, sweep needs " +
                                       std::to_string(n_known + most));
  }
  const OpenSplit full = make_open_split(ds, n_known, cfg.train_frac, cfg.split_seed);
  std::vector<SweepRow> rows;
  for (std::size_t count : unknown_counts) {
    auto log = run_open_world(restrict_unknowns(full, count), cfg);
    rows.push_back({count, log.final_report()});
  }
  return rows;
}

inline Table sweep_table(const std::vector<SweepRow>& rows) {
  Table t{{"unknown_count", "overall", "known", "unknown"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({static_cast<std::int64_t>(r.unknown_count), r.report.overall_accuracy, r.report.known_accuracy,
                      r.report.unknown_accuracy});
  }
  return t;
}

// ---------------------------------------------------------------------------

struct ArmResult {
  std::string arm;
  /// mean overall accuracy per incorporation iteration (index 0 = iteration 1),
  /// averaged over the seeds whose session reached that iteration
  std::vector<double> per_iteration;
  std::vector<std::size_t> seeds_at_iteration;
  /// mean over seeds of each session's final overall accuracy
  double final_accuracy = 0.0;
  std::vector<SessionLog> logs;
};

struct ArmSpec {
  std::string name;
  SessionConfig config;
};

/// Runs every arm once per seed. The seed drives training, fine-tuning and
/// random initialization; the split is shared by all arms.
inline std::vector<ArmResult> run_arms(const OpenSplit& split, const std::vector<ArmSpec>& arms,
                                       const std::vector<std::uint64_t>& seeds) {
  std::vector<ArmResult> out;
  for (const auto& spec : arms) {
    ArmResult res;
    res.arm = spec.name;
    for (std::uint64_t seed : seeds) {
      SessionConfig cfg = spec.config;
      cfg.train_seed = seed;
      cfg.init_seed = seed;
      auto log = run_open_world(split, cfg);
      for (const auto& rec : log.iterations) {
        const std::size_t k = rec.iteration - 1;
        if (res.per_iteration.size() <= k) {
          res.per_iteration.resize(k + 1, 0.0);
          res.seeds_at_iteration.resize(k + 1, 0);
        }
        res.per_iteration[k] += rec.snapshot.overall_accuracy;
        ++res.seeds_at_iteration[k];
      }
      res.final_accuracy += log.final_report().overall_accuracy;
      res.logs.push_back(std::move(log));
    }
    for (std::size_t k = 0; k < res.per_iteration.size(); ++k) {
      res.per_iteration[k] /= static_cast<double>(res.seeds_at_iteration[k]);
    }
    if (!seeds.empty()) res.final_accuracy /= static_cast<double>(seeds.size());
    out.push_back(std::move(res));
  }
  return out;
}

/// Rows `iteration,arm,accuracy`, iteration-major.
inline Table arms_table(const std::vector<ArmResult>& arms) {
  Table t{{"iteration", "arm", "accuracy"}, {}};
  std::size_t longest = 0;
  for (const auto& a : arms) longest = std::max(longest, a.per_iteration.size());
  for (std::size_t k = 0; k < longest; ++k) {
    for (const auto& a : arms) {
      if (k < a.per_iteration.size()) t.rows.push_back({static_cast<std::int64_t>(k + 1), a.arm, a.per_iteration[k]});
    }
  }
  return t;
}

struct InitComparison {
  ArmResult mean_init;
  ArmResult stochastic_init;
};

/// Plain column-mean initialization against a norm-matched random column.
/// Everything but the new column's initial value is shared between arms.
inline InitComparison compare_init_strategies(const OpenSplit& split, const SessionConfig& cfg,
                                              const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2) throw Error(ErrorKind::config, "init comparison needs at least 2 seeds");
  SessionConfig mean_cfg = cfg;
  mean_cfg.init = InitStrategy::mean;
  mean_cfg.emphasis = false;
  SessionConfig random_cfg = mean_cfg;
  random_cfg.init = InitStrategy::stochastic;
  auto arms = run_arms(split, {{"mean", mean_cfg}, {"stochastic", random_cfg}}, seeds);
  return {std::move(arms[0]), std::move(arms[1])};
}

/// The four expansion variants; "both" is `cfg` itself.
inline std::vector<ArmSpec> ablation_arms(const SessionConfig& cfg) {
  SessionConfig base = cfg;
  base.init = InitStrategy::mean;
  auto with = [&](bool emphasis, bool allometry) {
    SessionConfig c = base;
    c.emphasis = emphasis;
    c.allometry = allometry;
    return c;
  };
  return {{"simple-mean", with(false, false)},
          {"emphasis-only", with(true, false)},
          {"allometry-only", with(false, true)},
          {"both", with(true, true)}};
}

inline std::vector<ArmResult> ablation_table(const OpenSplit& split, const SessionConfig& cfg,
                                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error(ErrorKind::config, "ablation needs at least one seed");
  return run_arms(split, ablation_arms(cfg), seeds);
}

/// Seeds base, base + 1, ..., base + n - 1.
inline std::vector<std::uint64_t> seed_range(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = base + i;
  return out;
}

}  // namespace odn
