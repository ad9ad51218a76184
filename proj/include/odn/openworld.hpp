#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "odn/classifier.hpp"
#include "odn/common.hpp"
#include "odn/config.hpp"
#include "odn/dataset.hpp"
#include "odn/metrics.hpp"
#include "odn/thresholds.hpp"

namespace odn {

// ---------------------------------------------------------------------------
// Detection over the unknown stream

struct PoolPartition {
  Dataset detected_unknown;
  std::vector<std::pair<SampleId, CategoryId>> accepted_known;
};

/// Runs the detector over `pool` in pool order. Each extra pass re-examines
/// the samples still accepted as known and moves any newly rejected ones to
/// the unknown side.
inline PoolPartition detect_unknown_pool(const ClassifierState& state, const TripletThresholds& thresholds,
                                         const Dataset& pool, std::size_t passes) {
  if (passes < 1) throw Error(ErrorKind::config, "passes must be >= 1");
  std::vector<DetectionOutcome> verdicts(pool.size());
  std::vector<std::size_t> residual;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    verdicts[i] = detect_sample(state, thresholds, pool[i].features);
    if (verdicts[i].known) residual.push_back(i);
  }
  for (std::size_t pass = 1; pass < passes && !residual.empty(); ++pass) {
    std::vector<std::size_t> still_known;
    for (std::size_t i : residual) {
      verdicts[i] = detect_sample(state, thresholds, pool[i].features);
      if (verdicts[i].known) still_known.push_back(i);
    }
    residual = std::move(still_known);
  }

  PoolPartition out{Dataset(pool.dim()), {}};
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (verdicts[i].known) out.accepted_known.emplace_back(pool[i].id, verdicts[i].label);
    else out.detected_unknown.add(pool[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Teacher

/// Simulated labeler. Knows the ground truth of every stream sample, charges
/// one label per sample it annotates, and remembers what it already labeled
/// so a sample is never charged twice.
class TeacherOracle {
 public:
  TeacherOracle() = default;
  explicit TeacherOracle(std::map<SampleId, CategoryId> truth) : truth_(std::move(truth)) {}

  static TeacherOracle from_dataset(const Dataset& ds) {
    std::map<SampleId, CategoryId> truth;
    for (const auto& s : ds) truth[s.id] = s.true_label;
    return TeacherOracle(std::move(truth));
  }

  CategoryId truth_of(SampleId id) const {
    auto it = truth_.find(id);
    if (it == truth_.end()) throw Error(ErrorKind::oracle, "no ground truth for sample " + std::to_string(id));
    return it->second;
  }

  /// Source labels the system already recognises; detections of these are
  /// false detections.
  void mark_known(CategoryId truth) { known_truths_.insert(truth); }
  bool is_known(CategoryId truth) const { return known_truths_.count(truth) != 0; }

  bool already_labeled(SampleId id) const { return labeled_.count(id) != 0; }

  void charge(SampleId id, CategoryId truth) {
    if (labeled_.insert(id).second) {
      ++labels_issued_;
      ++per_category_issued_[truth];
    }
  }

  std::size_t labels_issued() const noexcept { return labels_issued_; }
  std::size_t issued_for(CategoryId truth) const {
    auto it = per_category_issued_.find(truth);
    return it == per_category_issued_.end() ? 0 : it->second;
  }
  const std::map<CategoryId, std::size_t>& per_category_issued() const noexcept { return per_category_issued_; }

 private:
  std::map<SampleId, CategoryId> truth_;
  std::set<CategoryId> known_truths_;
  std::set<SampleId> labeled_;
  std::size_t labels_issued_ = 0;
  std::map<CategoryId, std::size_t> per_category_issued_;
};

struct TeacherResult {
  /// source label -> labeled samples (carrying the source label)
  std::map<CategoryId, Dataset> groups;
  /// detected samples whose truth is already a known category
  std::vector<SampleId> false_detections;
  std::size_t labels_used = 0;
};

/// Groups detections by ground truth in first-seen order. A category never
/// receives more than `budget_per_category` labels over the oracle's
/// lifetime; samples labeled in an earlier round are reused free of charge.
inline TeacherResult label_with_teacher(const Dataset& detected, TeacherOracle& oracle, std::size_t budget_per_category) {
  if (budget_per_category < 1) throw Error(ErrorKind::config, "teacher budget must be >= 1");
  TeacherResult out;
  const std::size_t before = oracle.labels_issued();
  for (const auto& s : detected) {
    const CategoryId truth = oracle.truth_of(s.id);
    if (oracle.is_known(truth)) {
      out.false_detections.push_back(s.id);
      continue;
    }
    if (!oracle.already_labeled(s.id)) {
      if (oracle.issued_for(truth) >= budget_per_category) continue;
      oracle.charge(s.id, truth);
    }
    auto [it, _] = out.groups.try_emplace(truth, Dataset(detected.dim()));
    FeatureSample labeled = s;
    labeled.true_label = truth;
    it->second.add(std::move(labeled));
  }
  out.labels_used = oracle.labels_issued() - before;
  return out;
}

/// Largest group first, ties toward the smallest source label.
inline std::optional<CategoryId> choose_next_category(const std::map<CategoryId, Dataset>& groups) {
  std::optional<CategoryId> best;
  std::size_t best_size = 0;
  for (const auto& [truth, samples] : groups) {
    if (samples.empty()) continue;
    if (!best || samples.size() > best_size) {
      best = truth;
      best_size = samples.size();
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Opening and fine-tuning

struct InitOptions {
  InitStrategy strategy = InitStrategy::mean;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t m = 5;
  std::uint64_t seed = 0;  // stochastic strategy only
};

inline std::vector<double> mean_activation(const ClassifierState& state, const Dataset& samples) {
  if (samples.empty()) throw Error(ErrorKind::logic, "mean activation of an empty sample set");
  std::vector<double> mean(state.n_categories(), 0.0);
  for (const auto& s : samples) {
    auto v = activations(state, s.features);
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
  }
  for (double& e : mean) e /= static_cast<double>(samples.size());
  return mean;
}

/// Seeded Gaussian direction rescaled to the norm of the plain column mean;
/// the bias is the mean bias.
inline NewColumn stochastic_column(const ClassifierState& state, std::uint64_t seed) {
  const std::vector<double> flat(state.n_categories(), 0.0);
  NewColumn reference = emphasis_init(state, flat, state.n_categories(), 1.0, 0.0);
  double ref_norm = 0.0;
  for (double w : reference.weights) ref_norm += w * w;
  ref_norm = std::sqrt(ref_norm);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  NewColumn out{std::vector<double>(state.dim()), reference.bias};
  double norm = 0.0;
  for (double& w : out.weights) {
    w = gauss(rng);
    norm += w * w;
  }
  norm = std::sqrt(norm);
  for (double& w : out.weights) w *= norm > 0 ? ref_norm / norm : 0.0;
  return out;
}

/// Appends a column for the new category; the new label is n_categories + 1.
inline ClassifierState incorporate_category(const ClassifierState& state, const Dataset& new_samples,
                                            const InitOptions& init) {
  if (new_samples.empty()) throw Error(ErrorKind::logic, "cannot incorporate a category without samples");
  const auto truths = new_samples.labels();
  if (truths.size() != 1) throw Error(ErrorKind::logic, "new samples must share one ground-truth label");

  NewColumn column;
  if (init.strategy == InitStrategy::stochastic) {
    column = stochastic_column(state, init.seed);
  } else {
    const auto mean = mean_activation(state, new_samples);
    column = emphasis_init(state, mean, std::min(init.m, state.n_categories()), init.alpha, init.beta);
  }
  return expand(state, column.weights, column.bias);
}

struct FinetuneResult {
  ClassifierState state;
  std::size_t subset_size = 0;  // known samples drawn for balance
  std::map<CategoryId, std::size_t> shortfalls;
};

/// Balanced fine-tune of a freshly expanded layer: every older category
/// contributes |new_samples| training samples, then SGD runs with the given
/// per-column factors. `new_samples` must already carry the new label.
inline FinetuneResult incremental_finetune(const ClassifierState& state, const Dataset& new_samples,
                                           const Dataset& train, const TrainConfig& cfg,
                                           const AllometryFactors& factors) {
  if (state.n_categories() != state.n_initial() + 1) {
    throw Error(ErrorKind::logic, "incremental_finetune expects a freshly expanded classifier");
  }
  if (new_samples.empty()) throw Error(ErrorKind::logic, "no samples for the new category");
  std::set<CategoryId> old_labels;
  for (CategoryId c = 1; c <= state.n_initial(); ++c) old_labels.insert(c);

  BalancedSubset subset;
  try {
    subset = balanced_subset(train, old_labels, new_samples.size(), derive_seed(cfg.seed, 0xba1));
  } catch (const Error& e) {
    throw Error(ErrorKind::split, std::string("fine-tune training data: ") + e.what());
  }
  FinetuneResult out;
  out.subset_size = subset.samples.size();
  out.shortfalls = subset.shortfalls;
  out.state = fit(state, Dataset::merge(subset.samples, new_samples), cfg, factors);
  return out;
}

inline FinetuneResult incremental_finetune(const ClassifierState& state, const Dataset& new_samples,
                                           const Dataset& train, const TrainConfig& cfg) {
  return incremental_finetune(state, new_samples, train, cfg,
                              allometry_factors(state.n_initial(), state.n_categories()));
}

// ---------------------------------------------------------------------------
// Session

struct IterationRecord {
  std::size_t iteration = 0;
  CategoryId added_truth = 0;
  CategoryId assigned_label = 0;
  std::size_t detected_unknown_count = 0;
  std::size_t false_detection_count = 0;
  std::size_t teacher_labels_used = 0;
  std::size_t new_samples = 0;
  std::vector<SampleId> new_sample_ids;
  std::size_t balanced_subset_size = 0;
  std::size_t idle_sweeps = 0;
  MetricsReport snapshot;
};

enum class StopReason { no_unknowns, exhausted, stalled, max_iterations };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::no_unknowns: return "no_unknowns";
    case StopReason::exhausted: return "exhausted";
    case StopReason::stalled: return "stalled";
    case StopReason::max_iterations: return "max_iterations";
  }
  return "?";
}

struct SessionLog {
  SessionConfig config;
  MetricsReport initial;
  std::vector<IterationRecord> iterations;
  StopReason stop_reason = StopReason::no_unknowns;
  std::size_t labels_issued = 0;
  double average_labels_per_category = 0.0;
  /// source label -> samples of that category in the unknown pool
  std::map<CategoryId, std::size_t> available_per_category;
  std::map<CategoryId, std::size_t> labels_per_category;
  /// source label -> model label
  std::map<CategoryId, CategoryId> incorporated;
  std::size_t unknown_categories = 0;
  ClassifierState final_state;
  TripletThresholds final_thresholds;

  const MetricsReport& final_report() const { return iterations.empty() ? initial : iterations.back().snapshot; }
};

/// The stream/held-out division of the unknown pool used by run_open_world.
inline std::pair<Dataset, Dataset> split_unknown_pool(const Dataset& pool, double frac, std::uint64_t seed) {
  if (pool.empty()) return {Dataset(pool.dim()), Dataset(pool.dim())};
  return per_class_split(pool, frac, derive_seed(seed, 2));
}

/// Train, calibrate, then incorporate one detected category per iteration
/// until the stream runs dry, the loop stalls, or max_iterations is reached.
inline SessionLog run_open_world(const OpenSplit& split, const SessionConfig& cfg) {
  cfg.validate();
  SessionLog log;
  log.config = cfg;

  const TrainConfig base_train = cfg.train_config();
  ClassifierState state = train_initial(split.train, base_train);
  TripletThresholds thresholds = calibrate(state, split.train, cfg.epsilon, cfg.rho, cfg.confidence_mode());

  auto [stream, unknown_test] = split_unknown_pool(split.unknown_pool, cfg.train_frac, split.seed);
  log.unknown_categories = split.unknown_pool.labels().size();
  for (const auto& [label, positions] : split.unknown_pool.index()) log.available_per_category[label] = positions.size();

  // ids that have touched training or calibration
  std::set<SampleId> used_ids;
  for (const auto& s : split.train) used_ids.insert(s.id);
  auto snapshot = [&](const std::map<CategoryId, CategoryId>& incorporated) {
    check_no_leakage(split.known_test, used_ids);
    check_no_leakage(unknown_test, used_ids);
    return evaluate_open(state, thresholds, split.known_test, unknown_test, incorporated);
  };

  log.initial = snapshot(log.incorporated);
  if (split.unknown_pool.empty()) {
    log.stop_reason = StopReason::no_unknowns;
    log.final_state = state;
    log.final_thresholds = thresholds;
    return log;
  }

  TeacherOracle oracle = TeacherOracle::from_dataset(stream);
  Dataset labeled_train = split.train;  // grows with every incorporated category
  log.stop_reason = StopReason::max_iterations;

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) try {
    std::optional<CategoryId> chosen;
    TeacherResult teacher;
    PoolPartition partition;
    std::size_t idle = 0;
    while (true) {
      partition = detect_unknown_pool(state, thresholds, stream, cfg.passes);
      teacher = label_with_teacher(partition.detected_unknown, oracle, cfg.teacher_budget);
      chosen = choose_next_category(teacher.groups);
      if (chosen) break;
      if (++idle >= cfg.patience) break;
    }
    if (!chosen) {
      const bool remaining = log.incorporated.size() < log.unknown_categories;
      log.stop_reason = remaining ? StopReason::stalled : StopReason::exhausted;
      break;
    }

    const auto new_label = static_cast<CategoryId>(state.n_categories() + 1);
    Dataset new_samples(stream.dim());
    for (auto s : teacher.groups.at(*chosen)) {
      s.true_label = new_label;
      new_samples.add(std::move(s));
    }

    InitOptions init{cfg.init, cfg.effective_alpha(), cfg.effective_beta(), cfg.emphasis_m,
                     derive_seed(cfg.init_seed, 3, it)};
    ClassifierState expanded = incorporate_category(state, new_samples, init);

    TrainConfig tune = base_train;
    tune.seed = derive_seed(cfg.train_seed, 4, it);
    const auto factors = cfg.allometry ? allometry_factors(expanded.n_initial(), expanded.n_categories())
                                       : uniform_factors(expanded.n_categories());
    auto tuned = incremental_finetune(expanded, new_samples, labeled_train, tune, factors);
    state = std::move(tuned.state);

    labeled_train = Dataset::merge(labeled_train, new_samples);
    for (const auto& s : new_samples) used_ids.insert(s.id);
    oracle.mark_known(*chosen);
    log.incorporated[*chosen] = new_label;

    thresholds = calibrate(state, labeled_train, cfg.epsilon, cfg.rho, cfg.confidence_mode());

    IterationRecord rec;
    rec.iteration = it;
    rec.added_truth = *chosen;
    rec.assigned_label = new_label;
    rec.detected_unknown_count = partition.detected_unknown.size();
    rec.false_detection_count = teacher.false_detections.size();
    rec.teacher_labels_used = teacher.labels_used;
    rec.new_samples = new_samples.size();
    for (const auto& s : new_samples) rec.new_sample_ids.push_back(s.id);
    rec.balanced_subset_size = tuned.subset_size;
    rec.idle_sweeps = idle;
    rec.snapshot = snapshot(log.incorporated);
    log.iterations.push_back(std::move(rec));
  } catch (const Error& e) {
    throw Error(e.kind(), "iteration " + std::to_string(it) + ": " + e.what());
  }

  log.labels_issued = oracle.labels_issued();
  log.labels_per_category = oracle.per_category_issued();
  log.average_labels_per_category =
      log.incorporated.empty() ? 0.0
                               : static_cast<double>(log.labels_issued) / static_cast<double>(log.incorporated.size());
  log.final_state = state;
  log.final_thresholds = thresholds;
  return log;
}

inline nlohmann::ordered_json to_json(const SessionLog& log) {
  nlohmann::ordered_json j;
  j["config"] = log.config.to_json();
  j["labeling_policy"] = "first-seen order, at most teacher_budget labels per category over the session, labeled "
                         "samples reused across rounds";
  j["initial"] = to_json(log.initial);
  auto iters = nlohmann::ordered_json::array();
  for (const auto& r : log.iterations) {
    nlohmann::ordered_json it;
    it["iteration"] = r.iteration;
    it["added_category"] = r.added_truth;
    it["assigned_label"] = r.assigned_label;
    it["detected_unknown_count"] = r.detected_unknown_count;
    it["false_detection_count"] = r.false_detection_count;
    it["teacher_labels_used"] = r.teacher_labels_used;
    it["new_samples"] = r.new_samples;
    it["new_sample_ids"] = r.new_sample_ids;
    it["balanced_subset_size"] = r.balanced_subset_size;
    it["idle_sweeps"] = r.idle_sweeps;
    it["snapshot"] = to_json(r.snapshot);
    iters.push_back(std::move(it));
  }
  j["iterations"] = std::move(iters);
  j["stop_reason"] = to_string(log.stop_reason);
  j["unknown_categories"] = log.unknown_categories;
  j["incorporated_categories"] = log.incorporated.size();
  j["labels_issued"] = log.labels_issued;
  j["average_labels_per_category"] = log.average_labels_per_category;
  auto labeling = nlohmann::ordered_json::array();
  for (const auto& [truth, available] : log.available_per_category) {
    nlohmann::ordered_json c;
    c["category"] = truth;
    c["available"] = available;
    auto it = log.labels_per_category.find(truth);
    c["labels"] = it == log.labels_per_category.end() ? 0 : it->second;
    auto inc = log.incorporated.find(truth);
    c["assigned_label"] = inc == log.incorporated.end() ? 0 : inc->second;
    labeling.push_back(std::move(c));
  }
  j["labeling"] = std::move(labeling);
  j["final"] = to_json(log.final_report());
  return j;
}

/// Per-iteration accuracy rows: iteration 0 is the initial model.
inline Table session_table(const SessionLog& log) {
  Table t{{"iteration", "overall", "known", "unknown"}, {}};
  t.rows.push_back({std::int64_t{0}, log.initial.overall_accuracy, log.initial.known_accuracy, log.initial.unknown_accuracy});
  for (const auto& r : log.iterations) {
    t.rows.push_back({static_cast<std::int64_t>(r.iteration), r.snapshot.overall_accuracy, r.snapshot.known_accuracy,
                      r.snapshot.unknown_accuracy});
  }
  return t;
}

}  // namespace odn
