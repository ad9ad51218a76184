#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "odn/classifier.hpp"
#include "odn/common.hpp"
#include "odn/dataset.hpp"
#include "odn/thresholds.hpp"

namespace odn {

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const noexcept { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  bool operator==(const Tally&) const = default;
};

struct MetricsReport {
  double overall_accuracy = 0.0;
  double known_accuracy = 0.0;
  double unknown_accuracy = 0.0;
  Tally known;
  Tally unknown;
  /// keyed by model label (1..K)
  std::map<CategoryId, Tally> per_category;
  /// model categories with no test samples
  std::vector<CategoryId> omitted_categories;
  std::size_t n_known_at_eval = 0;
  std::size_t openness_unknown_count = 0;
  /// unknown-test categories not yet incorporated (always scored wrong)
  std::size_t pending_unknown_categories = 0;

  Tally overall() const { return {known.correct + unknown.correct, known.total + unknown.total}; }
  bool operator==(const MetricsReport&) const = default;
};

namespace detail {
inline void finish(MetricsReport& r) {
  r.known_accuracy = r.known.accuracy();
  r.unknown_accuracy = r.unknown.accuracy();
  r.overall_accuracy = r.overall().accuracy();
}

inline void require_disjoint(const Dataset& a, const Dataset& b, const char* what) {
  for (const auto& s : a) {
    if (b.contains_id(s.id)) {
      throw Error(ErrorKind::protocol, std::string(what) + ": sample " + std::to_string(s.id) + " appears in both sets");
    }
  }
}
}  // namespace detail

/// Aborts with a protocol error if any id in `test` was used for training
/// or calibration.
inline void check_no_leakage(const Dataset& test, const std::set<SampleId>& used_ids) {
  for (const auto& s : test) {
    if (used_ids.count(s.id)) {
      throw Error(ErrorKind::protocol, "test sample " + std::to_string(s.id) + " was used for training or calibration");
    }
  }
}

/// Open-set scoring. Known-test samples are correct iff detected as their own
/// label. Unknown-test samples are correct only once their category has been
/// incorporated (`incorporated` maps source label -> model label) and the
/// detector accepts them as that label; until then they count as errors even
/// when rejected.
inline MetricsReport evaluate_open(const ClassifierState& state, const TripletThresholds& thresholds,
                                   const Dataset& known_test, const Dataset& unknown_test,
                                   const std::map<CategoryId, CategoryId>& incorporated) {
  detail::require_disjoint(known_test, unknown_test, "evaluate_open");
  MetricsReport r;
  r.n_known_at_eval = state.n_categories();
  for (const auto& s : known_test) {
    auto out = detect_sample(state, thresholds, s.features);
    const bool ok = out.known && out.label == s.true_label;
    auto& cat = r.per_category[s.true_label];
    ++cat.total;
    ++r.known.total;
    if (ok) {
      ++cat.correct;
      ++r.known.correct;
    }
  }
  std::set<CategoryId> unknown_truths, pending;
  for (const auto& s : unknown_test) {
    unknown_truths.insert(s.true_label);
    ++r.unknown.total;
    auto it = incorporated.find(s.true_label);
    if (it == incorporated.end()) {
      pending.insert(s.true_label);
      continue;
    }
    auto out = detect_sample(state, thresholds, s.features);
    auto& cat = r.per_category[it->second];
    ++cat.total;
    if (out.known && out.label == it->second) {
      ++cat.correct;
      ++r.unknown.correct;
    }
  }
  r.openness_unknown_count = unknown_truths.size();
  r.pending_unknown_categories = pending.size();
  for (CategoryId c = 1; c <= state.n_categories(); ++c) {
    if (!r.per_category.count(c)) r.omitted_categories.push_back(c);
  }
  detail::finish(r);
  return r;
}

/// Closed-set argmax accuracy, no thresholds.
inline MetricsReport evaluate_closed(const ClassifierState& state, const Dataset& test) {
  MetricsReport r;
  r.n_known_at_eval = state.n_categories();
  for (const auto& s : test) {
    if (s.true_label < 1 || s.true_label > state.n_categories()) {
      throw Error(ErrorKind::protocol, "closed evaluation got label " + std::to_string(s.true_label) +
                                           " outside the model's 1.." + std::to_string(state.n_categories()));
    }
    auto& cat = r.per_category[s.true_label];
    ++cat.total;
    ++r.known.total;
    if (predict(state, s.features) == s.true_label) {
      ++cat.correct;
      ++r.known.correct;
    }
  }
  for (CategoryId c = 1; c <= state.n_categories(); ++c) {
    if (!r.per_category.count(c)) r.omitted_categories.push_back(c);
  }
  detail::finish(r);
  return r;
}

// ---------------------------------------------------------------------------
// Tables and emission

using Cell = std::variant<std::string, std::int64_t, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

enum class OutputFormat { csv, json };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw Error(ErrorKind::config, "format must be csv or json, got '" + s + "'");
}

inline std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return format_double(std::get<double>(c));
}

inline nlohmann::ordered_json cell_json(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<double>(c);
}

/// Rows `scope,category,correct,total,accuracy`; scope is overall, known,
/// unknown or category (category rows ascending by label).
inline Table metrics_table(const MetricsReport& r) {
  Table t{{"scope", "category", "correct", "total", "accuracy"}, {}};
  auto row = [&](std::string scope, std::string cat, const Tally& tally, double acc) {
    t.rows.push_back({std::move(scope), std::move(cat), static_cast<std::int64_t>(tally.correct),
                      static_cast<std::int64_t>(tally.total), acc});
  };
  row("overall", "", r.overall(), r.overall_accuracy);
  row("known", "", r.known, r.known_accuracy);
  row("unknown", "", r.unknown, r.unknown_accuracy);
  for (const auto& [label, tally] : r.per_category) row("category", std::to_string(label), tally, tally.accuracy());
  return t;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["overall_accuracy"] = r.overall_accuracy;
  j["known_accuracy"] = r.known_accuracy;
  j["unknown_accuracy"] = r.unknown_accuracy;
  j["known_correct"] = r.known.correct;
  j["known_total"] = r.known.total;
  j["unknown_correct"] = r.unknown.correct;
  j["unknown_total"] = r.unknown.total;
  j["n_known_at_eval"] = r.n_known_at_eval;
  j["openness_unknown_count"] = r.openness_unknown_count;
  j["pending_unknown_categories"] = r.pending_unknown_categories;
  auto cats = nlohmann::ordered_json::array();
  for (const auto& [label, tally] : r.per_category) {
    cats.push_back({{"category", label}, {"correct", tally.correct}, {"total", tally.total}, {"accuracy", tally.accuracy()}});
  }
  j["per_category"] = std::move(cats);
  j["omitted_categories"] = r.omitted_categories;
  return j;
}

/// `preamble`, when given, is embedded: as `# key=value` comment lines ahead of
/// the CSV header, or as a "config" member wrapping the JSON rows.
inline void write_table(std::ostream& out, const Table& t, OutputFormat format,
                        const nlohmann::ordered_json* preamble = nullptr) {
  if (format == OutputFormat::csv) {
    if (preamble) {
      for (const auto& [key, value] : preamble->items()) {
        out << "# " << key << '=' << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
      }
    }
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell_text(row[c]);
      out << '\n';
    }
    return;
  }
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json obj;
    for (std::size_t c = 0; c < row.size(); ++c) obj[t.columns[c]] = cell_json(row[c]);
    arr.push_back(std::move(obj));
  }
  if (preamble) {
    nlohmann::ordered_json doc;
    doc["config"] = *preamble;
    doc["rows"] = std::move(arr);
    out << doc.dump(2) << '\n';
  } else {
    out << arr.dump(2) << '\n';
  }
}

inline void emit_table(const Table& t, OutputFormat format, const std::string& path,
                       const nlohmann::ordered_json* preamble = nullptr) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::emit, "cannot write " + path);
  write_table(out, t, format, preamble);
  if (!out) throw Error(ErrorKind::emit, "write failed for " + path);
}

inline void emit_report(const MetricsReport& r, OutputFormat format, const std::string& path) {
  emit_table(metrics_table(r), format, path);
}

/// Reads a CSV written by write_table back as text cells; `#` lines are skipped.
inline Table read_table_csv(std::istream& in) {
  Table t;
  std::string line;
  do {
    if (!std::getline(in, line)) throw Error(ErrorKind::load, "table csv has no header");
  } while (!line.empty() && line.front() == '#');
  for (auto c : detail::split_commas(line)) t.columns.emplace_back(c);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<Cell> row;
    for (auto c : detail::split_commas(line)) row.emplace_back(std::string(c));
    if (row.size() != t.columns.size()) throw Error(ErrorKind::load, "table csv row width mismatch");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace odn
