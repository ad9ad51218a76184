#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "odn/common.hpp"

namespace odn {

struct FeatureSample {
  SampleId id = 0;
  CategoryId true_label = 0;
  std::vector<double> features;
};

/// Ordered collection of equal-length feature samples with a label index.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  const std::vector<FeatureSample>& samples() const noexcept { return samples_; }
  const FeatureSample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  /// label -> positions into samples(), in insertion order
  const std::map<CategoryId, std::vector<std::size_t>>& index() const noexcept { return index_; }

  std::vector<CategoryId> labels() const {
    std::vector<CategoryId> out;
    out.reserve(index_.size());
    for (const auto& [label, _] : index_) out.push_back(label);
    return out;
  }

  std::size_t count(CategoryId label) const {
    auto it = index_.find(label);
    return it == index_.end() ? 0 : it->second.size();
  }

  bool contains_id(SampleId id) const { return ids_.count(id) != 0; }

  void add(FeatureSample sample) {
    if (sample.features.size() != dim_) {
      throw Error(ErrorKind::shape, "sample " + std::to_string(sample.id) + " has " +
                                        std::to_string(sample.features.size()) +
                                        " features, dataset dim is " + std::to_string(dim_));
    }
    for (double f : sample.features) {
      if (!std::isfinite(f)) {
        throw Error(ErrorKind::numeric, "sample " + std::to_string(sample.id) + " has a non-finite feature");
      }
    }
    if (!ids_.insert(sample.id).second) {
      throw Error(ErrorKind::logic, "duplicate sample id " + std::to_string(sample.id));
    }
    index_[sample.true_label].push_back(samples_.size());
    samples_.push_back(std::move(sample));
  }

  /// Returns a dataset holding the samples at `positions`, in the given order.
  Dataset select(std::span<const std::size_t> positions) const {
    Dataset out(dim_);
    for (std::size_t p : positions) out.add(samples_.at(p));
    return out;
  }

  /// Concatenation; ids must stay disjoint.
  static Dataset merge(const Dataset& a, const Dataset& b) {
    if (!a.empty() && !b.empty() && a.dim() != b.dim()) {
      throw Error(ErrorKind::shape, "cannot merge datasets of different dimension");
    }
    Dataset out(a.dim() != 0 ? a.dim() : b.dim());
    for (const auto& s : a) out.add(s);
    for (const auto& s : b) out.add(s);
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<FeatureSample> samples_;
  std::map<CategoryId, std::vector<std::size_t>> index_;
  std::unordered_set<SampleId> ids_;
};

// ---------------------------------------------------------------------------
// CSV: header `label,f0,...,f{d-1}`, one sample per row. Sample ids are the
// zero-based data-row index.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

inline bool parse_label(std::string_view text, CategoryId& out) {
  text = trim(text);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const std::string& source = "<stream>") {
  auto fail = [&](std::size_t line_no, const std::string& msg) {
    return Error(ErrorKind::load, source + ":" + std::to_string(line_no) + ": " + msg);
  };

  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  auto header = detail::split_commas(line);
  if (header.size() < 2 || detail::trim(header[0]) != "label") {
    throw fail(1, "malformed header, expected label,f0,...");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (detail::trim(header[k]) != "f" + std::to_string(k - 1)) {
      throw fail(1, "malformed header column '" + std::string(header[k]) + "'");
    }
  }
  const std::size_t dim = header.size() - 1;

  Dataset ds(dim);
  std::size_t line_no = 1;
  SampleId next_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (cells.size() != dim + 1) {
      throw fail(line_no, "expected " + std::to_string(dim + 1) + " columns, got " + std::to_string(cells.size()));
    }
    FeatureSample s;
    s.id = next_id++;
    if (!detail::parse_label(cells[0], s.true_label)) throw fail(line_no, "label is not a non-negative integer");
    s.features.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!detail::parse_double(cells[k + 1], s.features[k]) || !std::isfinite(s.features[k])) {
        throw fail(line_no, "column " + std::to_string(k + 1) + " is not a finite number");
      }
    }
    ds.add(std::move(s));
  }
  return ds;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::load, "cannot open " + path);
  return parse_csv(in, path);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out << "label";
  for (std::size_t k = 0; k < ds.dim(); ++k) out << ",f" << k;
  out << '\n';
  for (const auto& s : ds) {
    out << s.true_label;
    for (double f : s.features) out << ',' << format_double(f);
    out << '\n';
  }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::emit, "cannot write " + path);
  write_csv(out, ds);
  if (!out) throw Error(ErrorKind::emit, "write failed for " + path);
}

// ---------------------------------------------------------------------------

struct BlobParams {
  std::size_t n_classes = 20;
  std::size_t per_class = 60;
  std::size_t dim = 32;
  double spread = 0.1;
  double separation = 10.0;
  std::uint64_t seed = 7;
};

/// Class c (1-based) is an isotropic Gaussian with sd `spread` around
/// `separation * e_c`. Samples are emitted class by class.
inline Dataset synth_blobs(const BlobParams& p) {
  if (p.n_classes < 2) throw Error(ErrorKind::config, "synth_blobs needs at least 2 classes");
  if (p.per_class < 1) throw Error(ErrorKind::config, "synth_blobs needs per_class >= 1");
  if (p.dim < p.n_classes) throw Error(ErrorKind::config, "synth_blobs needs dim >= n_classes");
  if (!(p.spread > 0) || !(p.separation > 0)) throw Error(ErrorKind::config, "spread and separation must be positive");

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.spread);
  Dataset ds(p.dim);
  SampleId id = 0;
  for (std::size_t c = 1; c <= p.n_classes; ++c) {
    for (std::size_t j = 0; j < p.per_class; ++j) {
      FeatureSample s;
      s.id = id++;
      s.true_label = static_cast<CategoryId>(c);
      s.features.resize(p.dim);
      for (std::size_t k = 0; k < p.dim; ++k) {
        s.features[k] = noise(rng) + (k == c - 1 ? p.separation : 0.0);
      }
      ds.add(std::move(s));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

/// Per-class seeded split: the first floor(n * frac) shuffled samples of each
/// label go to `first`, the rest to `second`. Each side keeps dataset order.
/// Classes with fewer than two samples are rejected; both sides get >= 1.
inline std::pair<Dataset, Dataset> per_class_split(const Dataset& ds, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac < 1.0)) throw Error(ErrorKind::config, "split fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> first, second;
  for (const auto& [label, positions] : ds.index()) {
    if (positions.size() < 2) {
      throw Error(ErrorKind::split, "category " + std::to_string(label) + " has fewer than 2 samples");
    }
    auto order = positions;
    std::shuffle(order.begin(), order.end(), rng);
    auto n_first = static_cast<std::size_t>(std::floor(static_cast<double>(order.size()) * frac));
    n_first = std::clamp<std::size_t>(n_first, 1, order.size() - 1);
    first.insert(first.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_first));
    second.insert(second.end(), order.begin() + static_cast<std::ptrdiff_t>(n_first), order.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {ds.select(first), ds.select(second)};
}

struct OpenSplit {
  /// known_original[i] is the source label remapped to i + 1
  std::vector<CategoryId> known_original;
  /// source labels of the unknown categories, in selection order
  std::vector<CategoryId> unknown_labels;
  Dataset train;
  Dataset known_test;
  Dataset unknown_pool;
  std::uint64_t seed = 0;

  std::size_t n_known() const noexcept { return known_original.size(); }
};

/// Picks `n_known` labels (seeded shuffle) as knowns, remaps them to
/// 1..n_known, splits their samples per class into train/test and sends
/// every other sample to the unknown pool with its source label.
inline OpenSplit make_open_split(const Dataset& ds, std::size_t n_known, double train_frac, std::uint64_t seed) {
  auto labels = ds.labels();
  if (n_known < 1 || labels.size() < n_known + 1) {
    throw Error(ErrorKind::config, "dataset has " + std::to_string(labels.size()) + " labels, need at least n_known + 1 = " +
                                       std::to_string(n_known + 1));
  }
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error(ErrorKind::config, "train_frac must lie in (0, 1)");

  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  OpenSplit split;
  split.seed = seed;
  split.known_original.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_known));
  split.unknown_labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_known), labels.end());

  std::map<CategoryId, CategoryId> remap;
  for (std::size_t i = 0; i < n_known; ++i) remap[split.known_original[i]] = static_cast<CategoryId>(i + 1);

  Dataset known(ds.dim());
  Dataset unknown(ds.dim());
  for (const auto& s : ds) {
    if (auto it = remap.find(s.true_label); it != remap.end()) {
      FeatureSample copy = s;
      copy.true_label = it->second;
      known.add(std::move(copy));
    } else {
      unknown.add(s);
    }
  }
  auto [train, test] = per_class_split(known, train_frac, derive_seed(seed, 1));
  split.train = std::move(train);
  split.known_test = std::move(test);
  split.unknown_pool = std::move(unknown);
  return split;
}

struct BalancedSubset {
  Dataset samples;
  /// labels that had fewer than per_class samples, with the count actually drawn
  std::map<CategoryId, std::size_t> shortfalls;
};

/// min(per_class, available) samples of each label in `labels`, drawn without
/// replacement; output keeps dataset order.
inline BalancedSubset balanced_subset(const Dataset& ds, const std::set<CategoryId>& labels, std::size_t per_class,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  BalancedSubset out;
  for (CategoryId label : labels) {
    auto it = ds.index().find(label);
    if (it == ds.index().end() || it->second.empty()) {
      throw Error(ErrorKind::missing_label, "category " + std::to_string(label) + " has no samples");
    }
    auto order = it->second;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t take = std::min(per_class, order.size());
    if (take < per_class) out.shortfalls[label] = take;
    chosen.insert(chosen.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  out.samples = ds.select(chosen);
  return out;
}

}  // namespace odn
