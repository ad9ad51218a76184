#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "odn/common.hpp"
#include "odn/dataset.hpp"

namespace odn {

/// Linear classification layer. Weights are stored column-major so that
/// column n (category n + 1) is contiguous and appending a category is a
/// plain push_back.
class ClassifierState {
 public:
  ClassifierState() = default;
  ClassifierState(std::size_t dim, std::size_t n_categories)
      : dim_(dim), n_categories_(n_categories), n_initial_(n_categories),
        weights_(dim * n_categories, 0.0), biases_(n_categories, 0.0) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_categories() const noexcept { return n_categories_; }
  std::size_t n_initial() const noexcept { return n_initial_; }

  /// Zero-based column index; category label = index + 1.
  std::span<const double> column(std::size_t i) const { return {weights_.data() + i * dim_, dim_}; }
  std::span<double> column(std::size_t i) { return {weights_.data() + i * dim_, dim_}; }

  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& weights() noexcept { return weights_; }
  const std::vector<double>& biases() const noexcept { return biases_; }
  std::vector<double>& biases() noexcept { return biases_; }

  void set_n_initial(std::size_t n) {
    if (n > n_categories_) throw Error(ErrorKind::logic, "n_initial exceeds n_categories");
    n_initial_ = n;
  }

  /// Appends a category column; the pre-append count becomes n_initial.
  void append_column(std::span<const double> column, double bias) {
    if (column.size() != dim_) throw Error(ErrorKind::shape, "new column length does not match dim");
    weights_.insert(weights_.end(), column.begin(), column.end());
    biases_.push_back(bias);
    n_initial_ = n_categories_;
    ++n_categories_;
  }

  bool operator==(const ClassifierState&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t n_categories_ = 0;
  std::size_t n_initial_ = 0;
  std::vector<double> weights_;
  std::vector<double> biases_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double l2 = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw Error(ErrorKind::config, "learning_rate must be > 0");
    if (epochs < 1) throw Error(ErrorKind::config, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::config, "batch_size must be >= 1");
    if (!(l2 >= 0)) throw Error(ErrorKind::config, "l2 must be >= 0");
  }
};

struct AllometryFactors {
  std::vector<double> per_column;
};

/// Per-column learning-rate scale: 0.1 for the first n_initial columns,
/// 1.0 for columns added in the current round.
inline AllometryFactors allometry_factors(std::size_t n_initial, std::size_t n_categories) {
  if (n_initial > n_categories) throw Error(ErrorKind::logic, "n_initial > n_categories");
  AllometryFactors f;
  f.per_column.assign(n_categories, 1.0);
  std::fill_n(f.per_column.begin(), n_initial, 0.1);
  return f;
}

inline AllometryFactors uniform_factors(std::size_t n_categories, double value = 1.0) {
  return {std::vector<double>(n_categories, value)};
}

// ---------------------------------------------------------------------------
// Inference

/// v_i = w_i . x + b_i
inline std::vector<double> activations(const ClassifierState& state, std::span<const double> x) {
  if (x.size() != state.dim()) {
    throw Error(ErrorKind::shape, "feature length " + std::to_string(x.size()) + " != classifier dim " +
                                      std::to_string(state.dim()));
  }
  std::vector<double> v(state.n_categories());
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto w = state.column(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += w[k] * x[k];
    v[i] = acc + state.biases()[i];
  }
  return v;
}

inline std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorKind::shape, "softmax of an empty vector");
  for (double e : v) {
    if (!std::isfinite(e)) throw Error(ErrorKind::numeric, "softmax input is not finite");
  }
  const double top = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - top);
    total += p[i];
  }
  for (double& e : p) e /= total;
  return p;
}

/// Zero-based index of the maximum; ties go to the smallest index.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorKind::shape, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline CategoryId predict(const ClassifierState& state, std::span<const double> x) {
  return static_cast<CategoryId>(argmax(activations(state, x)) + 1);
}

/// What the detector thresholds: raw classification-layer activations, or
/// their softmax (kept for comparison runs).
enum class ConfidenceMode { activation, softmax };

inline std::vector<double> confidences(const ClassifierState& state, std::span<const double> x, ConfidenceMode mode) {
  auto v = activations(state, x);
  return mode == ConfidenceMode::softmax ? softmax(v) : v;
}

// ---------------------------------------------------------------------------
// Training

using Batch = std::vector<const FeatureSample*>;

inline Batch as_batch(const Dataset& ds) {
  Batch b;
  b.reserve(ds.size());
  for (const auto& s : ds) b.push_back(&s);
  return b;
}

struct Gradient {
  std::vector<double> weights;  // same column-major layout as the state
  std::vector<double> biases;
};

namespace detail {
inline std::size_t label_column(const ClassifierState& state, CategoryId label) {
  if (label < 1 || label > state.n_categories()) {
    throw Error(ErrorKind::shape, "label " + std::to_string(label) + " outside 1.." + std::to_string(state.n_categories()));
  }
  return label - 1;
}
}  // namespace detail

/// Mean softmax cross-entropy over the batch plus (l2 / 2) * ||W||^2.
inline double loss(const ClassifierState& state, const Batch& batch, double l2) {
  if (batch.empty()) throw Error(ErrorKind::shape, "empty batch");
  double total = 0.0;
  for (const FeatureSample* s : batch) {
    auto v = activations(state, s->features);
    const double top = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double e : v) z += std::exp(e - top);
    total += top + std::log(z) - v[detail::label_column(state, s->true_label)];
  }
  double reg = 0.0;
  for (double w : state.weights()) reg += w * w;
  return total / static_cast<double>(batch.size()) + 0.5 * l2 * reg;
}

/// Analytic gradient of `loss`.
inline Gradient gradient(const ClassifierState& state, const Batch& batch, double l2) {
  if (batch.empty()) throw Error(ErrorKind::shape, "empty batch");
  const std::size_t dim = state.dim();
  Gradient g{std::vector<double>(state.weights().size(), 0.0), std::vector<double>(state.n_categories(), 0.0)};
  for (const FeatureSample* s : batch) {
    auto p = softmax(activations(state, s->features));
    p[detail::label_column(state, s->true_label)] -= 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double* gw = g.weights.data() + i * dim;
      for (std::size_t k = 0; k < dim; ++k) gw[k] += p[i] * s->features[k];
      g.biases[i] += p[i];
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < g.weights.size(); ++j) g.weights[j] = g.weights[j] * scale + l2 * state.weights()[j];
  for (double& b : g.biases) b *= scale;
  return g;
}

/// Step deltas: column i moves by (learning_rate * factor_i) * gradient_i.
inline Gradient step_deltas(const ClassifierState& state, const Gradient& g, const TrainConfig& cfg,
                            const AllometryFactors& factors) {
  if (factors.per_column.size() != state.n_categories()) {
    throw Error(ErrorKind::shape, "allometry factors length does not match n_categories");
  }
  const std::size_t dim = state.dim();
  Gradient d{std::vector<double>(g.weights.size()), std::vector<double>(g.biases.size())};
  for (std::size_t i = 0; i < state.n_categories(); ++i) {
    const double rate = cfg.learning_rate * factors.per_column[i];
    for (std::size_t k = 0; k < dim; ++k) d.weights[i * dim + k] = rate * g.weights[i * dim + k];
    d.biases[i] = rate * g.biases[i];
  }
  return d;
}

inline ClassifierState sgd_step_allometric(const ClassifierState& state, const Batch& batch, const TrainConfig& cfg,
                                           const AllometryFactors& factors) {
  if (factors.per_column.size() != state.n_categories()) {
    throw Error(ErrorKind::shape, "allometry factors length does not match n_categories");
  }
  auto d = step_deltas(state, gradient(state, batch, cfg.l2), cfg, factors);
  ClassifierState next = state;
  for (std::size_t j = 0; j < d.weights.size(); ++j) next.weights()[j] -= d.weights[j];
  for (std::size_t i = 0; i < d.biases.size(); ++i) next.biases()[i] -= d.biases[i];
  return next;
}

/// Mini-batch SGD over `epochs`, reshuffling with the config seed each epoch.
inline ClassifierState fit(ClassifierState state, const Dataset& ds, const TrainConfig& cfg,
                           const AllometryFactors& factors) {
  cfg.validate();
  if (ds.empty()) throw Error(ErrorKind::setup, "cannot train on an empty dataset");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Batch batch;
      batch.reserve(stop - start);
      for (std::size_t j = start; j < stop; ++j) batch.push_back(&ds[order[j]]);
      state = sgd_step_allometric(state, batch, cfg, factors);
    }
  }
  return state;
}

/// Trains a fresh zero-initialized layer on labels exactly 1..N.
inline ClassifierState train_initial(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw Error(ErrorKind::setup, "cannot train on an empty dataset");
  const auto labels = ds.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != i + 1) {
      throw Error(ErrorKind::setup, "training labels must be exactly 1..N, found gap at " + std::to_string(i + 1));
    }
  }
  ClassifierState state(ds.dim(), labels.size());
  return fit(std::move(state), ds, cfg, uniform_factors(labels.size()));
}

// ---------------------------------------------------------------------------
// Opening the layer

struct NewColumn {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Indices of the M largest entries, ties toward the smallest index.
inline std::vector<std::size_t> top_m_indices(std::span<const double> values, std::size_t m) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(std::min(m, idx.size()));
  return idx;
}

/// Emphasis Initialization: alpha * (mean of all columns) + beta * (mean of
/// the M columns whose categories respond most to the new samples). The bias
/// is blended the same way.
inline NewColumn emphasis_init(const ClassifierState& state, std::span<const double> mean_activation, std::size_t m,
                               double alpha, double beta) {
  const std::size_t n = state.n_categories();
  if (mean_activation.size() != n) throw Error(ErrorKind::shape, "mean_activation length does not match n_categories");
  if (m < 1 || m > n) throw Error(ErrorKind::config, "M must lie in 1.." + std::to_string(n));

  const std::size_t dim = state.dim();
  std::vector<double> overall(dim, 0.0), emphasis(dim, 0.0);
  double overall_bias = 0.0, emphasis_bias = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto w = state.column(i);
    for (std::size_t k = 0; k < dim; ++k) overall[k] += w[k];
    overall_bias += state.biases()[i];
  }
  for (std::size_t i : top_m_indices(mean_activation, m)) {
    auto w = state.column(i);
    for (std::size_t k = 0; k < dim; ++k) emphasis[k] += w[k];
    emphasis_bias += state.biases()[i];
  }

  const auto dn = static_cast<double>(n), dm = static_cast<double>(m);
  NewColumn out;
  out.weights.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) out.weights[k] = alpha * (overall[k] / dn) + beta * (emphasis[k] / dm);
  out.bias = alpha * (overall_bias / dn) + beta * (emphasis_bias / dm);
  return out;
}

inline ClassifierState expand(const ClassifierState& state, std::span<const double> column, double bias) {
  ClassifierState next = state;
  next.append_column(column, bias);
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoint: a text record, all reals at 17 significant digits.
//
//   odn-checkpoint 1
//   dim <d> categories <K> initial <N>
//   w <d values>        (K lines, one per column)
//   b <K values>

inline void write_checkpoint(std::ostream& out, const ClassifierState& state) {
  out << "odn-checkpoint 1\n";
  out << "dim " << state.dim() << " categories " << state.n_categories() << " initial " << state.n_initial() << '\n';
  for (std::size_t i = 0; i < state.n_categories(); ++i) {
    out << 'w';
    for (double w : state.column(i)) out << ' ' << format_double(w);
    out << '\n';
  }
  out << 'b';
  for (double b : state.biases()) out << ' ' << format_double(b);
  out << '\n';
}

inline ClassifierState read_checkpoint(std::istream& in) {
  auto bad = [](const std::string& msg) { return Error(ErrorKind::load, "checkpoint: " + msg); };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "odn-checkpoint") throw bad("missing header");
  if (version != 1) throw bad("unsupported version " + std::to_string(version));
  std::string k_dim, k_cat, k_init;
  std::size_t dim = 0, n_cat = 0, n_init = 0;
  if (!(in >> k_dim >> dim >> k_cat >> n_cat >> k_init >> n_init) || k_dim != "dim" || k_cat != "categories" ||
      k_init != "initial") {
    throw bad("malformed shape line");
  }
  if (n_init > n_cat) throw bad("initial exceeds categories");

  auto read_value = [&](double& target) {
    std::string token;
    if (!(in >> token) || !detail::parse_double(token, target) || !std::isfinite(target)) throw bad("bad number");
  };
  ClassifierState state(dim, n_cat);
  std::string tag;
  for (std::size_t i = 0; i < n_cat; ++i) {
    if (!(in >> tag) || tag != "w") throw bad("expected weight column " + std::to_string(i));
    for (double& w : state.column(i)) read_value(w);
  }
  if (!(in >> tag) || tag != "b") throw bad("expected bias line");
  for (double& b : state.biases()) read_value(b);
  state.set_n_initial(n_init);
  return state;
}

inline void save_checkpoint(const ClassifierState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::emit, "cannot write " + path);
  write_checkpoint(out, state);
}

inline ClassifierState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::load, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace odn
