#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "odn/classifier.hpp"
#include "odn/common.hpp"
#include "odn/dataset.hpp"

namespace odn {

enum class InitStrategy { mean, stochastic };

/// Every tunable of a session. Loaded from a flat key=value file; command
/// line flags are applied on top through the same `set` entry point.
struct SessionConfig {
  // data
  std::string data;  // CSV path; empty means synthetic blobs
  std::size_t synth_classes = 20;
  std::size_t synth_per_class = 60;
  std::size_t synth_dim = 32;
  double synth_spread = 0.1;
  double synth_separation = 10.0;
  std::uint64_t data_seed = 7;

  // split
  std::size_t n_known = 10;
  std::optional<std::size_t> n_unknown;  // unset: every remaining category
  double train_frac = 0.5;
  std::uint64_t split_seed = 11;

  // detection
  double epsilon = 0.5;
  double rho = 0.5;
  bool softmax_confidence = false;
  std::size_t passes = 2;

  // expansion
  bool emphasis = true;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t emphasis_m = 5;
  InitStrategy init = InitStrategy::mean;
  std::uint64_t init_seed = 17;

  // training
  bool allometry = true;
  std::size_t epochs = 30;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  double l2 = 1e-4;
  std::uint64_t train_seed = 13;

  // session
  std::size_t teacher_budget = 8;
  std::size_t max_iterations = 1000;
  std::size_t patience = 3;

  // output
  std::string out = "odn_out";
  std::string format = "csv";

  /// Effective blend weights: emphasis off means the plain column mean.
  double effective_alpha() const noexcept { return emphasis ? alpha : 1.0; }
  double effective_beta() const noexcept { return emphasis ? beta : 0.0; }

  ConfidenceMode confidence_mode() const noexcept {
    return softmax_confidence ? ConfidenceMode::softmax : ConfidenceMode::activation;
  }

  TrainConfig train_config() const { return {learning_rate, epochs, batch_size, l2, train_seed}; }

  BlobParams blob_params() const {
    return {synth_classes, synth_per_class, synth_dim, synth_spread, synth_separation, data_seed};
  }

  void set(const std::string& key, const std::string& value);
  void validate() const;
  nlohmann::ordered_json to_json() const;
  bool operator==(const SessionConfig&) const = default;
};

namespace detail {

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorKind::config, key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(v, out) || !std::isfinite(out)) throw Error(ErrorKind::config, key + " expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw Error(ErrorKind::config, key + " expects true/false, got '" + v + "'");
}

}  // namespace detail

inline void SessionConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = detail::trim_copy(raw);
  using namespace detail;
  if (key == "data") data = v;
  else if (key == "synth_classes") synth_classes = parse_count(key, v);
  else if (key == "synth_per_class") synth_per_class = parse_count(key, v);
  else if (key == "synth_dim") synth_dim = parse_count(key, v);
  else if (key == "synth_spread") synth_spread = parse_real(key, v);
  else if (key == "synth_separation") synth_separation = parse_real(key, v);
  else if (key == "data_seed") data_seed = parse_count(key, v);
  else if (key == "n_known") n_known = parse_count(key, v);
  else if (key == "n_unknown") {
    if (v == "all") n_unknown.reset();
    else n_unknown = parse_count(key, v);
  }
  else if (key == "train_frac") train_frac = parse_real(key, v);
  else if (key == "split_seed") split_seed = parse_count(key, v);
  else if (key == "epsilon") epsilon = parse_real(key, v);
  else if (key == "rho") rho = parse_real(key, v);
  else if (key == "softmax_confidence") softmax_confidence = parse_bool(key, v);
  else if (key == "passes") passes = parse_count(key, v);
  else if (key == "emphasis") emphasis = parse_bool(key, v);
  else if (key == "alpha") alpha = parse_real(key, v);
  else if (key == "beta") beta = parse_real(key, v);
  else if (key == "emphasis_m") emphasis_m = parse_count(key, v);
  else if (key == "init") {
    if (v == "mean") init = InitStrategy::mean;
    else if (v == "stochastic") init = InitStrategy::stochastic;
    else throw Error(ErrorKind::config, "init must be mean or stochastic, got '" + v + "'");
  }
  else if (key == "init_seed") init_seed = parse_count(key, v);
  else if (key == "allometry") allometry = parse_bool(key, v);
  else if (key == "epochs") epochs = parse_count(key, v);
  else if (key == "learning_rate") learning_rate = parse_real(key, v);
  else if (key == "batch_size") batch_size = parse_count(key, v);
  else if (key == "l2") l2 = parse_real(key, v);
  else if (key == "train_seed") train_seed = parse_count(key, v);
  else if (key == "teacher_budget") teacher_budget = parse_count(key, v);
  else if (key == "max_iterations") max_iterations = parse_count(key, v);
  else if (key == "patience") patience = parse_count(key, v);
  else if (key == "out") out = v;
  else if (key == "format") format = v;
  else if (key == "seed") {
    // one knob for every seeded stage
    data_seed = split_seed = train_seed = init_seed = parse_count(key, v);
  }
  else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

inline void SessionConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorKind::config, msg);
  };
  need(synth_classes >= 2, "synth_classes must be >= 2");
  need(synth_per_class >= 1, "synth_per_class must be >= 1");
  need(synth_dim >= synth_classes, "synth_dim must be >= synth_classes");
  need(synth_spread > 0 && synth_separation > 0, "synth_spread and synth_separation must be positive");
  need(n_known >= 2, "n_known must be >= 2");
  need(train_frac > 0 && train_frac < 1, "train_frac must lie in (0, 1)");
  need(epsilon > 0 && epsilon <= 1, "epsilon must lie in (0, 1]");
  need(rho > 0, "rho must be positive");
  need(passes >= 1, "passes must be >= 1");
  need(emphasis_m >= 1, "emphasis_m must be >= 1");
  need(epochs >= 1, "epochs must be >= 1");
  need(learning_rate > 0, "learning_rate must be positive");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(l2 >= 0, "l2 must be non-negative");
  need(teacher_budget >= 1, "teacher_budget must be >= 1");
  need(patience >= 1, "patience must be >= 1");
  need(format == "csv" || format == "json", "format must be csv or json");
}

inline nlohmann::ordered_json SessionConfig::to_json() const {
  nlohmann::ordered_json j;
  j["data"] = data;
  j["synth_classes"] = synth_classes;
  j["synth_per_class"] = synth_per_class;
  j["synth_dim"] = synth_dim;
  j["synth_spread"] = synth_spread;
  j["synth_separation"] = synth_separation;
  j["data_seed"] = data_seed;
  j["n_known"] = n_known;
  if (n_unknown) j["n_unknown"] = *n_unknown;
  else j["n_unknown"] = "all";
  j["train_frac"] = train_frac;
  j["split_seed"] = split_seed;
  j["epsilon"] = epsilon;
  j["rho"] = rho;
  j["softmax_confidence"] = softmax_confidence;
  j["passes"] = passes;
  j["emphasis"] = emphasis;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["emphasis_m"] = emphasis_m;
  j["init"] = init == InitStrategy::mean ? "mean" : "stochastic";
  j["init_seed"] = init_seed;
  j["allometry"] = allometry;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["l2"] = l2;
  j["train_seed"] = train_seed;
  j["teacher_budget"] = teacher_budget;
  j["max_iterations"] = max_iterations;
  j["patience"] = patience;
  j["out"] = out;
  j["format"] = format;
  return j;
}

/// key=value lines; `#` starts a comment.
inline SessionConfig parse_config(std::istream& in, const std::string& source = "<config>",
                                  SessionConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim_copy(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::config, source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      base.set(detail::trim_copy(std::string_view(text).substr(0, eq)), text.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorKind::config, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline SessionConfig load_config(const std::string& path, SessionConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config " + path);
  return parse_config(in, path, std::move(base));
}

/// Writes every key so that parse_config reproduces the record exactly.
inline void write_config(std::ostream& out, const SessionConfig& cfg) {
  const auto j = cfg.to_json();
  for (const auto& [key, value] : j.items()) {
    out << key << " = ";
    if (value.is_string()) out << value.get<std::string>();
    else if (value.is_number_float()) out << format_double(value.get<double>());
    else out << value.dump();
    out << '\n';
  }
}

}  // namespace odn
