#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "odn/classifier.hpp"
#include "odn/common.hpp"
#include "odn/dataset.hpp"

namespace odn {

/// Per-category (eta, mu, delta) triplet plus the two empirical scales.
/// Categories without any correctly classified calibration sample are
/// flagged uncalibrated and can never be accepted.
struct TripletThresholds {
  std::vector<double> eta;    // accept
  std::vector<double> mu;     // reject, always epsilon * eta
  std::vector<double> delta;  // distance-reject
  std::vector<std::size_t> counts;
  std::vector<bool> calibrated;
  double epsilon = 0.5;
  double rho = 0.5;
  ConfidenceMode mode = ConfidenceMode::activation;

  std::size_t size() const noexcept { return eta.size(); }
  bool operator==(const TripletThresholds&) const = default;
};

/// Second-largest entry; with a duplicated maximum this is the maximum.
inline double second_max(std::span<const double> v) {
  if (v.size() < 2) throw Error(ErrorKind::shape, "second_max needs at least two entries");
  double first = std::max(v[0], v[1]);
  double second = std::min(v[0], v[1]);
  for (std::size_t i = 2; i < v.size(); ++i) {
    if (v[i] > first) {
      second = first;
      first = v[i];
    } else if (v[i] > second) {
      second = v[i];
    }
  }
  return second;
}

inline TripletThresholds calibrate(const ClassifierState& state, const Dataset& train, double epsilon, double rho,
                                   ConfidenceMode mode = ConfidenceMode::activation) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::config, "epsilon must lie in (0, 1]");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw Error(ErrorKind::config, "rho must be positive");
  const std::size_t k = state.n_categories();
  if (k < 2) throw Error(ErrorKind::shape, "calibration needs at least two categories");

  std::vector<double> top_sum(k, 0.0), gap_sum(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (const auto& s : train) {
    if (s.true_label < 1 || s.true_label > k) {
      throw Error(ErrorKind::shape, "calibration label " + std::to_string(s.true_label) + " outside 1.." + std::to_string(k));
    }
    auto v = confidences(state, s.features, mode);
    const std::size_t i = s.true_label - 1;
    if (argmax(v) != i) continue;
    top_sum[i] += v[i];
    gap_sum[i] += v[i] - second_max(v);
    ++counts[i];
  }

  TripletThresholds t;
  t.epsilon = epsilon;
  t.rho = rho;
  t.mode = mode;
  t.eta.assign(k, 0.0);
  t.mu.assign(k, 0.0);
  t.delta.assign(k, 0.0);
  t.counts = counts;
  t.calibrated.assign(k, false);
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i] == 0) continue;
    const double n = static_cast<double>(counts[i]);
    t.eta[i] = top_sum[i] / n;
    t.mu[i] = epsilon * t.eta[i];
    t.delta[i] = rho * (gap_sum[i] / n);
    t.calibrated[i] = true;
  }
  return t;
}

enum class DetectionRule { accept_top, reject_all_below_mu, distance_accept, distance_reject };

inline std::string_view to_string(DetectionRule rule) {
  switch (rule) {
    case DetectionRule::accept_top: return "AcceptTop";
    case DetectionRule::reject_all_below_mu: return "RejectAllBelowMu";
    case DetectionRule::distance_accept: return "DistanceAccept";
    case DetectionRule::distance_reject: return "DistanceReject";
  }
  return "?";
}

struct DetectionOutcome {
  bool known = false;
  CategoryId label = kUnknownLabel;  // kUnknownLabel unless known
  DetectionRule rule = DetectionRule::distance_reject;

  bool operator==(const DetectionOutcome&) const = default;
};

/// The accept / reject / distance cascade over one confidence vector.
inline DetectionOutcome detect(std::span<const double> v, const TripletThresholds& t) {
  if (v.size() != t.size()) {
    throw Error(ErrorKind::shape, "confidence length " + std::to_string(v.size()) + " != thresholds length " +
                                      std::to_string(t.size()));
  }
  const std::size_t l = argmax(v);
  const auto label = static_cast<CategoryId>(l + 1);

  if (t.calibrated[l] && v[l] > t.eta[l]) return {true, label, DetectionRule::accept_top};

  bool all_below = true;
  for (std::size_t i = 0; i < v.size() && all_below; ++i) {
    // uncalibrated categories have mu = +inf
    if (t.calibrated[i] && !(v[i] < t.mu[i])) all_below = false;
  }
  if (all_below) return {false, kUnknownLabel, DetectionRule::reject_all_below_mu};

  if (t.calibrated[l] && t.mu[l] <= v[l] && v[l] <= t.eta[l] && (v[l] - second_max(v)) > t.delta[l]) {
    return {true, label, DetectionRule::distance_accept};
  }
  return {false, kUnknownLabel, DetectionRule::distance_reject};
}

inline DetectionOutcome detect_sample(const ClassifierState& state, const TripletThresholds& t,
                                      std::span<const double> x) {
  return detect(confidences(state, x, t.mode), t);
}

// ---------------------------------------------------------------------------
// JSON: {epsilon, rho, confidence, categories: [{id, eta, mu, delta, count, calibrated}]}

inline nlohmann::ordered_json to_json(const TripletThresholds& t) {
  nlohmann::ordered_json j;
  j["epsilon"] = t.epsilon;
  j["rho"] = t.rho;
  j["confidence"] = t.mode == ConfidenceMode::softmax ? "softmax" : "activation";
  auto cats = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    nlohmann::ordered_json c;
    c["id"] = i + 1;
    c["eta"] = t.eta[i];
    c["mu"] = t.mu[i];
    c["delta"] = t.delta[i];
    c["count"] = t.counts[i];
    c["calibrated"] = static_cast<bool>(t.calibrated[i]);
    cats.push_back(std::move(c));
  }
  j["categories"] = std::move(cats);
  return j;
}

inline TripletThresholds thresholds_from_json(const nlohmann::json& j) {
  try {
    TripletThresholds t;
    t.epsilon = j.at("epsilon").get<double>();
    t.rho = j.at("rho").get<double>();
    const auto mode = j.value("confidence", std::string("activation"));
    if (mode != "activation" && mode != "softmax") throw Error(ErrorKind::load, "unknown confidence mode " + mode);
    t.mode = mode == "softmax" ? ConfidenceMode::softmax : ConfidenceMode::activation;
    const auto& cats = j.at("categories");
    for (std::size_t i = 0; i < cats.size(); ++i) {
      const auto& c = cats[i];
      if (c.at("id").get<std::size_t>() != i + 1) throw Error(ErrorKind::load, "thresholds categories must be ordered 1..K");
      t.eta.push_back(c.at("eta").get<double>());
      t.mu.push_back(c.at("mu").get<double>());
      t.delta.push_back(c.at("delta").get<double>());
      t.counts.push_back(c.at("count").get<std::size_t>());
      t.calibrated.push_back(c.at("calibrated").get<bool>());
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::load, std::string("thresholds json: ") + e.what());
  }
}

inline void save_thresholds(const TripletThresholds& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::emit, "cannot write " + path);
  out << to_json(t).dump(2) << '\n';
}

inline TripletThresholds load_thresholds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::load, "cannot open " + path);
  try {
    return thresholds_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::load, path + ": " + e.what());
  }
}

}  // namespace odn
