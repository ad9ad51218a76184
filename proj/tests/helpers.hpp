#pragma once

#include <random>
#include <vector>

#include "odn/odn.hpp"
#include "oracles.hpp"

namespace testutil {

inline odn::ClassifierState to_state(const oracle::Layer& layer) {
  odn::ClassifierState s(layer.columns[0].size(), layer.columns.size());
  for (std::size_t i = 0; i < layer.columns.size(); ++i) {
    auto col = s.column(i);
    std::copy(layer.columns[i].begin(), layer.columns[i].end(), col.begin());
    s.biases()[i] = layer.biases[i];
  }
  return s;
}

inline odn::Dataset make_dataset(std::size_t dim, const std::vector<std::pair<odn::CategoryId, std::vector<double>>>& rows,
                                 odn::SampleId first_id = 0) {
  odn::Dataset ds(dim);
  odn::SampleId id = first_id;
  for (const auto& [label, x] : rows) ds.add({id++, label, x});
  return ds;
}

/// Random labeled points (labels 1..k, each label present at least once).
inline odn::Dataset random_dataset(std::mt19937_64& rng, std::size_t dim, std::size_t k, std::size_t per_class,
                                   double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  odn::Dataset ds(dim);
  odn::SampleId id = 0;
  for (std::size_t c = 1; c <= k; ++c) {
    for (std::size_t j = 0; j < per_class; ++j) {
      std::vector<double> x(dim);
      for (double& e : x) e = g(rng);
      ds.add({id++, static_cast<odn::CategoryId>(c), x});
    }
  }
  return ds;
}

inline odn::SessionConfig acceptance_config() {
  // 20 blobs, dim 32, separation / spread = 100, 60 per class, 10 known
  odn::SessionConfig cfg;
  cfg.synth_classes = 20;
  cfg.synth_per_class = 60;
  cfg.synth_dim = 32;
  cfg.synth_spread = 0.1;
  cfg.synth_separation = 10.0;
  cfg.n_known = 10;
  return cfg;
}

}  // namespace testutil
