#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "odn/dataset.hpp"

using namespace odn;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "mem");
}

ErrorKind kind_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::logic;
}

}  // namespace

TEST(Csv, ParsesHeaderAndRows) {
  auto ds = parse("label,f0,f1\n1,0.0,1.0\n2,1.0,0.0\n");
  EXPECT_EQ(ds.dim(), 2u);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].true_label, 1u);
  EXPECT_EQ(ds[1].features, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(ds[1].id, 1u);
}

TEST(Csv, HeaderOnlyIsEmpty) {
  auto ds = parse("label,f0,f1,f2\n");
  EXPECT_EQ(ds.dim(), 3u);
  EXPECT_TRUE(ds.empty());
}

TEST(Csv, ScientificNotation) {
  auto ds = parse("label,f0\n0,1.5e-3\n");
  EXPECT_DOUBLE_EQ(ds[0].features[0], 1.5e-3);
}

TEST(Csv, NonNumericCellNamesLine) {
  try {
    parse("label,f0,f1\n1,0.0,1.0\n1,0.5,abc\n");
    FAIL() << "expected a load error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::load);
    EXPECT_NE(std::string(e.what()).find("mem:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_EQ(kind_of("lbl,f0\n1,0\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f1\n1,0\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f0,f1\n1,0\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f0\n1.5,0\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f0\n-1,0\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f0\n1,nan\n"), ErrorKind::load);
  EXPECT_EQ(kind_of("label,f0\n1,inf\n"), ErrorKind::load);
  EXPECT_EQ(kind_of(""), ErrorKind::load);
}

TEST(Csv, SaveLoadSaveIsByteIdentical) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    Dataset ds(4);
    for (SampleId i = 0; i < 15; ++i) {
      std::vector<double> x(4);
      for (double& e : x) e = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
      ds.add({i, static_cast<CategoryId>(rng() % 5), x});
    }
    std::ostringstream first;
    write_csv(first, ds);
    auto back = parse(first.str());
    std::ostringstream second;
    write_csv(second, back);
    ASSERT_EQ(first.str(), second.str());
    for (std::size_t i = 0; i < ds.size(); ++i) ASSERT_EQ(ds[i].features, back[i].features);
  }
}

TEST(DatasetModel, RejectsBadSamples) {
  Dataset ds(2);
  ds.add({0, 1, {0.0, 1.0}});
  EXPECT_THROW(ds.add({1, 1, {0.0}}), Error);
  EXPECT_THROW(ds.add({0, 1, {0.0, 1.0}}), Error);
  EXPECT_THROW(ds.add({2, 1, {0.0, NAN}}), Error);
  EXPECT_EQ(ds.count(1), 1u);
}

TEST(SynthBlobs, ClusterMeansNearCenters) {
  BlobParams p{2, 3, 4, 0.1, 10.0, 7};
  auto ds = synth_blobs(p);
  ASSERT_EQ(ds.size(), 6u);
  const double bound = 3 * p.spread / std::sqrt(static_cast<double>(p.per_class));
  for (CategoryId c = 1; c <= 2; ++c) {
    std::vector<double> mean(4, 0.0);
    for (auto pos : ds.index().at(c))
      for (std::size_t k = 0; k < 4; ++k) mean[k] += ds[pos].features[k] / 3.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double center = (k == c - 1) ? 10.0 : 0.0;
      EXPECT_NEAR(mean[k], center, bound) << "class " << c << " coord " << k;
    }
  }
}

TEST(SynthBlobs, DeterministicPerSeed) {
  BlobParams p{3, 10, 5, 0.5, 4.0, 11};
  auto a = synth_blobs(p);
  auto b = synth_blobs(p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].features, b[i].features);
  p.seed = 12;
  auto c = synth_blobs(p);
  EXPECT_NE(a[0].features, c[0].features);
}

TEST(SynthBlobs, RejectsBadConfig) {
  EXPECT_THROW(synth_blobs({5, 3, 4, 0.1, 10.0, 1}), Error);
  EXPECT_THROW(synth_blobs({1, 3, 4, 0.1, 10.0, 1}), Error);
  EXPECT_THROW(synth_blobs({2, 0, 4, 0.1, 10.0, 1}), Error);
  EXPECT_THROW(synth_blobs({2, 3, 4, 0.0, 10.0, 1}), Error);
}

TEST(SynthBlobs, WideSeparationDominatesSpread) {
  // separation >= 20 * spread: empirical centers are > 10 sd apart
  BlobParams p{6, 50, 8, 0.25, 5.0, 21};
  auto ds = synth_blobs(p);
  std::vector<std::vector<double>> centers;
  double var = 0.0;
  std::size_t n = 0;
  for (const auto& [label, positions] : ds.index()) {
    std::vector<double> m(p.dim, 0.0);
    for (auto pos : positions)
      for (std::size_t k = 0; k < p.dim; ++k) m[k] += ds[pos].features[k] / positions.size();
    for (auto pos : positions)
      for (std::size_t k = 0; k < p.dim; ++k) {
        var += std::pow(ds[pos].features[k] - m[k], 2);
        ++n;
      }
    centers.push_back(m);
  }
  const double sd = std::sqrt(var / n);
  for (std::size_t a = 0; a < centers.size(); ++a)
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k < p.dim; ++k) d += std::pow(centers[a][k] - centers[b][k], 2);
      EXPECT_GT(std::sqrt(d), 10 * sd);
    }
}

TEST(OpenSplit, CountsForTwentyClasses) {
  auto ds = synth_blobs({20, 10, 20, 0.1, 10.0, 1});
  auto s = make_open_split(ds, 10, 0.8, 5);
  EXPECT_EQ(s.known_original.size(), 10u);
  EXPECT_EQ(s.unknown_labels.size(), 10u);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.known_test.size(), 20u);
  EXPECT_EQ(s.unknown_pool.size(), 100u);
  // knowns are remapped to 1..n_known
  auto labels = s.train.labels();
  EXPECT_EQ(labels.front(), 1u);
  EXPECT_EQ(labels.back(), 10u);
  EXPECT_EQ(labels.size(), 10u);
}

TEST(OpenSplit, PartitionsSampleIds) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t classes = 3 + rng() % 6;
    auto ds = synth_blobs({classes, 2 + rng() % 9, classes + 1, 0.3, 2.0, rng()});
    const std::size_t n_known = 1 + rng() % (classes - 1);
    auto s = make_open_split(ds, n_known, 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng), rng());
    std::set<SampleId> seen;
    std::set<CategoryId> unknown(s.unknown_labels.begin(), s.unknown_labels.end());
    std::set<CategoryId> known(s.known_original.begin(), s.known_original.end());
    for (CategoryId c : unknown) EXPECT_FALSE(known.count(c));
    for (const Dataset* part : {&s.train, &s.known_test, &s.unknown_pool})
      for (const auto& smp : *part) EXPECT_TRUE(seen.insert(smp.id).second) << "id " << smp.id << " in two partitions";
    EXPECT_EQ(seen.size(), ds.size());
    for (const auto& smp : s.unknown_pool) EXPECT_TRUE(unknown.count(smp.true_label));
    // each known category has at least one test sample
    EXPECT_EQ(s.known_test.labels().size(), n_known);
    for (const auto& smp : s.train) {
      EXPECT_GE(smp.true_label, 1u);
      EXPECT_LE(smp.true_label, n_known);
      // the remapped label points back at a source label that is not unknown
      EXPECT_EQ(ds[smp.id].true_label, s.known_original[smp.true_label - 1]);
    }
  }
}

TEST(OpenSplit, DeterministicPerSeed) {
  auto ds = synth_blobs({8, 6, 8, 0.1, 1.0, 4});
  auto a = make_open_split(ds, 4, 0.5, 77);
  auto b = make_open_split(ds, 4, 0.5, 77);
  EXPECT_EQ(a.known_original, b.known_original);
  EXPECT_EQ(a.unknown_labels, b.unknown_labels);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].id, b.train[i].id);
}

TEST(OpenSplit, Errors) {
  auto ds = synth_blobs({4, 5, 4, 0.1, 1.0, 4});
  EXPECT_THROW(make_open_split(ds, 4, 0.5, 1), Error);  // needs an unknown
  EXPECT_THROW(make_open_split(ds, 2, 1.0, 1), Error);
  auto tiny = synth_blobs({3, 1, 3, 0.1, 1.0, 4});
  try {
    make_open_split(tiny, 2, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::split);
  }
}

TEST(BalancedSubset, ExactCountsAndClamp) {
  auto ds = synth_blobs({3, 10, 3, 0.1, 1.0, 2});
  auto sub = balanced_subset(ds, {1, 2}, 5, 3);
  EXPECT_EQ(sub.samples.size(), 10u);
  EXPECT_EQ(sub.samples.count(1), 5u);
  EXPECT_EQ(sub.samples.count(2), 5u);
  EXPECT_TRUE(sub.shortfalls.empty());

  auto clamped = balanced_subset(ds, {1, 3}, 20, 3);
  EXPECT_EQ(clamped.samples.count(1), 10u);
  EXPECT_EQ(clamped.samples.count(3), 10u);
  EXPECT_EQ(clamped.shortfalls.at(1), 10u);
}

TEST(BalancedSubset, DeterministicAndMissingLabel) {
  auto ds = synth_blobs({3, 10, 3, 0.1, 1.0, 2});
  auto a = balanced_subset(ds, {1, 2, 3}, 4, 8);
  auto b = balanced_subset(ds, {1, 2, 3}, 4, 8);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].id, b.samples[i].id);
  try {
    balanced_subset(ds, {1, 9}, 4, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_label);
  }
}
