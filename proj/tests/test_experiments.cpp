#include <gtest/gtest.h>

#include "helpers.hpp"
#include "odn/experiments.hpp"

using namespace odn;

namespace {

SessionConfig small_config() {
  SessionConfig cfg;
  cfg.synth_classes = 8;
  cfg.synth_per_class = 24;
  cfg.synth_dim = 8;
  cfg.n_known = 3;
  cfg.epochs = 15;
  return cfg;
}

}  // namespace

TEST(RestrictUnknowns, KeepsFirstCategoriesInSelectionOrder) {
  auto cfg = small_config();
  auto ds = synth_blobs(cfg.blob_params());
  auto split = make_open_split(ds, 3, 0.5, 5);
  auto two = restrict_unknowns(split, 2);
  ASSERT_EQ(two.unknown_labels.size(), 2u);
  EXPECT_EQ(two.unknown_labels[0], split.unknown_labels[0]);
  const auto kept = two.unknown_pool.labels();
  EXPECT_EQ(std::set<CategoryId>(kept.begin(), kept.end()),
            (std::set<CategoryId>{split.unknown_labels[0], split.unknown_labels[1]}));
  EXPECT_EQ(two.unknown_pool.size(), 48u);
  EXPECT_TRUE(restrict_unknowns(split, 0).unknown_pool.empty());
  EXPECT_THROW(restrict_unknowns(split, 6), Error);

  cfg.n_unknown = 1;
  EXPECT_EQ(build_open_split(ds, cfg).unknown_labels.size(), 1u);
}

TEST(Sweep, ZeroUnknownsIsTheInitialModel) {
  auto cfg = small_config();
  auto ds = synth_blobs(cfg.blob_params());
  auto rows = openness_sweep(ds, 3, {0}, cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].unknown_count, 0u);
  EXPECT_EQ(rows[0].report.unknown.total, 0u);
  EXPECT_EQ(rows[0].report.n_known_at_eval, 3u);
}

TEST(Sweep, RowsInIncreasingOrder) {
  auto cfg = small_config();
  auto ds = synth_blobs(cfg.blob_params());
  auto rows = openness_sweep(ds, 3, {5, 1, 2}, cfg);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].unknown_count, 1u);
  EXPECT_EQ(rows[1].unknown_count, 2u);
  EXPECT_EQ(rows[2].unknown_count, 5u);
  for (const auto& r : rows) EXPECT_EQ(r.report.n_known_at_eval, 3 + r.unknown_count);
  auto t = sweep_table(rows);
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.columns.front(), "unknown_count");
}

TEST(Sweep, Errors) {
  auto cfg = small_config();
  auto ds = synth_blobs(cfg.blob_params());
  EXPECT_THROW(openness_sweep(ds, 3, {1, 6}, cfg), Error);
  EXPECT_THROW(openness_sweep(ds, 3, {2, 2}, cfg), Error);
}

TEST(Compare, OneRowPerIterationAndArm) {
  auto cfg = small_config();
  cfg.n_unknown = 3;
  auto split = build_open_split(synth_blobs(cfg.blob_params()), cfg);
  auto cmp = compare_init_strategies(split, cfg, seed_range(1, 2));
  EXPECT_EQ(cmp.mean_init.arm, "mean");
  EXPECT_EQ(cmp.stochastic_init.arm, "stochastic");
  EXPECT_EQ(cmp.mean_init.logs.size(), 2u);
  for (const auto& log : cmp.mean_init.logs) EXPECT_FALSE(log.config.emphasis);
  auto t = arms_table({cmp.mean_init, cmp.stochastic_init});
  EXPECT_EQ(t.rows.size(), cmp.mean_init.per_iteration.size() + cmp.stochastic_init.per_iteration.size());
  EXPECT_THROW(compare_init_strategies(split, cfg, {1}), Error);
}

TEST(Compare, ArmsShareTheInitialModel) {
  auto cfg = small_config();
  cfg.n_unknown = 2;
  auto split = build_open_split(synth_blobs(cfg.blob_params()), cfg);
  auto cmp = compare_init_strategies(split, cfg, seed_range(3, 2));
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(to_json(cmp.mean_init.logs[s].initial).dump(), to_json(cmp.stochastic_init.logs[s].initial).dump());
  }
}

TEST(Ablation, BothArmMatchesADirectRun) {
  auto cfg = small_config();
  cfg.n_unknown = 2;
  auto split = build_open_split(synth_blobs(cfg.blob_params()), cfg);
  auto arms = ablation_table(split, cfg, {21});
  ASSERT_EQ(arms.size(), 4u);
  EXPECT_EQ(arms[0].arm, "simple-mean");
  EXPECT_EQ(arms[3].arm, "both");
  SessionConfig direct = cfg;
  direct.train_seed = direct.init_seed = 21;
  EXPECT_EQ(to_json(arms[3].logs[0]).dump(), to_json(run_open_world(split, direct)).dump());
  EXPECT_FALSE(arms[0].logs[0].config.allometry);
  EXPECT_FALSE(arms[0].logs[0].config.emphasis);
  EXPECT_THROW(ablation_table(split, cfg, {}), Error);
}

TEST(SeedRange, Consecutive) { EXPECT_EQ(seed_range(9, 3), (std::vector<std::uint64_t>{9, 10, 11})); }
