#include <gtest/gtest.h>

#include <cmath>

#include "mpcnn/errors.hpp"
#include "mpcnn/synthetic.hpp"
#include "mpcnn/training.hpp"

using namespace mpcnn;

namespace {

LabeledImages small_shapes(std::size_t classes, std::size_t per_class, std::uint64_t seed, std::size_t size = 20) {
  ShapeSetOptions opt;
  opt.size = size;
  return make_shape_dataset(classes, per_class, opt, seed);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.val_freq = 2;
  cfg.crop = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Plateau, StrictlyImprovingKeepsRate) {
  const std::vector<double> h{0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  EXPECT_DOUBLE_EQ(lr_plateau_step(h, 0.01, 3), 0.01);
}

TEST(Plateau, FlatWindowDecaysOnce) {
  const std::vector<double> h{0.5, 0.5, 0.5};
  EXPECT_NEAR(lr_plateau_step(h, 0.01, 3), 0.001, 1e-15);
  const std::vector<double> short_h{0.5, 0.5};
  EXPECT_DOUBLE_EQ(lr_plateau_step(short_h, 0.01, 3), 0.01);
}

TEST(Plateau, ImprovementBelowThresholdDoesNotCount) {
  const std::vector<double> h{0.5, 0.4995, 0.4992, 0.4991};
  EXPECT_NEAR(lr_plateau_step(h, 0.01, 3), 0.001, 1e-15);
  const std::vector<double> better{0.5, 0.5, 0.5, 0.49};
  EXPECT_DOUBLE_EQ(lr_plateau_step(better, 0.01, 3), 0.01);
}

TEST(Plateau, SchedulerDecaysTwiceOverTwoFlatWindows) {
  PlateauScheduler s{0.01, 3, 0.001, 0.1, {}};
  std::vector<double> rates;
  for (int i = 0; i < 6; ++i) rates.push_back(s.observe(0.5));
  EXPECT_DOUBLE_EQ(rates[1], 0.01);
  EXPECT_NEAR(rates[2], 0.001, 1e-15);
  // no second decay until a full new window has been seen
  EXPECT_NEAR(rates[3], 0.001, 1e-15);
  EXPECT_NEAR(rates[4], 0.001, 1e-15);
  EXPECT_NEAR(rates[5], 0.0001, 1e-15);
}

TEST(Plateau, RandomHistoriesNeverDecayWhileImproving) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    PlateauScheduler s{0.01, 3, 0.001, 0.1, {}};
    double err = 1.0;
    for (int i = 0; i < 30; ++i) {
      err -= rng.uniform(0.0015, 0.01);
      EXPECT_DOUBLE_EQ(s.observe(err), 0.01);
    }
  }
}

TEST(TrainConfigCheck, RejectsBadValues) {
  auto cfg = small_config();
  EXPECT_NO_THROW(validate(cfg));
  auto bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(validate(bad), Error);
  bad = cfg;
  bad.lr_decay = 1.0;
  EXPECT_THROW(validate(bad), Error);
  bad = cfg;
  bad.learning_rate = -1;
  EXPECT_THROW(validate(bad), Error);
  bad = cfg;
  bad.momentum = 1.5;
  EXPECT_THROW(validate(bad), Error);
}

TEST(Metrics, TableHasFixedHeader) {
  const std::vector<MetricsRow> rows{{1, 10, "train", 1.5, 0.25, 0.0}, {1, 10, "val", 2.0, 0.5, 0.125}};
  const auto t = metrics_table(rows);
  ASSERT_EQ(t.header.size(), 6u);
  EXPECT_EQ(t.header[0], "epoch");
  EXPECT_EQ(t.header[5], "top5_error");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][2], "val");
  EXPECT_EQ(t.rows[1][4], "0.500000");
}

TEST(Batches, WorkerCountDoesNotChangeTheBatch) {
  const auto data = small_shapes(3, 4, 11);
  std::vector<ImageU8> bil;
  for (const auto& img : data.images) bil.push_back(bilateral_filter(img, {}));
  MemoryImageSet set(data.images, data.labels, bil);
  const auto means = compute_means(set, true);
  const std::vector<std::size_t> idx{0, 3, 5, 7, 11, 2};
  const CropPolicy policy{16, true, 99};
  const auto one = assemble_batch(set, idx, means, true, policy, 1);
  const auto four = assemble_batch(set, idx, means, true, policy, 4);
  EXPECT_EQ(one.source.data().size(), four.source.data().size());
  EXPECT_TRUE(std::equal(one.source.data().begin(), one.source.data().end(), four.source.data().begin()));
  EXPECT_TRUE(std::equal(one.bilateral.data().begin(), one.bilateral.data().end(), four.bilateral.data().begin()));
  EXPECT_EQ(one.labels, four.labels);
}

TEST(Batches, SourceAndBilateralShareTheWindow) {
  // with identical source and "bilateral" images, the two crops must agree
  const auto data = small_shapes(2, 3, 12);
  MemoryImageSet set(data.images, data.labels, data.images);
  const auto means = compute_means(set, true);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  const auto b = assemble_batch(set, idx, means, true, {16, true, 4}, 2);
  EXPECT_TRUE(std::equal(b.source.data().begin(), b.source.data().end(), b.bilateral.data().begin()));
}

TEST(Batches, MissingBilateralMeanIsRejected) {
  const auto data = small_shapes(2, 2, 1);
  MemoryImageSet set(data.images, data.labels, data.images);
  const auto means = compute_means(set, false);
  const std::vector<std::size_t> idx{0};
  EXPECT_THROW(assemble_batch(set, idx, means, true, {16, false, 0}), Error);
}

TEST(Evaluate, EmptySetIsADataError) {
  MemoryImageSet empty({}, {});
  const auto data = small_shapes(2, 2, 1);
  MemoryImageSet set(data.images, data.labels);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(2, 1, 16), 1);
  try {
    evaluate(net, empty, means, 16);
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
    EXPECT_TRUE(e.is_data_error());
  }
}

TEST(Evaluate, ErrorsLieInUnitRangeAndTop5BelowTop1) {
  const auto data = small_shapes(6, 3, 2);
  MemoryImageSet set(data.images, data.labels);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(6, 1, 16), 3);
  const auto r = evaluate(net, set, means, 16, 5);
  EXPECT_EQ(r.count, 18u);
  EXPECT_GE(r.top1_error, 0.0);
  EXPECT_LE(r.top1_error, 1.0);
  EXPECT_LE(r.top5_error, r.top1_error);
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Trainer, OutOfRangeLabelIsRejected) {
  auto data = small_shapes(2, 2, 1);
  data.labels[1] = 7;
  MemoryImageSet set(data.images, data.labels);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(2, 1, 16), 1);
  try {
    Trainer t(net, set, nullptr, small_config(), means);
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidLabel);
  }
}

TEST(Trainer, CropMustMatchTheNetwork) {
  const auto data = small_shapes(2, 2, 1);
  MemoryImageSet set(data.images, data.labels);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(2, 1, 18), 1);
  EXPECT_THROW(Trainer(net, set, nullptr, small_config(), means), Error);
}

TEST(Trainer, TwoPathNetNeedsBilateralMean) {
  const auto data = small_shapes(2, 2, 1);
  MemoryImageSet set(data.images, data.labels, data.images);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(2, 2, 16), 1);
  EXPECT_THROW(Trainer(net, set, nullptr, small_config(), means), Error);
}

TEST(Trainer, ValidationCadenceAndRowLayout) {
  const auto train = small_shapes(3, 8, 21);
  const auto val = small_shapes(3, 2, 22);
  MemoryImageSet ts(train.images, train.labels), vs(val.images, val.labels);
  const auto means = compute_means(ts, false);
  Network<float> net(build_compact_architecture(3, 1, 16), 1);
  auto cfg = small_config();
  Trainer t(net, ts, &vs, cfg, means);
  t.run();
  // 24 images / batch 8 = 3 batches per epoch, 6 in total; val every 2 batches
  EXPECT_EQ(t.state().batch, 6u);
  EXPECT_EQ(t.state().epoch, 2u);
  EXPECT_EQ(t.state().validations, 3u);
  ASSERT_EQ(t.state().metrics.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& row = t.state().metrics[i];
    EXPECT_EQ(row.split, i % 2 == 0 ? "train" : "val");
    EXPECT_EQ(row.batch, 2 * (i / 2 + 1));
    EXPECT_GE(row.top1_error, 0.0);
    EXPECT_LE(row.top1_error, 1.0);
  }
  EXPECT_EQ(t.batch_losses().size(), 6u);
}

TEST(Trainer, SameSeedGivesIdenticalRuns) {
  const auto train = small_shapes(3, 8, 31);
  const auto val = small_shapes(3, 2, 32);
  MemoryImageSet ts(train.images, train.labels), vs(val.images, val.labels);
  const auto means = compute_means(ts, false);
  auto run = [&](std::size_t workers) {
    Network<float> net(build_compact_architecture(3, 1, 16), 8);
    auto cfg = small_config();
    cfg.workers = workers;
    Trainer t(net, ts, &vs, cfg, means);
    t.run();
    return std::make_pair(t.state().metrics, net.params());
  };
  const auto a = run(1), b = run(1), c = run(3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.first, c.first);
  for (std::size_t i = 0; i < a.second.size(); ++i) {
    EXPECT_TRUE(std::equal(a.second[i].data().begin(), a.second[i].data().end(), b.second[i].data().begin()));
    EXPECT_TRUE(std::equal(a.second[i].data().begin(), a.second[i].data().end(), c.second[i].data().begin()));
  }
}

TEST(Trainer, LossFallsOnASmallSet) {
  const auto data = small_shapes(4, 6, 41);
  MemoryImageSet set(data.images, data.labels);
  const auto means = compute_means(set, false);
  Network<float> net(build_compact_architecture(4, 1, 16), 2);
  const double before = evaluate(net, set, means, 16).loss;
  auto cfg = small_config();
  cfg.epochs = 15;
  cfg.val_freq = 1000;
  Trainer t(net, set, nullptr, cfg, means);
  t.run();
  EXPECT_LT(evaluate(net, set, means, 16).loss, before);
}

TEST(Trainer, ManifestSetFiltersOnTheFly) {
  const auto dir = std::filesystem::temp_directory_path() / "mpcnn_training_manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto data = small_shapes(2, 2, 3, 24);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const auto p = dir / ("img" + std::to_string(i) + ".ppm");
    write_ppm(p, data.images[i]);
    ManifestEntry e;
    e.path = p;
    e.label = data.labels[i];
    entries.push_back(e);
  }
  ManifestImageSet set(entries, 24);
  EXPECT_EQ(set.size(), 4u);
  EXPECT_EQ(set.source(1).pixels, data.images[1].pixels);
  EXPECT_EQ(set.bilateral(2).pixels, bilateral_filter(data.images[2], {}).pixels);
  std::filesystem::remove_all(dir);
}
