#include <gtest/gtest.h>

#include <cstring>

#include "lumix/data.hpp"
#include "lumix/experiment.hpp"
#include "test_util.hpp"

using namespace lumix;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::invalid_argument;
}

std::vector<unsigned char> idx_header(unsigned char type, std::vector<std::uint32_t> dims) {
  std::vector<unsigned char> out = {0, 0, type, static_cast<unsigned char>(dims.size())};
  for (auto d : dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(d >> s));
  return out;
}

// Histogram / moment features of each image, as a 1 x 1 x F "image".
Dataset pixel_statistics(const Dataset& ds) {
  constexpr std::size_t bins = 16;
  Dataset out;
  out.classes = ds.classes;
  out.labels = ds.labels;
  out.images = ImageBatch(ds.size(), ImageShape{1, 1, bins + 2});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto img = ds.images.image(i);
    auto f = out.images.image(i);
    double m = 0.0, m2 = 0.0;
    for (double v : img) {
      f[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(v * bins))] += 1.0 / img.size();
      m += v / img.size();
      m2 += v * v / img.size();
    }
    f[bins] = m;
    f[bins + 1] = std::sqrt(std::max(0.0, m2 - m * m));
  }
  return out;
}

}  // namespace

TEST(Idx, CanonicalMnistLayout) {
  auto bytes = idx_header(0x08, {60000, 28, 28});
  EXPECT_EQ(bytes[3], 3);
  bytes.resize(bytes.size() + 60000u * 28 * 28, 7);
  const IdxArray arr = parse_idx(bytes);
  EXPECT_EQ(arr.dims, (std::vector<std::uint32_t>{60000, 28, 28}));
  EXPECT_EQ(arr.values.size(), 60000u * 28 * 28);
  EXPECT_EQ(arr.values.back(), 7.0);
}

TEST(Idx, ErrorKindsAreDistinct) {
  EXPECT_EQ(kind_of([] { parse_idx(std::vector<unsigned char>{0, 0, 8}); }), ErrorKind::io_truncated);
  EXPECT_EQ(kind_of([] { parse_idx(std::vector<unsigned char>{0, 0, 8, 3, 0, 0}); }), ErrorKind::io_truncated);
  EXPECT_EQ(kind_of([] { parse_idx(std::vector<unsigned char>{1, 0, 8, 1, 0, 0, 0, 0}); }), ErrorKind::io_bad_magic);
  EXPECT_EQ(kind_of([] { parse_idx(std::vector<unsigned char>{0, 0, 0x42, 1, 0, 0, 0, 0}); }), ErrorKind::io_bad_magic);
  auto data = idx_header(0x08, {2, 2});
  data.resize(data.size() + 3);
  EXPECT_EQ(kind_of([&] { parse_idx(data); }), ErrorKind::io_truncated);
  data.resize(data.size() + 2);
  EXPECT_EQ(kind_of([&] { parse_idx(data); }), ErrorKind::io_dim_mismatch);
  EXPECT_EQ(kind_of([] { read_idx("/nonexistent/file.idx"); }), ErrorKind::io_open);
}

TEST(Idx, DecodesBigEndianTypes) {
  auto bytes = idx_header(0x0B, {2});
  bytes.insert(bytes.end(), {0xFF, 0xFE, 0x01, 0x00});
  EXPECT_EQ(parse_idx(bytes).values, (std::vector<double>{-2.0, 256.0}));
  auto f = idx_header(0x0D, {1});
  f.insert(f.end(), {0x3F, 0xC0, 0x00, 0x00});
  EXPECT_EQ(parse_idx(f).values[0], 1.5);
}

TEST(Idx, LabelCountMismatch) {
  testutil::TempDir dir("idx_mismatch");
  IdxArray img{IdxType::u8, {3, 2, 2}, std::vector<double>(12, 1.0)};
  IdxArray lab{IdxType::u8, {2}, {0, 1}};
  write_idx(dir.str("img"), img);
  write_idx(dir.str("lab"), lab);
  EXPECT_EQ(kind_of([&] { load_idx(dir.str("img"), dir.str("lab")); }), ErrorKind::io_dim_mismatch);
}

TEST(Idx, RoundTripIsBitIdentical) {
  testutil::TempDir dir("idx_roundtrip");
  Rng rng(1);
  IdxArray arr{IdxType::f64, {3, 4, 5}, {}};
  for (int i = 0; i < 60; ++i) arr.values.push_back(sample_gaussian(0.0, 3.0, rng));
  write_idx(dir.str("f64"), arr);
  const IdxArray back = read_idx(dir.str("f64"));
  EXPECT_EQ(back.dims, arr.dims);
  ASSERT_EQ(back.values.size(), arr.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), arr.values.data(), 60 * sizeof(double)), 0);

  // Dataset path: u8 pixels survive save/load exactly.
  Dataset ds;
  ds.classes = 3;
  ds.images = ImageBatch(3, ImageShape{1, 4, 4});
  for (auto& v : ds.images.tensor().values()) v = static_cast<double>(sample_index(256, rng)) / 255.0;
  ds.labels = {2, 0, 1};
  save_idx(ds, dir.str("img"), dir.str("lab"));
  const Dataset loaded = load_idx(dir.str("img"), dir.str("lab"), 3);
  EXPECT_EQ(loaded.labels, ds.labels);
  EXPECT_TRUE(loaded.images.tensor() == ds.images.tensor());
  EXPECT_EQ(dataset_hash(loaded), dataset_hash(ds));
}

TEST(Collage, FullFractionFillsCanvas) {
  CollageSpec spec;
  spec.min_fraction = spec.max_fraction = 1.0;
  spec.background = Background::none;
  spec.clutter = 0;
  Rng rng(2);
  const Dataset ds = gen_collage(spec, 40, rng);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto img = ds.images.image(i);
    std::size_t xmin = 99, xmax = 0, ymin = 99, ymax = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (img[y * 32 + x] <= 0.0) continue;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    // Bars span the canvas along one axis only.
    const std::size_t ext = std::max(xmax - xmin + 1, ymax - ymin + 1);
    EXPECT_GE(ext, 22u) << "label " << ds.labels[i];
    if (ds.labels[i] != 0) EXPECT_GE(std::min(xmax - xmin + 1, ymax - ymin + 1), 22u) << "label " << ds.labels[i];
  }
}

TEST(Collage, GlyphsHaveComparableInk) {
  for (std::size_t g = 0; g < 8; ++g) {
    std::size_t on = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) on += glyph_covers(g, (x + 0.5) / 32 - 1, (y + 0.5) / 32 - 1, false);
    EXPECT_NEAR(on / 4096.0, 0.4, 0.08) << "glyph " << g;
  }
}

TEST(Collage, DeterministicAndInRange) {
  CollageSpec spec;
  Rng a(3), b(3), c(4);
  const Dataset d1 = gen_collage(spec, 50, a), d2 = gen_collage(spec, 50, b), d3 = gen_collage(spec, 50, c);
  EXPECT_EQ(dataset_hash(d1), dataset_hash(d2));
  EXPECT_NE(dataset_hash(d1), dataset_hash(d3));
  for (double v : d1.images.tensor().values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  for (int l : d1.labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 4);
  }
}

TEST(Collage, RejectsBadSpec) {
  Rng rng(5);
  CollageSpec spec;
  spec.classes = 1;
  EXPECT_THROW(gen_collage(spec, 1, rng), Error);
  spec = CollageSpec{};
  spec.min_fraction = 0.5;
  spec.max_fraction = 0.2;
  EXPECT_THROW(gen_collage(spec, 1, rng), Error);
  EXPECT_THROW(gen_collage(CollageSpec{}, 0, rng), Error);
}

// Learnable by the conv net, not by a linear model on pixel statistics.
TEST(Collage, ConvLearnsButPixelStatisticsDoNot) {
  ExperimentConfig cfg;
  cfg.data.train_size = 3000;
  cfg.data.test_size = 1000;
  cfg.aug = AugMode::none;
  cfg.lumix_enabled = false;
  cfg.optim.epochs = 6;
  const DatasetPair data = make_datasets(cfg);
  const TrainingResult conv = run_training(cfg, data);
  EXPECT_GT(conv.rows.back().test_acc, 0.90);

  DatasetPair stats{pixel_statistics(data.train), pixel_statistics(data.test)};
  ExperimentConfig lin = cfg;
  lin.model.arch = ModelSpec::Arch::linear;
  lin.optim.epochs = 40;
  lin.optim.weight_decay = 0.0;
  lin.optim.lr = 0.5;
  const TrainingResult probe = run_training(lin, stats);
  EXPECT_LT(probe.rows.back().test_acc, 0.25 + 0.15);
  std::cout << "conv test acc " << conv.rows.back().test_acc << ", pixel-statistics probe "
            << probe.rows.back().test_acc << "\n";
}

TEST(Blobs, SeparatedIsLinearlySolvable) {
  ExperimentConfig cfg;
  cfg.data.kind = DatasetKind::blobs;
  cfg.data.train_size = 2000;
  cfg.data.test_size = 1000;
  cfg.model.arch = ModelSpec::Arch::linear;
  cfg.aug = AugMode::none;
  cfg.lumix_enabled = false;
  cfg.optim.epochs = 10;
  const auto r = run_training(cfg, make_datasets(cfg));
  EXPECT_GE(r.rows.back().test_acc, 0.99);
}

TEST(Blobs, ZeroSeparationIsChance) {
  ExperimentConfig cfg;
  cfg.data.kind = DatasetKind::blobs;
  cfg.data.blob_separation = 0.0;
  cfg.data.train_size = 2000;
  cfg.data.test_size = 2000;
  cfg.model.arch = ModelSpec::Arch::linear;
  cfg.aug = AugMode::none;
  cfg.lumix_enabled = false;
  cfg.optim.epochs = 5;
  const auto r = run_training(cfg, make_datasets(cfg));
  EXPECT_NEAR(r.rows.back().test_acc, 0.25, 3.0 * std::sqrt(0.25 * 0.75 / 2000));
}

TEST(Blobs, PairwiseMeanDistanceAndDeterminism) {
  Rng a(6), b(6);
  const Dataset d1 = gen_blobs(3, 30, 16, 10.0, a), d2 = gen_blobs(3, 30, 16, 10.0, b);
  EXPECT_EQ(dataset_hash(d1), dataset_hash(d2));
  EXPECT_EQ(d1.shape().height * d1.shape().width, 16u);
  EXPECT_EQ(blob_layout_height(64), 8u);
  EXPECT_EQ(blob_layout_height(10), 2u);
  EXPECT_THROW(gen_blobs(1, 10, 4, 1.0, a), Error);
}

TEST(Datasets, TrainAndTestStreamsDiffer) {
  ExperimentConfig cfg;
  cfg.data.train_size = 100;
  cfg.data.test_size = 100;
  const DatasetPair d = make_datasets(cfg);
  EXPECT_NE(dataset_hash(d.train), dataset_hash(d.test));
  EXPECT_EQ(d.train.split, "train");
  EXPECT_EQ(d.test.split, "test");
}
