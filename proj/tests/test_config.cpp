#include <gtest/gtest.h>

#include "lumix/config.hpp"

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

}  // namespace

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.lumix.r1, 0.4);
  EXPECT_EQ(cfg.lumix.r2, 0.1);
  EXPECT_EQ(cfg.lumix.alpha_r, 2.0);
  EXPECT_EQ(cfg.lumix.alpha0, 0.8);
  EXPECT_EQ(cfg.lumix.eta, 1.0);
  EXPECT_EQ(cfg.lumix.smoothing_eps, 0.1);
}

TEST(Config, ParsesSectionKeysAndComments) {
  const ExperimentConfig cfg = parse_config(
      "# comment\n"
      "seed = 9\n"
      "lumix.r1 = 0.25   # trailing\n"
      "  lumix.lambda_r_dist=gaussian\n"
      "aug.mode = cutmix_shuffle\n"
      "lumix.enable_reg = off\n"
      "dataset.kind = blobs\n"
      "\n");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.lumix.r1, 0.25);
  EXPECT_EQ(cfg.lumix.lambda_r_dist, LambdaRDist::gaussian);
  EXPECT_EQ(cfg.aug, AugMode::cutmix_shuffle);
  EXPECT_FALSE(cfg.lumix.enable_reg);
  EXPECT_EQ(cfg.data.kind, DatasetKind::blobs);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(kind_of([] { parse_config("lumix.r3 = 1\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config("lumix.r1 = abc\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config("optim.epochs = -3\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config("aug.mode = puzzlemix\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config("just a line\n"); }), ErrorKind::config);
}

TEST(Config, RatioInvariant) {
  ExperimentConfig cfg;
  set_config_value(cfg, "lumix.r1", "0.8");
  set_config_value(cfg, "lumix.r2", "0.5");
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::config);
  set_config_value(cfg, "lumix.r2", "0.2");
  EXPECT_NO_THROW(cfg.validate());
  set_config_value(cfg, "lumix.eta", "-1");
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::config);
}

TEST(Config, SerializationRoundTrips) {
  ExperimentConfig cfg;
  cfg.seed = 123;
  cfg.lumix.r1 = 0.1 + 0.2;  // not exactly representable as a short decimal
  cfg.lumix.positive_set = PositiveSet::both;
  cfg.aug = AugMode::cutmix_patch_lambda;
  cfg.model.arch = ModelSpec::Arch::mlp;
  cfg.data.collage.background = Background::stripes;
  cfg.output_dir = "runs/x";
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.lumix.r1, cfg.lumix.r1);
  EXPECT_EQ(back.output_dir, "runs/x");
}

TEST(Config, EveryKeyReadsBackWhatWasWritten) {
  const ExperimentConfig cfg;
  for (const auto& k : detail::config_keys()) {
    ExperimentConfig c = cfg;
    const std::string v = get_config_value(c, k.name);
    set_config_value(c, k.name, v);
    EXPECT_EQ(get_config_value(c, k.name), v) << k.name;
  }
}
