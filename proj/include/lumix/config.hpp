#ifndef LUMIX_CONFIG_HPP
#define LUMIX_CONFIG_HPP

// Experiment configuration. Text format: one `section.key = value` per line,
// `#` starts a comment. serialize_config writes every key in a fixed order
// with round-trip precision, so a saved config reproduces its run exactly.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "lumix/data.hpp"
#include "lumix/error.hpp"
#include "lumix/lumix.hpp"
#include "lumix/nn.hpp"

namespace lumix {

enum class DatasetKind { collage, blobs, idx };
enum class AugMode { none, mixup, cutmix, cutmix_mixup, cutmix_shuffle, cutmix_patch_lambda };

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t warmup_epochs = 0;
};

struct DataConfig {
  DatasetKind kind = DatasetKind::collage;
  std::string path;  // idx: directory holding MNIST-named files
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;
  std::size_t classes = 4;
  CollageSpec collage;
  std::size_t blob_dim = 64;
  double blob_separation = 10.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelSpec model;
  OptimConfig optim;
  AugMode aug = AugMode::cutmix;
  std::size_t aug_grid = 4;
  bool lumix_enabled = true;
  LumixConfig lumix;
  std::size_t occlusion_grid = 4;
  std::string output_dir;

  void validate() const {
    lumix.validate();
    auto bad = [](const std::string& what) { detail::fail(ErrorKind::config, what); };
    if (!(optim.lr >= 0.0) || !(optim.momentum >= 0.0 && optim.momentum < 1.0) || !(optim.weight_decay >= 0.0))
      bad("optim: need lr >= 0, momentum in [0, 1), weight_decay >= 0");
    if (optim.batch_size == 0) bad("optim.batch_size must be positive");
    if (data.kind != DatasetKind::idx && (data.train_size == 0 || data.test_size == 0))
      bad("dataset sizes must be positive");
    if (data.kind == DatasetKind::idx && data.path.empty()) bad("dataset.path is required for idx datasets");
    if (data.kind != DatasetKind::idx && data.classes < 2) bad("dataset.classes must be >= 2");
    if (data.kind == DatasetKind::collage) {
      CollageSpec c = data.collage;
      c.classes = data.classes;
      c.validate();
    }
    if (data.kind == DatasetKind::blobs && data.blob_dim < data.classes) bad("blobs.dim must be >= dataset.classes");
    if (aug_grid == 0) bad("aug.grid must be positive");
    if (occlusion_grid == 0) bad("eval.occlusion_grid must be positive");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::config, key + ": expected a number, got '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::config, key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(ErrorKind::config, key + ": expected true/false, got '" + v + "'");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names) {
    if (v == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + name;
  fail(ErrorKind::config, key + ": '" + v + "' is not one of " + allowed);
}

template <typename E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

struct ConfigKey {
  const char* name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// clang-format off
#define LUMIX_NUM(KEY, FIELD) \
  ConfigKey{KEY, [](const ExperimentConfig& c) { return format_double(c.FIELD); }, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v); }}
#define LUMIX_UINT(KEY, FIELD) \
  ConfigKey{KEY, [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(parse_uint(KEY, v)); }}
#define LUMIX_BOOL(KEY, FIELD) \
  ConfigKey{KEY, [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }}
#define LUMIX_ENUM(KEY, FIELD, ...) \
  ConfigKey{KEY, [](const ExperimentConfig& c) { return enum_name<std::remove_cvref_t<decltype(c.FIELD)>>(c.FIELD, {__VA_ARGS__}); }, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_enum<std::remove_cvref_t<decltype(c.FIELD)>>(KEY, v, {__VA_ARGS__}); }}
#define LUMIX_STR(KEY, FIELD) \
  ConfigKey{KEY, [](const ExperimentConfig& c) { return c.FIELD; }, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; }}
// clang-format on

using DK = DatasetKind;
using AM = AugMode;
using BG = Background;
using MA = ModelSpec::Arch;

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      LUMIX_UINT("seed", seed),
      LUMIX_ENUM("dataset.kind", data.kind, {"collage", DK::collage}, {"blobs", DK::blobs}, {"idx", DK::idx}),
      LUMIX_STR("dataset.path", data.path),
      LUMIX_UINT("dataset.train_size", data.train_size),
      LUMIX_UINT("dataset.test_size", data.test_size),
      LUMIX_UINT("dataset.classes", data.classes),
      LUMIX_UINT("collage.canvas", data.collage.canvas),
      LUMIX_NUM("collage.min_fraction", data.collage.min_fraction),
      LUMIX_NUM("collage.max_fraction", data.collage.max_fraction),
      LUMIX_ENUM("collage.background", data.collage.background, {"smooth", BG::smooth}, {"stripes", BG::stripes},
                 {"none", BG::none}),
      LUMIX_UINT("collage.clutter", data.collage.clutter),
      LUMIX_UINT("blobs.dim", data.blob_dim),
      LUMIX_NUM("blobs.separation", data.blob_separation),
      LUMIX_ENUM("model.arch", model.arch, {"conv", MA::conv}, {"mlp", MA::mlp}, {"linear", MA::linear}),
      LUMIX_UINT("model.conv1", model.conv1),
      LUMIX_UINT("model.conv2", model.conv2),
      LUMIX_UINT("model.hidden", model.hidden),
      LUMIX_UINT("model.mlp_hidden1", model.mlp_hidden1),
      LUMIX_UINT("model.mlp_hidden2", model.mlp_hidden2),
      LUMIX_NUM("optim.lr", optim.lr),
      LUMIX_NUM("optim.momentum", optim.momentum),
      LUMIX_NUM("optim.weight_decay", optim.weight_decay),
      LUMIX_UINT("optim.epochs", optim.epochs),
      LUMIX_UINT("optim.batch_size", optim.batch_size),
      LUMIX_UINT("optim.warmup_epochs", optim.warmup_epochs),
      LUMIX_ENUM("aug.mode", aug, {"none", AM::none}, {"mixup", AM::mixup}, {"cutmix", AM::cutmix},
                 {"cutmix_mixup", AM::cutmix_mixup}, {"cutmix_shuffle", AM::cutmix_shuffle},
                 {"cutmix_patch_lambda", AM::cutmix_patch_lambda}),
      LUMIX_UINT("aug.grid", aug_grid),
      LUMIX_BOOL("lumix.enabled", lumix_enabled),
      LUMIX_NUM("lumix.alpha0", lumix.alpha0),
      LUMIX_ENUM("lumix.lambda0_dist", lumix.lambda0_dist, {"beta", Lambda0Dist::beta},
                 {"uniform", Lambda0Dist::uniform}),
      LUMIX_ENUM("lumix.lambda_r_dist", lumix.lambda_r_dist, {"beta", LambdaRDist::beta},
                 {"gaussian", LambdaRDist::gaussian}, {"none", LambdaRDist::none}),
      LUMIX_NUM("lumix.alpha_r", lumix.alpha_r),
      LUMIX_NUM("lumix.gauss_mu", lumix.gauss_mu),
      LUMIX_NUM("lumix.gauss_sigma", lumix.gauss_sigma),
      LUMIX_NUM("lumix.r1", lumix.r1),
      LUMIX_NUM("lumix.r2", lumix.r2),
      LUMIX_NUM("lumix.eta", lumix.eta),
      LUMIX_NUM("lumix.smoothing", lumix.smoothing_eps),
      LUMIX_ENUM("lumix.loss", lumix.loss_kind, {"softmax_ce", LossKind::softmax_ce}, {"bce", LossKind::bce}),
      LUMIX_BOOL("lumix.enable_lambda_s", lumix.enable_lambda_s),
      LUMIX_BOOL("lumix.enable_reg", lumix.enable_reg),
      LUMIX_ENUM("lumix.positive_set", lumix.positive_set, {"either", PositiveSet::either},
                 {"both", PositiveSet::both}),
      LUMIX_UINT("eval.occlusion_grid", occlusion_grid),
      LUMIX_STR("output.dir", output_dir),
  };
  return keys;
}

#undef LUMIX_NUM
#undef LUMIX_UINT
#undef LUMIX_BOOL
#undef LUMIX_ENUM
#undef LUMIX_STR

}  // namespace detail

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys()) {
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  }
  detail::fail(ErrorKind::config, "unknown config key '" + key + "'");
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& k : detail::config_keys()) {
    if (key == k.name) return k.get(cfg);
  }
  detail::fail(ErrorKind::config, "unknown config key '" + key + "'");
}

/// Splits "key=value" (whitespace around either side is ignored).
inline std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    detail::fail(ErrorKind::config, "expected key = value, got '" + std::string(text) + "'");
  }
  auto key = detail::trim(text.substr(0, eq));
  auto value = detail::trim(text.substr(eq + 1));
  if (key.empty()) detail::fail(ErrorKind::config, "empty key in '" + std::string(text) + "'");
  return {std::move(key), std::move(value)};
}

inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto [key, value] = split_assignment(line);
    set_config_value(cfg, key, value);
  }
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::fail(ErrorKind::io_open, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) {
    out += k.name;
    out += " = ";
    out += k.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace lumix

#endif  // LUMIX_CONFIG_HPP
