#ifndef LUMIX_EXPERIMENT_HPP
#define LUMIX_EXPERIMENT_HPP

// Training and evaluation driver. Everything random is drawn from named
// sub-streams of the config seed:
//   data.train, data.test    dataset generation
//   init                     parameter initialisation
//   shuffle                  epoch order
//   mode                     CutMix / Mixup coin when both are enabled
//   pairing, lambda0, box, patch   mix plans
//   lambda_r                 label perturbation
// Metrics CSVs contain no wall-clock values; timings go to timing.csv.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lumix/config.hpp"
#include "lumix/data.hpp"
#include "lumix/lumix.hpp"
#include "lumix/mixing.hpp"
#include "lumix/nn.hpp"
#include "lumix/ppm.hpp"
#include "lumix/rng.hpp"

namespace lumix {

struct DatasetPair {
  Dataset train;
  Dataset test;
};

inline DatasetPair make_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  DatasetPair out;
  switch (d.kind) {
    case DatasetKind::collage: {
      CollageSpec spec = d.collage;
      spec.classes = d.classes;
      Rng train_rng = Rng::stream(cfg.seed, "data.train");
      Rng test_rng = Rng::stream(cfg.seed, "data.test");
      out.train = gen_collage(spec, d.train_size, train_rng);
      out.test = gen_collage(spec, d.test_size, test_rng);
      break;
    }
    case DatasetKind::blobs: {
      Rng train_rng = Rng::stream(cfg.seed, "data.train");
      Rng test_rng = Rng::stream(cfg.seed, "data.test");
      out.train = gen_blobs(d.classes, d.train_size, d.blob_dim, d.blob_separation, train_rng);
      out.test = gen_blobs(d.classes, d.test_size, d.blob_dim, d.blob_separation, test_rng);
      break;
    }
    case DatasetKind::idx: {
      const std::filesystem::path dir(d.path);
      out.train = load_idx((dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string());
      out.test = load_idx((dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string(),
                          out.train.classes);
      out.train.classes = out.test.classes = std::max(out.train.classes, out.test.classes);
      auto truncate = [](Dataset& ds, std::size_t n) {
        if (n == 0 || n >= ds.size()) return;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        ds.images = gather_images(ds, idx);
        ds.labels.resize(n);
      };
      truncate(out.train, d.train_size);
      truncate(out.test, d.test_size);
      break;
    }
  }
  out.train.split = "train";
  out.test.split = "test";
  return out;
}

struct Stat {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : std::nan(""); }
  double stddev() const {
    if (n == 0) return std::nan("");
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
  }
};

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;     // mean objective over batches (L0 + eta R)
  double base_loss = 0.0;      // mean L0
  double reg_mean = 0.0;       // mean R
  double target_entropy = 0.0; // mean entropy of the training targets
  double train_acc = 0.0;      // argmax vs dominant target class, on mixed batches
  double test_acc = 0.0;
  Stat lambda0, lambda_r, lambda_s, lambda_final;
};

inline constexpr const char* kMetricsVersion = "#lumix-metrics v1";
inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,base_loss,reg_mean,target_entropy,train_acc,test_acc,"
    "lambda0_mean,lambda0_std,lambda_r_mean,lambda_r_std,lambda_s_mean,lambda_s_std,"
    "lambda_final_mean,lambda_final_std";

inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsVersion) + "\n" + kMetricsHeader + "\n";
  for (const auto& r : rows) {
    const double values[] = {r.train_loss,         r.base_loss,          r.reg_mean,          r.target_entropy,
                             r.train_acc,          r.test_acc,           r.lambda0.mean(),    r.lambda0.stddev(),
                             r.lambda_r.mean(),    r.lambda_r.stddev(),  r.lambda_s.mean(),   r.lambda_s.stddev(),
                             r.lambda_final.mean(), r.lambda_final.stddev()};
    out += std::to_string(r.epoch);
    for (double v : values) out += "," + format_metric(v);
    out += "\n";
  }
  return out;
}

struct TrainingResult {
  std::vector<MetricsRow> rows;
  Model model;
  double initial_loss = std::nan("");  // objective on the first batch, before any update
  std::vector<double> batch_losses;
  std::vector<double> epoch_seconds;
  LambdaBreakdown last_lambda;
};

/// Accuracy of argmax predictions on `images` against `labels`.
inline double accuracy(const Model& model, const ImageBatch& images, std::span<const int> labels) {
  constexpr std::size_t chunk = 256;
  const std::size_t n = images.batch();
  if (n == 0) return std::nan("");
  const std::size_t per = images.shape().size();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    Tensor x({m, images.shape().channels, images.shape().height, images.shape().width});
    std::copy_n(images.tensor().data() + start * per, m * per, x.data());
    const Tensor logits = model.forward(x);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = logits.slice(i);
      const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

inline double evaluate(const Model& model, const Dataset& ds) { return accuracy(model, ds.images, ds.labels); }

inline double entropy(std::span<const double> row) {
  double h = 0.0;
  for (double p : row) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace detail {

inline MixMode resolve_mode(AugMode aug, Rng& mode_rng) {
  switch (aug) {
    case AugMode::none: return MixMode::none;
    case AugMode::mixup: return MixMode::mixup;
    case AugMode::cutmix: return MixMode::cutmix;
    case AugMode::cutmix_shuffle: return MixMode::cutmix_shuffle;
    case AugMode::cutmix_patch_lambda: return MixMode::cutmix_patch_lambda;
    case AugMode::cutmix_mixup: return sample_uniform(mode_rng) < 0.5 ? MixMode::mixup : MixMode::cutmix;
  }
  return MixMode::none;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io_open, "cannot write " + path.string());
  out << text;
}

inline std::string describe(const LambdaBreakdown& l) {
  return "lambda0=" + format_metric(l.lambda0) + " lambda_r=" + format_metric(l.lambda_r) +
         " lambda_s=" + format_metric(l.lambda_s) + " lambda_final=" + format_metric(l.lambda_final);
}

}  // namespace detail

struct TrainingOptions {
  bool record_batch_losses = false;
  std::size_t dump_mixed = 0;  // write this many mixed samples of the first batch as PPM
};

inline TrainingResult run_training(const ExperimentConfig& cfg, const DatasetPair& data,
                                   const TrainingOptions& opts = {}) {
  cfg.validate();
  const Dataset& train = data.train;
  const std::size_t classes = train.classes;
  const ImageShape shape = train.shape();
  detail::require(train.size() > 0, ErrorKind::invalid_argument, "run_training: empty training set");

  TrainingResult result;
  Rng init_rng = Rng::stream(cfg.seed, "init");
  result.model = build_model(cfg.model, {shape.channels, shape.height, shape.width}, classes, init_rng);
  Model& model = result.model;

  Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  Rng mode_rng = Rng::stream(cfg.seed, "mode");
  Rng lambda_r_rng = Rng::stream(cfg.seed, "lambda_r");
  MixStreams mix = MixStreams::from_seed(cfg.seed);
  const MixParams params{cfg.lumix.alpha0, cfg.lumix.lambda0_dist, cfg.aug_grid};

  const std::size_t n = train.size();
  const std::size_t bs = cfg.optim.batch_size;
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::size_t warmup_steps = cfg.optim.warmup_epochs * steps_per_epoch;
  std::size_t step = 0;
  Tape tape;
  const std::filesystem::path outdir(cfg.output_dir);
  auto diverge = [&](std::size_t epoch, const char* what) {
    const std::string diag = std::string("non-finite ") + what + " at epoch " + std::to_string(epoch + 1) + " step " +
                             std::to_string(step) + "; last " + detail::describe(result.last_lambda);
    if (!cfg.output_dir.empty()) {
      std::filesystem::create_directories(outdir);
      detail::write_text(outdir / "diagnostics.txt", serialize_config(cfg) + "# " + diag + "\n");
    }
    detail::fail(ErrorKind::numeric_divergence, diag);
  };

  for (std::size_t epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = random_permutation(n, shuffle_rng);
    MetricsRow row;
    row.epoch = epoch + 1;
    Stat loss_stat, base_stat, reg_stat, ent_stat;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t m = std::min(bs, n - start);
      const std::span<const std::size_t> idx(order.data() + start, m);
      const ImageBatch x = gather_images(train, idx);
      std::vector<int> cls(m);
      for (std::size_t i = 0; i < m; ++i) cls[i] = train.labels[idx[i]];
      const LabelBatch labels_a = build_labels(cls, classes, cfg.lumix.smoothing_eps);

      const MixMode mode = detail::resolve_mode(cfg.aug, mode_rng);
      const MixPlan plan = make_mix_plan(m, shape, mode, params, mix);
      const ImageBatch mixed = apply_mix_plan(x, plan);
      if (epoch == 0 && start == 0 && opts.dump_mixed > 0 && !cfg.output_dir.empty()) {
        std::filesystem::create_directories(outdir);
        for (std::size_t i = 0; i < std::min(opts.dump_mixed, m); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "mixed_%03zu.ppm", i);
          write_ppm((outdir / name).string(), mixed.image(i), shape);
        }
      }
      const LabelBatch labels_b = gather_rows(labels_a, plan.pairing);

      const Tensor logits = model.forward(mixed.tensor(), &tape);
      if (!logits.all_finite()) diverge(epoch, "logits");
      LossOutput loss;
      LabelBatch targets;
      double base = 0.0, reg = 0.0;
      if (cfg.lumix_enabled) {
        LumixResult r = lumix_loss(logits, labels_a, labels_b, plan, cfg.lumix, lambda_r_rng);
        loss = std::move(r.loss);
        base = r.base_loss;
        reg = r.reg;
        for (const auto& l : r.targets.lambdas) {
          row.lambda0.add(l.lambda0);
          if (!std::isnan(l.lambda_r)) row.lambda_r.add(l.lambda_r);
          row.lambda_s.add(l.lambda_s);
          row.lambda_final.add(l.lambda_final);
        }
        result.last_lambda = r.targets.lambdas.back();
        targets = std::move(r.targets.mixed);
      } else {
        targets = mixed_targets(labels_a, labels_b, plan.lambda0);
        loss = cfg.lumix.loss_kind == LossKind::softmax_ce ? soft_ce_loss(logits, targets) : bce_loss(logits, targets);
        base = loss.value;
        for (double l0 : plan.lambda0) {
          row.lambda0.add(l0);
          row.lambda_final.add(l0);
        }
        result.last_lambda = {plan.lambda0.back(), std::nan(""), std::nan(""), plan.lambda0.back()};
      }

      if (!std::isfinite(loss.value) || !loss.logits_grad.all_finite()) diverge(epoch, "loss");
      if (step == 0) result.initial_loss = loss.value;
      if (opts.record_batch_losses) result.batch_losses.push_back(loss.value);

      for (std::size_t i = 0; i < m; ++i) {
        const auto z = logits.slice(i);
        const auto y = targets.row(i);
        const auto pred = std::max_element(z.begin(), z.end()) - z.begin();
        const auto dom = std::max_element(y.begin(), y.end()) - y.begin();
        if (pred == dom) ++correct;
        ent_stat.add(entropy(y));
      }
      loss_stat.add(loss.value);
      base_stat.add(base);
      reg_stat.add(reg);

      model.zero_grad();
      model.backward(tape, loss.logits_grad);
      double lr = cfg.optim.lr;
      if (warmup_steps > 0 && step < warmup_steps) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
      }
      sgd_step(model, lr, cfg.optim.momentum, cfg.optim.weight_decay);
      ++step;
    }

    row.train_loss = loss_stat.mean();
    row.base_loss = base_stat.mean();
    row.reg_mean = reg_stat.mean();
    row.target_entropy = ent_stat.mean();
    row.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    row.test_acc = data.test.size() ? evaluate(model, data.test) : std::nan("");
    result.rows.push_back(row);
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return result;
}

/// Writes config.cfg, metrics.csv, timing.csv and model.bin into cfg.output_dir.
inline void write_run_outputs(const ExperimentConfig& cfg, const TrainingResult& result) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "config.cfg", serialize_config(cfg));
  detail::write_text(dir / "metrics.csv", metrics_csv(result.rows));
  std::string timing = "epoch,seconds\n";
  for (std::size_t i = 0; i < result.epoch_seconds.size(); ++i) {
    timing += std::to_string(i + 1) + "," + format_metric(result.epoch_seconds[i]) + "\n";
  }
  detail::write_text(dir / "timing.csv", timing);
  std::ofstream model_out(dir / "model.bin", std::ios::binary);
  save_model(result.model, model_out);
}

// ---------------------------------------------------------------------------
// Robustness evaluation

enum class OcclusionMode { random, salient_proxy, nonsalient_proxy };

inline std::string_view to_string(OcclusionMode m) {
  switch (m) {
    case OcclusionMode::random: return "random";
    case OcclusionMode::salient_proxy: return "salient_proxy";
    case OcclusionMode::nonsalient_proxy: return "nonsalient_proxy";
  }
  return "?";
}

/// Saliency source used by the salient / non-salient modes.
inline constexpr const char* kSaliencySource = "input_gradient";

/// Per-patch saliency: sum over the patch of |d logit_pred / d input|,
/// where pred is the model's own prediction on the clean image.
inline std::vector<std::vector<double>> patch_saliency(const Model& model, const ImageBatch& images,
                                                       std::size_t grid) {
  const ImageShape& s = images.shape();
  detail::require_grid(s, grid, "patch_saliency");
  Model probe = model;
  const std::size_t n = images.batch();
  const std::size_t per = s.size();
  const std::size_t ph = s.height / grid, pw = s.width / grid;
  std::vector<std::vector<double>> out(n, std::vector<double>(grid * grid, 0.0));
  constexpr std::size_t chunk = 128;
  Tape tape;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    Tensor x({m, s.channels, s.height, s.width});
    std::copy_n(images.tensor().data() + start * per, m * per, x.data());
    const Tensor logits = probe.forward(x, &tape);
    Tensor g(logits.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = logits.slice(i);
      g.at(i, static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())) = 1.0;
    }
    const Tensor dx = probe.backward(tape, g, true);
    for (std::size_t i = 0; i < m; ++i) {
      const auto d = dx.slice(i);
      auto& sal = out[start + i];
      for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = 0; y < s.height; ++y) {
          for (std::size_t xx = 0; xx < s.width; ++xx) {
            sal[(y / ph) * grid + xx / pw] += std::abs(d[(c * s.height + y) * s.width + xx]);
          }
        }
      }
    }
  }
  return out;
}

inline std::size_t patches_to_drop(double info_loss_fraction, std::size_t patches) {
  return static_cast<std::size_t>(std::llround(info_loss_fraction * static_cast<double>(patches)));
}

/// Copy of `images` with round(fraction * grid^2) patches per image set to
/// zero. Random mode drops a prefix of a per-image permutation (stream
/// "occlusion", index = image), so the dropped sets are nested across
/// fractions. Saliency modes drop the highest- / lowest-saliency patches.
inline ImageBatch occlude_images(const ImageBatch& images, double info_loss_fraction, OcclusionMode mode,
                                 std::size_t grid, std::uint64_t seed,
                                 const std::vector<std::vector<double>>* saliency) {
  if (!(info_loss_fraction >= 0.0 && info_loss_fraction <= 1.0)) {
    detail::fail(ErrorKind::invalid_argument, "occlusion: information loss must lie in [0, 1]");
  }
  const ImageShape& s = images.shape();
  detail::require_grid(s, grid, "occlusion");
  const std::size_t patches = grid * grid;
  const std::size_t k = patches_to_drop(info_loss_fraction, patches);
  if (mode != OcclusionMode::random) {
    detail::require(saliency != nullptr && saliency->size() == images.batch(), ErrorKind::invalid_argument,
                    "occlusion: saliency ranking needs one score vector per image");
  }
  const std::size_t ph = s.height / grid, pw = s.width / grid;
  ImageBatch masked = images;
  for (std::size_t i = 0; i < images.batch() && k > 0; ++i) {
    std::vector<std::size_t> order;
    if (mode == OcclusionMode::random) {
      Rng rng = Rng::stream(seed, "occlusion", i);
      order = random_permutation(patches, rng);
    } else {
      order.resize(patches);
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto& sal = (*saliency)[i];
      if (mode == OcclusionMode::salient_proxy) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sal[a] > sal[b]; });
      } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sal[a] < sal[b]; });
      }
    }
    auto img = masked.image(i);
    for (std::size_t q = 0; q < k; ++q) {
      const std::size_t p = order[q];
      const std::size_t y0 = (p / grid) * ph, x0 = (p % grid) * pw;
      for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = y0; y < y0 + ph; ++y) {
          std::fill_n(img.data() + (c * s.height + y) * s.width + x0, pw, 0.0);
        }
      }
    }
  }
  return masked;
}

/// Test accuracy after occlusion. Fraction 0 is plain evaluation.
inline double eval_occlusion(const Model& model, const Dataset& ds, double info_loss_fraction, OcclusionMode mode,
                             std::size_t grid, std::uint64_t seed,
                             const std::vector<std::vector<double>>* saliency = nullptr) {
  if (!(info_loss_fraction >= 0.0 && info_loss_fraction <= 1.0)) {
    detail::fail(ErrorKind::invalid_argument, "eval_occlusion: information loss must lie in [0, 1]");
  }
  detail::require_grid(ds.shape(), grid, "eval_occlusion");
  if (patches_to_drop(info_loss_fraction, grid * grid) == 0) return evaluate(model, ds);
  std::vector<std::vector<double>> own;
  if (mode != OcclusionMode::random && saliency == nullptr) {
    own = patch_saliency(model, ds.images, grid);
    saliency = &own;
  }
  return accuracy(model, occlude_images(ds.images, info_loss_fraction, mode, grid, seed, saliency), ds.labels);
}

inline constexpr const char* kOcclusionHeader = "#lumix-occlusion v1\nmode,saliency_source,info_loss,accuracy\n";

inline std::string occlusion_csv(const Model& model, const Dataset& test, const std::vector<OcclusionMode>& modes,
                                 const std::vector<double>& fractions, std::size_t grid, std::uint64_t seed) {
  std::string out = kOcclusionHeader;
  std::vector<std::vector<double>> saliency;
  for (OcclusionMode m : modes) {
    if (m != OcclusionMode::random && saliency.empty()) saliency = patch_saliency(model, test.images, grid);
    for (double f : fractions) {
      const double acc = eval_occlusion(model, test, f, m, grid, seed, saliency.empty() ? nullptr : &saliency);
      out += std::string(to_string(m)) + "," + (m == OcclusionMode::random ? "none" : kSaliencySource) + "," +
             format_metric(f) + "," + format_metric(acc) + "\n";
    }
  }
  return out;
}

/// Accuracy with every test image patch-shuffled (fresh permutation per
/// image from stream "shuffle_eval", index = image). Grid 1 is the identity.
inline double eval_shuffle(const Model& model, const Dataset& ds, std::size_t grid, std::uint64_t seed) {
  const ImageShape& s = ds.shape();
  detail::require_grid(s, grid, "eval_shuffle");
  if (grid == 1) return evaluate(model, ds);
  ImageBatch shuffled(ds.size(), s);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng = Rng::stream(seed, "shuffle_eval", i);
    const auto img = shuffle_patches(ds.images.image(i), s, grid, rng);
    std::copy(img.begin(), img.end(), shuffled.image(i).begin());
  }
  return accuracy(model, shuffled, ds.labels);
}

// ---------------------------------------------------------------------------
// Sweeps
//
// Sweep file format (one directive per line, '#' comments):
//   seeds = 0 1 2 3 4
//   cell <name> key=value key=value ...
// A sweep with no cells runs the base config as a single cell "base".

struct SweepCell {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct SweepSpec {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<SweepCell> cells;
};

inline SweepSpec parse_sweep(std::string_view text) {
  SweepSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::istringstream words(t);
    std::string head;
    words >> head;
    if (head == "cell") {
      SweepCell cell;
      if (!(words >> cell.name)) detail::fail(ErrorKind::config, "sweep: cell needs a name");
      std::string tok;
      while (words >> tok) cell.overrides.push_back(split_assignment(tok));
      spec.cells.push_back(std::move(cell));
    } else if (t.rfind("seeds", 0) == 0) {
      const auto [key, value] = split_assignment(t);
      if (key != "seeds") detail::fail(ErrorKind::config, "sweep: unknown directive '" + key + "'");
      spec.seeds.clear();
      std::string list = value;
      std::replace(list.begin(), list.end(), ',', ' ');
      std::istringstream vs(list);
      std::string s;
      while (vs >> s) spec.seeds.push_back(detail::parse_uint("seeds", s));
      if (spec.seeds.empty()) detail::fail(ErrorKind::config, "sweep: empty seed list");
    } else {
      detail::fail(ErrorKind::config, "sweep: unknown directive '" + head + "'");
    }
  }
  return spec;
}

struct SweepRow {
  std::string cell;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_acc;
  std::vector<double> train_loss;
  std::vector<double> lambda_final;
  std::vector<double> reg;
  std::string overrides;
};

/// Sample mean and (n-1) standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline constexpr const char* kSweepHeader =
    "cell,n_seeds,test_acc_mean,test_acc_std,train_loss_mean,train_loss_std,lambda_final_mean,reg_mean,overrides";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string("#lumix-sweep v1\n") + kSweepHeader + "\n";
  for (const auto& r : rows) {
    const auto [am, as] = mean_std(r.test_acc);
    const auto [lm, ls] = mean_std(r.train_loss);
    const auto [fm, fs] = mean_std(r.lambda_final);
    const auto [rm, rs] = mean_std(r.reg);
    (void)fs;
    (void)rs;
    out += r.cell + "," + std::to_string(r.seeds.size()) + "," + format_metric(am) + "," + format_metric(as) + "," +
           format_metric(lm) + "," + format_metric(ls) + "," + format_metric(fm) + "," + format_metric(rm) + "," +
           r.overrides + "\n";
  }
  return out;
}

/// Worker count for sweeps: LUMIX_THREADS when set, else hardware concurrency.
inline std::size_t sweep_threads() {
  if (const char* env = std::getenv("LUMIX_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..count-1) on up to `threads` workers.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// One training run per (cell, seed); results aggregated per cell in cell order.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                       std::size_t threads = sweep_threads()) {
  std::vector<SweepCell> cells = spec.cells;
  if (cells.empty()) cells.push_back({"base", {}});
  std::vector<ExperimentConfig> cfgs;
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) {
    SweepRow row;
    row.cell = cell.name;
    row.seeds = spec.seeds;
    for (const auto& [k, v] : cell.overrides) {
      if (!row.overrides.empty()) row.overrides += ";";
      row.overrides += k + "=" + v;
    }
    for (std::uint64_t seed : spec.seeds) {
      ExperimentConfig cfg = base;
      cfg.output_dir.clear();
      for (const auto& [k, v] : cell.overrides) set_config_value(cfg, k, v);
      cfg.seed = seed;
      cfg.validate();
      cfgs.push_back(std::move(cfg));
    }
    row.test_acc.resize(spec.seeds.size());
    row.train_loss.resize(spec.seeds.size());
    row.lambda_final.resize(spec.seeds.size());
    row.reg.resize(spec.seeds.size());
    rows.push_back(std::move(row));
  }
  const std::size_t per_cell = spec.seeds.size();
  parallel_for(cfgs.size(), threads, [&](std::size_t job) {
    const auto& cfg = cfgs[job];
    const DatasetPair data = make_datasets(cfg);
    const TrainingResult r = run_training(cfg, data);
    auto& row = rows[job / per_cell];
    const std::size_t s = job % per_cell;
    if (r.rows.empty()) {
      row.test_acc[s] = evaluate(r.model, data.test);
      row.train_loss[s] = row.lambda_final[s] = row.reg[s] = std::nan("");
    } else {
      row.test_acc[s] = r.rows.back().test_acc;
      row.train_loss[s] = r.rows.back().train_loss;
      row.lambda_final[s] = r.rows.back().lambda_final.mean();
      row.reg[s] = r.rows.back().reg_mean;
    }
  });
  return rows;
}

}  // namespace lumix

#endif  // LUMIX_EXPERIMENT_HPP
