#ifndef LUMIX_MIXING_HPP
#define LUMIX_MIXING_HPP

// Input mixing: Mixup interpolation, CutMix boxes with boundary clipping,
// patch shuffling and per-patch mixing ratios.
//
// Pixel convention: a box covers columns [x0, x0 + w) and rows [y0, y0 + h).
// Patches of a grid g are indexed row-major, p = py * g + px.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/rng.hpp"
#include "lumix/tensor.hpp"

namespace lumix {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// B images of one shape, stored as a [B, C, H, W] tensor.
class ImageBatch {
 public:
  ImageBatch() = default;
  ImageBatch(std::size_t batch, ImageShape shape)
      : shape_(shape), data_({batch, shape.channels, shape.height, shape.width}) {}
  explicit ImageBatch(Tensor data) : data_(std::move(data)) {
    detail::require(data_.rank() == 4, ErrorKind::shape_mismatch, "ImageBatch: expected [B, C, H, W]");
    shape_ = {data_.dim(1), data_.dim(2), data_.dim(3)};
    detail::require(shape_.height >= 1 && shape_.width >= 1, ErrorKind::shape_mismatch,
                    "ImageBatch: H and W must be positive");
  }

  std::size_t batch() const { return data_.empty() ? 0 : data_.dim(0); }
  const ImageShape& shape() const noexcept { return shape_; }

  std::span<double> image(std::size_t i) { return data_.slice(i); }
  std::span<const double> image(std::size_t i) const { return data_.slice(i); }

  const Tensor& tensor() const noexcept { return data_; }
  Tensor& tensor() noexcept { return data_; }

 private:
  ImageShape shape_;
  Tensor data_;
};

struct CropBox {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  std::size_t area() const noexcept { return w * h; }
  bool contains(std::size_t x, std::size_t y) const noexcept {
    return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
  }
  friend bool operator==(const CropBox&, const CropBox&) = default;
};

/// Box of extent (w, h) whose top-left corner sits at (cx - w/2, cy - h/2),
/// intersected with the H x W image. Centers may lie outside the image.
inline CropBox clip_box(std::int64_t cx, std::int64_t cy, std::size_t w, std::size_t h, std::size_t height,
                        std::size_t width) {
  auto clip_axis = [](std::int64_t center, std::size_t extent, std::size_t limit) {
    const std::int64_t lo = center - static_cast<std::int64_t>(extent / 2);
    const std::int64_t hi = lo + static_cast<std::int64_t>(extent);
    const std::int64_t a = std::clamp<std::int64_t>(lo, 0, static_cast<std::int64_t>(limit));
    const std::int64_t b = std::clamp<std::int64_t>(hi, 0, static_cast<std::int64_t>(limit));
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(a), static_cast<std::size_t>(b - a));
  };
  const auto [x0, wc] = clip_axis(cx, w, width);
  const auto [y0, hc] = clip_axis(cy, h, height);
  return {x0, y0, wc, hc};
}

inline double box_fraction(const CropBox& box, std::size_t height, std::size_t width) {
  return static_cast<double>(box.area()) / static_cast<double>(height * width);
}

/// Requested extent w = round(W sqrt(lambda)), h = round(H sqrt(lambda));
/// center column then center row drawn uniformly over the image; box
/// clipped to the image. Returns the box and its exact area fraction.
inline std::pair<CropBox, double> sample_cutmix_box(std::size_t height, std::size_t width, double lambda0_raw,
                                                    Rng& rng) {
  detail::require(lambda0_raw >= 0.0 && lambda0_raw <= 1.0, ErrorKind::invalid_argument,
                  "sample_cutmix_box: lambda must lie in [0, 1]");
  detail::require(height >= 1 && width >= 1, ErrorKind::invalid_argument, "sample_cutmix_box: empty image");
  const double side = std::sqrt(lambda0_raw);
  const auto w = static_cast<std::size_t>(std::llround(static_cast<double>(width) * side));
  const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(height) * side));
  const auto cx = static_cast<std::int64_t>(sample_index(width, rng));
  const auto cy = static_cast<std::int64_t>(sample_index(height, rng));
  const CropBox box = clip_box(cx, cy, w, h, height, width);
  return {box, box_fraction(box, height, width)};
}

namespace detail {

inline void require_same_image(std::span<const double> a, std::span<const double> b, const ImageShape& shape,
                               const char* what) {
  if (a.size() != shape.size() || b.size() != shape.size()) {
    fail(ErrorKind::shape_mismatch, std::string(what) + ": image sizes " + std::to_string(a.size()) + " and " +
                                        std::to_string(b.size()) + " do not match shape");
  }
}

inline void require_grid(const ImageShape& shape, std::size_t grid, const char* what) {
  if (grid == 0 || shape.height % grid != 0 || shape.width % grid != 0) {
    fail(ErrorKind::invalid_argument, std::string(what) + ": grid " + std::to_string(grid) +
                                          " does not divide a " + std::to_string(shape.height) + "x" +
                                          std::to_string(shape.width) + " image");
  }
}

}  // namespace detail

/// Pixels inside the box come from `a`, all others from `b`.
inline std::vector<double> apply_cutmix(std::span<const double> a, std::span<const double> b, const ImageShape& shape,
                                        const CropBox& box) {
  detail::require_same_image(a, b, shape, "apply_cutmix");
  detail::require(box.x0 + box.w <= shape.width && box.y0 + box.h <= shape.height, ErrorKind::invalid_argument,
                  "apply_cutmix: box exceeds image bounds");
  std::vector<double> out(b.begin(), b.end());
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t y = box.y0; y < box.y0 + box.h; ++y) {
      const std::size_t row = (c * shape.height + y) * shape.width;
      for (std::size_t x = box.x0; x < box.x0 + box.w; ++x) out[row + x] = a[row + x];
    }
  }
  return out;
}

inline std::vector<double> apply_mixup(std::span<const double> a, std::span<const double> b, double lambda) {
  detail::require(a.size() == b.size(), ErrorKind::shape_mismatch, "apply_mixup: image sizes differ");
  detail::require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::invalid_argument, "apply_mixup: lambda outside [0, 1]");
  std::vector<double> out(a.size());
  const double rest = 1.0 - lambda;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + rest * b[i];
  return out;
}

/// Output patch p takes source patch perm[p].
inline std::vector<double> permute_patches(std::span<const double> x, const ImageShape& shape, std::size_t grid,
                                           std::span<const std::size_t> perm) {
  detail::require_grid(shape, grid, "permute_patches");
  detail::require(x.size() == shape.size(), ErrorKind::shape_mismatch, "permute_patches: image size mismatch");
  detail::require(perm.size() == grid * grid, ErrorKind::invalid_argument, "permute_patches: bad permutation");
  const std::size_t ph = shape.height / grid, pw = shape.width / grid;
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < perm.size(); ++p) {
    const std::size_t dy = (p / grid) * ph, dx = (p % grid) * pw;
    const std::size_t sy = (perm[p] / grid) * ph, sx = (perm[p] % grid) * pw;
    for (std::size_t c = 0; c < shape.channels; ++c) {
      for (std::size_t r = 0; r < ph; ++r) {
        const double* src = x.data() + (c * shape.height + sy + r) * shape.width + sx;
        double* dst = out.data() + (c * shape.height + dy + r) * shape.width + dx;
        std::copy_n(src, pw, dst);
      }
    }
  }
  return out;
}

/// Cuts the image into grid x grid equal patches and reassembles them in a
/// uniformly random (Fisher-Yates) order.
inline std::vector<double> shuffle_patches(std::span<const double> x, const ImageShape& shape, std::size_t grid,
                                           Rng& rng) {
  detail::require_grid(shape, grid, "shuffle_patches");
  const auto perm = random_permutation(grid * grid, rng);
  return permute_patches(x, shape, grid, perm);
}

/// Mixes patch p with weight lambdas[p] on `a`.
inline std::vector<double> mix_patches(std::span<const double> a, std::span<const double> b, const ImageShape& shape,
                                       std::size_t grid, std::span<const double> lambdas) {
  detail::require_grid(shape, grid, "mix_patches");
  detail::require_same_image(a, b, shape, "mix_patches");
  detail::require(lambdas.size() == grid * grid, ErrorKind::invalid_argument, "mix_patches: one lambda per patch");
  const std::size_t ph = shape.height / grid, pw = shape.width / grid;
  std::vector<double> out(a.size());
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        const double lam = lambdas[(y / ph) * grid + x / pw];
        const std::size_t q = (c * shape.height + y) * shape.width + x;
        out[q] = lam * a[q] + (1.0 - lam) * b[q];
      }
    }
  }
  return out;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Each patch gets its own mixing ratio from `draw()`, taken in row-major
/// patch order. Returns the mixed image and the mean ratio.
template <typename LambdaSource>
std::pair<std::vector<double>, double> per_patch_lambda_mix(std::span<const double> a, std::span<const double> b,
                                                            const ImageShape& shape, std::size_t grid,
                                                            LambdaSource&& draw) {
  detail::require_grid(shape, grid, "per_patch_lambda_mix");
  std::vector<double> lambdas(grid * grid);
  for (auto& l : lambdas) l = draw();
  auto img = mix_patches(a, b, shape, grid, lambdas);
  return {std::move(img), mean_of(lambdas)};
}

inline std::pair<std::vector<double>, double> per_patch_lambda_mix(std::span<const double> a,
                                                                   std::span<const double> b,
                                                                   const ImageShape& shape, std::size_t grid,
                                                                   double alpha0, Rng& rng) {
  return per_patch_lambda_mix(a, b, shape, grid, [&] { return sample_beta(alpha0, alpha0, rng); });
}

// ---------------------------------------------------------------------------
// Batch-level plans

enum class MixMode { none, mixup, cutmix, cutmix_shuffle, cutmix_patch_lambda };

inline std::string_view to_string(MixMode m) {
  switch (m) {
    case MixMode::none: return "none";
    case MixMode::mixup: return "mixup";
    case MixMode::cutmix: return "cutmix";
    case MixMode::cutmix_shuffle: return "cutmix_shuffle";
    case MixMode::cutmix_patch_lambda: return "cutmix_patch_lambda";
  }
  return "?";
}

/// Every random decision for one batch. Sample i mixes with pairing[i];
/// lambda0[i] is the weight of sample i's own label.
struct MixPlan {
  MixMode mode = MixMode::none;
  std::vector<std::size_t> pairing;
  CropBox box;
  std::vector<double> lambda0;
  std::size_t grid = 1;
  std::vector<std::vector<std::size_t>> patch_perms;   // cutmix_shuffle
  std::vector<std::vector<double>> patch_lambdas;      // cutmix_patch_lambda
};

enum class Lambda0Dist { beta, uniform };

struct MixParams {
  double alpha0 = 0.8;
  Lambda0Dist lambda0_dist = Lambda0Dist::beta;
  std::size_t grid = 4;
};

/// Per-purpose generators consumed while building plans.
struct MixStreams {
  Rng pairing;
  Rng lambda0;
  Rng box;
  Rng patch;

  static MixStreams from_seed(std::uint64_t root) {
    return {Rng::stream(root, "pairing"), Rng::stream(root, "lambda0"), Rng::stream(root, "box"),
            Rng::stream(root, "patch")};
  }
};

inline double draw_lambda0(const MixParams& params, Rng& rng) {
  return params.lambda0_dist == Lambda0Dist::beta ? sample_beta(params.alpha0, params.alpha0, rng)
                                                  : sample_uniform(rng);
}

/// One lambda0 and one box per batch; pairing is a uniform permutation.
inline MixPlan make_mix_plan(std::size_t batch, const ImageShape& shape, MixMode mode, const MixParams& params,
                             MixStreams& streams) {
  MixPlan plan;
  plan.mode = mode;
  plan.grid = params.grid;
  if (mode == MixMode::none) {
    plan.pairing.resize(batch);
    for (std::size_t i = 0; i < batch; ++i) plan.pairing[i] = i;
    plan.lambda0.assign(batch, 1.0);
    return plan;
  }
  if (mode == MixMode::cutmix_shuffle || mode == MixMode::cutmix_patch_lambda) {
    detail::require_grid(shape, params.grid, "make_mix_plan");
  }
  plan.pairing = random_permutation(batch, streams.pairing);
  if (mode == MixMode::cutmix_patch_lambda) {
    plan.patch_lambdas.resize(batch);
    plan.lambda0.resize(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      auto& lams = plan.patch_lambdas[i];
      lams.resize(params.grid * params.grid);
      for (auto& l : lams) l = sample_beta(params.alpha0, params.alpha0, streams.lambda0);
      plan.lambda0[i] = mean_of(lams);
    }
    return plan;
  }
  const double raw = draw_lambda0(params, streams.lambda0);
  if (mode == MixMode::mixup) {
    plan.lambda0.assign(batch, raw);
    return plan;
  }
  const auto [box, frac] = sample_cutmix_box(shape.height, shape.width, raw, streams.box);
  plan.box = box;
  plan.lambda0.assign(batch, frac);
  if (mode == MixMode::cutmix_shuffle) {
    plan.patch_perms.resize(batch);
    for (auto& perm : plan.patch_perms) perm = random_permutation(params.grid * params.grid, streams.patch);
  }
  return plan;
}

/// Materialises the mixed batch described by `plan`. Pure.
inline ImageBatch apply_mix_plan(const ImageBatch& batch, const MixPlan& plan) {
  const std::size_t n = batch.batch();
  detail::require(plan.pairing.size() == n && plan.lambda0.size() == n, ErrorKind::shape_mismatch,
                  "apply_mix_plan: plan does not match batch size");
  if (plan.mode == MixMode::none) return batch;
  ImageBatch out(n, batch.shape());
  const auto& shape = batch.shape();
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = batch.image(i);
    const auto b = batch.image(plan.pairing[i]);
    std::vector<double> img;
    switch (plan.mode) {
      case MixMode::mixup: img = apply_mixup(a, b, plan.lambda0[i]); break;
      case MixMode::cutmix: img = apply_cutmix(a, b, shape, plan.box); break;
      case MixMode::cutmix_shuffle: {
        const auto mixed = apply_cutmix(a, b, shape, plan.box);
        img = permute_patches(mixed, shape, plan.grid, plan.patch_perms[i]);
        break;
      }
      case MixMode::cutmix_patch_lambda: img = mix_patches(a, b, shape, plan.grid, plan.patch_lambdas[i]); break;
      case MixMode::none: break;
    }
    std::copy(img.begin(), img.end(), out.image(i).begin());
  }
  return out;
}

}  // namespace lumix

#endif  // LUMIX_MIXING_HPP
