#ifndef LUMIX_DATA_HPP
#define LUMIX_DATA_HPP

// Datasets: IDX files (the MNIST container) and two synthetic generators.
//
// The collage generator draws one class-defining glyph per image at a
// random position and scale over textured clutter, so a CutMix crop often
// misses the object entirely.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/mixing.hpp"
#include "lumix/rng.hpp"

namespace lumix {

struct Dataset {
  ImageBatch images;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  const ImageShape& shape() const noexcept { return images.shape(); }

  void validate() const {
    detail::require(images.batch() == labels.size(), ErrorKind::io_dim_mismatch,
                    "dataset: image count differs from label count");
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= classes) {
        detail::fail(ErrorKind::invalid_argument, "dataset: label " + std::to_string(l) + " outside class range");
      }
    }
  }
};

/// Copies the listed samples into a new batch.
inline ImageBatch gather_images(const Dataset& ds, std::span<const std::size_t> idx) {
  ImageBatch out(idx.size(), ds.shape());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = ds.images.image(idx[i]);
    std::copy(src.begin(), src.end(), out.image(i).begin());
  }
  return out;
}

/// FNV-1a over labels and raw pixel bytes.
inline std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  eat(ds.labels.data(), ds.labels.size() * sizeof(int));
  eat(ds.images.tensor().data(), ds.images.tensor().size() * sizeof(double));
  return h;
}

// ---------------------------------------------------------------------------
// IDX container: bytes 0-1 zero, byte 2 element type, byte 3 rank, then rank
// big-endian u32 dimensions, then big-endian elements.

enum class IdxType : std::uint8_t {
  u8 = 0x08,
  i8 = 0x09,
  i16 = 0x0B,
  i32 = 0x0C,
  f32 = 0x0D,
  f64 = 0x0E,
};

struct IdxArray {
  IdxType type = IdxType::u8;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // raw element values, unscaled
};

namespace detail {

inline std::size_t idx_element_size(std::uint8_t type) {
  switch (type) {
    case 0x08:
    case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C:
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

inline std::uint64_t read_be(const unsigned char* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

inline double decode_idx(std::uint8_t type, const unsigned char* p) {
  switch (type) {
    case 0x08: return static_cast<double>(p[0]);
    case 0x09: return static_cast<double>(static_cast<std::int8_t>(p[0]));
    case 0x0B: return static_cast<double>(static_cast<std::int16_t>(read_be(p, 2)));
    case 0x0C: return static_cast<double>(static_cast<std::int32_t>(read_be(p, 4)));
    case 0x0D: {
      const auto bits = static_cast<std::uint32_t>(read_be(p, 4));
      float f;
      std::memcpy(&f, &bits, 4);
      return f;
    }
    case 0x0E: {
      const auto bits = read_be(p, 8);
      double d;
      std::memcpy(&d, &bits, 8);
      return d;
    }
    default: return 0.0;
  }
}

inline void put_be(std::vector<unsigned char>& out, std::uint64_t v, std::size_t n) {
  for (std::size_t i = n; i-- > 0;) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

inline IdxArray parse_idx(std::span<const unsigned char> bytes, const std::string& name = "idx") {
  if (bytes.size() < 4) detail::fail(ErrorKind::io_truncated, name + ": truncated header");
  if (bytes[0] != 0 || bytes[1] != 0 || detail::idx_element_size(bytes[2]) == 0 || bytes[3] == 0) {
    detail::fail(ErrorKind::io_bad_magic, name + ": bad IDX magic");
  }
  const std::uint8_t type = bytes[2];
  const std::size_t rank = bytes[3];
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) detail::fail(ErrorKind::io_truncated, name + ": truncated header");
  IdxArray arr;
  arr.type = static_cast<IdxType>(type);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    arr.dims.push_back(static_cast<std::uint32_t>(detail::read_be(&bytes[4 + 4 * i], 4)));
    count *= arr.dims.back();
  }
  const std::size_t esize = detail::idx_element_size(type);
  if (bytes.size() < header + count * esize) detail::fail(ErrorKind::io_truncated, name + ": truncated data");
  if (bytes.size() > header + count * esize) {
    detail::fail(ErrorKind::io_dim_mismatch, name + ": file is longer than its dimensions imply");
  }
  arr.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) arr.values[i] = detail::decode_idx(type, &bytes[header + i * esize]);
  return arr;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail(ErrorKind::io_open, "cannot open " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline IdxArray read_idx(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_idx(bytes, path);
}

/// Encodes u8 or f64 arrays; other element types are read-only here.
inline std::vector<unsigned char> encode_idx(const IdxArray& arr) {
  detail::require(arr.type == IdxType::u8 || arr.type == IdxType::f64, ErrorKind::invalid_argument,
                  "encode_idx: only u8 and f64 are written");
  std::vector<unsigned char> out = {0, 0, static_cast<unsigned char>(arr.type),
                                    static_cast<unsigned char>(arr.dims.size())};
  for (auto d : arr.dims) detail::put_be(out, d, 4);
  for (double v : arr.values) {
    if (arr.type == IdxType::u8) {
      out.push_back(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0)));
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      detail::put_be(out, bits, 8);
    }
  }
  return out;
}

inline void write_idx(const std::string& path, const IdxArray& arr) {
  const auto bytes = encode_idx(arr);
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail(ErrorKind::io_open, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Images file ([N, H, W] or [N, C, H, W]) plus labels file ([N]). u8
/// pixels are scaled by 1/255; other element types are taken as-is.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t classes = 0) {
  const IdxArray img = read_idx(images_path);
  const IdxArray lab = read_idx(labels_path);
  if (img.dims.size() != 3 && img.dims.size() != 4) {
    detail::fail(ErrorKind::io_dim_mismatch, images_path + ": expected rank 3 or 4 image array");
  }
  if (lab.dims.size() != 1) detail::fail(ErrorKind::io_dim_mismatch, labels_path + ": expected rank 1 labels");
  if (lab.dims[0] != img.dims[0]) {
    detail::fail(ErrorKind::io_dim_mismatch, "image count " + std::to_string(img.dims[0]) + " != label count " +
                                                 std::to_string(lab.dims[0]));
  }
  ImageShape shape;
  if (img.dims.size() == 3) {
    shape = {1, img.dims[1], img.dims[2]};
  } else {
    shape = {img.dims[1], img.dims[2], img.dims[3]};
  }
  Dataset ds;
  ds.images = ImageBatch(img.dims[0], shape);
  auto& t = ds.images.tensor();
  const double div = img.type == IdxType::u8 ? 255.0 : 1.0;
  for (std::size_t i = 0; i < img.values.size(); ++i) t[i] = img.values[i] / div;
  int max_label = -1;
  for (double v : lab.values) {
    ds.labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.classes = classes ? classes : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

/// Writes pixel values quantised to u8 (round(v * 255)) and u8 labels.
inline void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  IdxArray img;
  const auto& s = ds.shape();
  img.dims = {static_cast<std::uint32_t>(ds.size())};
  if (s.channels != 1) img.dims.push_back(static_cast<std::uint32_t>(s.channels));
  img.dims.push_back(static_cast<std::uint32_t>(s.height));
  img.dims.push_back(static_cast<std::uint32_t>(s.width));
  img.values.reserve(ds.images.tensor().size());
  for (double v : ds.images.tensor().values()) img.values.push_back(std::round(std::clamp(v, 0.0, 1.0) * 255.0));
  IdxArray lab;
  lab.dims = {static_cast<std::uint32_t>(ds.size())};
  for (int l : ds.labels) lab.values.push_back(l);
  write_idx(images_path, img);
  write_idx(labels_path, lab);
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class Background { smooth, stripes, none };

struct CollageSpec {
  std::size_t canvas = 32;
  std::size_t classes = 4;
  double min_fraction = 0.1;  // glyph box area / canvas area
  double max_fraction = 0.4;
  Background background = Background::smooth;
  std::size_t clutter = 3;  // distractor strokes per image

  void validate() const {
    detail::require(classes >= 2 && classes <= 8, ErrorKind::config, "collage: classes must be in [2, 8]");
    detail::require(canvas >= 4, ErrorKind::config, "collage: canvas too small");
    detail::require(min_fraction > 0.0 && min_fraction <= max_fraction && max_fraction <= 1.0, ErrorKind::config,
                    "collage: need 0 < min_fraction <= max_fraction <= 1");
  }
};

/// Glyph membership at normalised box coordinates u, v in [-1, 1]. Every
/// glyph covers roughly 40% of its box so ink mass does not reveal class.
/// 0 bar, 1 cross, 2 disc, 3 ring, 4 diagonal cross, 5 frame, 6 triangle,
/// 7 twin dots.
inline bool glyph_covers(std::size_t glyph, double u, double v, bool vertical) {
  const double r = std::sqrt(u * u + v * v);
  switch (glyph) {
    case 0: return vertical ? std::abs(u) < 0.4 : std::abs(v) < 0.4;
    case 1: return std::abs(u) < 0.22 || std::abs(v) < 0.22;
    case 2: return r < 0.71;
    case 3: return r > 0.68 && r < 1.0;
    case 4: return std::abs(u - v) < 0.23 || std::abs(u + v) < 0.23;
    case 5: return std::max(std::abs(u), std::abs(v)) > 0.75;
    case 6: return v > -0.9 && std::abs(u) < (v + 0.9) * 0.45;
    case 7: {
      const double du = vertical ? u : std::abs(u) - 0.5;
      const double dv = vertical ? std::abs(v) - 0.5 : v;
      return std::sqrt(du * du + dv * dv) < 0.5;
    }
    default: return false;
  }
}

namespace detail {

inline void paint_background(std::span<double> img, std::size_t n, Background kind, Rng& rng) {
  if (kind == Background::none) {
    std::fill(img.begin(), img.end(), 0.0);
    return;
  }
  const double tau = 2.0 * std::numbers::pi;
  double fx[3], fy[3], ph[3];
  const int waves = kind == Background::smooth ? 3 : 1;
  for (int k = 0; k < waves; ++k) {
    const double freq = 1.0 + 2.0 * sample_uniform(rng);
    const double angle = tau * sample_uniform(rng);
    fx[k] = freq * std::cos(angle) / static_cast<double>(n);
    fy[k] = freq * std::sin(angle) / static_cast<double>(n);
    ph[k] = tau * sample_uniform(rng);
  }
  const double level = 0.15 + 0.2 * sample_uniform(rng);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (int k = 0; k < waves; ++k) {
        s += std::sin(tau * (fx[k] * static_cast<double>(x) + fy[k] * static_cast<double>(y)) + ph[k]);
      }
      const double noise = 0.1 * (sample_uniform(rng) - 0.5);
      img[y * n + x] = std::clamp(level + 0.15 * s / waves + noise, 0.0, 1.0);
    }
  }
}

inline void paint_strokes(std::span<double> img, std::size_t n, std::size_t count, Rng& rng) {
  for (std::size_t s = 0; s < count; ++s) {
    const double x0 = sample_uniform(rng) * static_cast<double>(n);
    const double y0 = sample_uniform(rng) * static_cast<double>(n);
    const double angle = 2.0 * std::numbers::pi * sample_uniform(rng);
    const double len = 3.0 + 4.0 * sample_uniform(rng);
    const double ink = 0.5 + 0.4 * sample_uniform(rng);
    for (double t = 0.0; t <= len; t += 0.5) {
      const auto x = static_cast<std::int64_t>(x0 + t * std::cos(angle));
      const auto y = static_cast<std::int64_t>(y0 + t * std::sin(angle));
      if (x < 0 || y < 0 || x >= static_cast<std::int64_t>(n) || y >= static_cast<std::int64_t>(n)) continue;
      auto& px = img[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)];
      px = std::max(px, ink);
    }
  }
}

}  // namespace detail

/// Renders one glyph of class `label` into a single-channel canvas.
inline void render_glyph(std::span<double> img, std::size_t n, std::size_t label, std::size_t side, std::size_t x0,
                         std::size_t y0, double ink, bool vertical) {
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) {
      const double u = 2.0 * (static_cast<double>(x - x0) + 0.5) / static_cast<double>(side) - 1.0;
      const double v = 2.0 * (static_cast<double>(y - y0) + 0.5) / static_cast<double>(side) - 1.0;
      if (glyph_covers(label, u, v, vertical)) img[y * n + x] = ink;
    }
  }
}

inline Dataset gen_collage(const CollageSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  detail::require(n >= 1, ErrorKind::invalid_argument, "gen_collage: need at least one image");
  const std::size_t c = spec.canvas;
  Dataset ds;
  ds.classes = spec.classes;
  ds.images = ImageBatch(n, ImageShape{1, c, c});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto img = ds.images.image(i);
    const auto label = static_cast<std::size_t>(sample_index(spec.classes, rng));
    ds.labels[i] = static_cast<int>(label);
    detail::paint_background(img, c, spec.background, rng);
    detail::paint_strokes(img, c, spec.clutter, rng);
    const double frac = spec.min_fraction + (spec.max_fraction - spec.min_fraction) * sample_uniform(rng);
    auto side = static_cast<std::size_t>(std::llround(static_cast<double>(c) * std::sqrt(frac)));
    side = std::clamp<std::size_t>(side, 3, c);
    const auto x0 = static_cast<std::size_t>(sample_index(c - side + 1, rng));
    const auto y0 = static_cast<std::size_t>(sample_index(c - side + 1, rng));
    const double ink = 0.7 + 0.3 * sample_uniform(rng);
    const bool vertical = sample_uniform(rng) < 0.5;
    render_glyph(img, c, label, side, x0, y0, ink, vertical);
  }
  return ds;
}

/// Width of the 1 x H x W layout used for a flat feature vector: the
/// largest divisor of dim not exceeding sqrt(dim).
inline std::size_t blob_layout_height(std::size_t dim) {
  std::size_t h = 1;
  for (std::size_t d = 1; d * d <= dim; ++d) {
    if (dim % d == 0) h = d;
  }
  return h;
}

/// Isotropic unit-variance clusters centred at (separation / sqrt 2) e_k, so
/// every pair of means is `separation` apart. Coordinates are mapped into
/// [0, 1] by the affine map x -> 0.5 + x / (2 (separation / sqrt 2 + 6)),
/// then clamped; the map preserves linear separability.
inline Dataset gen_blobs(std::size_t classes, std::size_t n, std::size_t dim, double separation, Rng& rng) {
  detail::require(classes >= 2, ErrorKind::invalid_argument, "gen_blobs: need at least two classes");
  detail::require(dim >= classes, ErrorKind::invalid_argument, "gen_blobs: dim must be >= classes");
  detail::require(separation >= 0.0, ErrorKind::invalid_argument, "gen_blobs: separation must be >= 0");
  const std::size_t h = blob_layout_height(dim);
  Dataset ds;
  ds.classes = classes;
  ds.images = ImageBatch(n, ImageShape{1, h, dim / h});
  ds.labels.resize(n);
  const double offset = separation / std::numbers::sqrt2;
  const double scale = 0.5 / (offset + 6.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(sample_index(classes, rng));
    ds.labels[i] = static_cast<int>(label);
    auto img = ds.images.image(i);
    for (std::size_t d = 0; d < dim; ++d) {
      const double x = sample_gaussian(d == label ? offset : 0.0, 1.0, rng);
      img[d] = std::clamp(0.5 + x * scale, 0.0, 1.0);
    }
  }
  return ds;
}

}  // namespace lumix

#endif  // LUMIX_DATA_HPP
