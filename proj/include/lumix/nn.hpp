#ifndef LUMIX_NN_HPP
#define LUMIX_NN_HPP

// Small feed-forward classifiers with hand-written forward and backward
// passes. Layers: dense, 3x3 same-padding convolution, 2x2 max pooling.
// All activations are [B, ...] row-major tensors; dense layers flatten
// whatever trails the batch axis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/rng.hpp"
#include "lumix/tensor.hpp"

namespace lumix {

enum class LayerKind : std::uint32_t { dense = 0, conv3x3 = 1, maxpool2 = 2 };
enum class Activation : std::uint32_t { none = 0, relu = 1 };

struct Layer {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::none;
  // Dense: in_channels / out_channels are feature counts.
  // Conv / pool: input geometry is in_channels x height x width.
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  Tensor weights;  // dense: [in, out]; conv: [out, in, 3, 3]
  Tensor biases;   // [out]
  Tensor weight_grad;
  Tensor bias_grad;
  Tensor weight_velocity;
  Tensor bias_velocity;

  bool has_parameters() const { return kind != LayerKind::maxpool2; }

  /// Per-sample output shape.
  Shape output_shape() const {
    switch (kind) {
      case LayerKind::dense: return {out_channels};
      case LayerKind::conv3x3: return {out_channels, height, width};
      case LayerKind::maxpool2: return {in_channels, height / 2, width / 2};
    }
    return {};
  }

  std::size_t input_size() const {
    return kind == LayerKind::dense ? in_channels : in_channels * height * width;
  }
};

/// Activations recorded by a forward pass, consumed by backward.
struct Tape {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
};

struct ModelSpec {
  enum class Arch { mlp, conv, linear };
  Arch arch = Arch::conv;
  std::size_t conv1 = 8;
  std::size_t conv2 = 8;
  std::size_t hidden = 32;
  std::size_t mlp_hidden1 = 256;
  std::size_t mlp_hidden2 = 128;
};

struct ParameterRef {
  std::span<double> value;
  std::span<double> grad;
};

class Model {
 public:
  Model() = default;
  Model(Shape input_shape, std::size_t classes) : input_shape_(std::move(input_shape)), classes_(classes) {}

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t classes() const noexcept { return classes_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  void add_dense(std::size_t in, std::size_t out, Activation act) {
    Layer l;
    l.kind = LayerKind::dense;
    l.activation = act;
    l.in_channels = in;
    l.out_channels = out;
    allocate(l, {in, out}, out);
    layers_.push_back(std::move(l));
  }

  void add_conv3x3(std::size_t in_c, std::size_t out_c, std::size_t h, std::size_t w, Activation act) {
    Layer l;
    l.kind = LayerKind::conv3x3;
    l.activation = act;
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.height = h;
    l.width = w;
    allocate(l, {out_c, in_c, 3, 3}, out_c);
    layers_.push_back(std::move(l));
  }

  void add_maxpool2(std::size_t c, std::size_t h, std::size_t w) {
    detail::require(h % 2 == 0 && w % 2 == 0, ErrorKind::shape_mismatch, "maxpool2: spatial size must be even");
    Layer l;
    l.kind = LayerKind::maxpool2;
    l.in_channels = c;
    l.out_channels = c;
    l.height = h;
    l.width = w;
    layers_.push_back(std::move(l));
  }

  std::vector<ParameterRef> parameters() {
    std::vector<ParameterRef> out;
    for (auto& l : layers_) {
      if (!l.has_parameters()) continue;
      out.push_back({l.weights.values(), l.weight_grad.values()});
      out.push_back({l.biases.values(), l.bias_grad.values()});
    }
    return out;
  }

  void zero_grad() {
    for (auto& l : layers_) {
      if (!l.has_parameters()) continue;
      l.weight_grad.fill(0.0);
      l.bias_grad.fill(0.0);
    }
  }

  /// Logits [B, classes]. Records activations into `tape` when given.
  Tensor forward(const Tensor& batch, Tape* tape = nullptr) const;

  /// Accumulates parameter gradients from d(loss)/d(logits). Returns
  /// d(loss)/d(input) when `want_input_grad` is set, otherwise an empty tensor.
  Tensor backward(const Tape& tape, const Tensor& logits_grad, bool want_input_grad = false);

  friend bool operator==(const Model& a, const Model& b) {
    if (a.input_shape_ != b.input_shape_ || a.classes_ != b.classes_ || a.layers_.size() != b.layers_.size())
      return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (!(a.layers_[i].weights == b.layers_[i].weights) || !(a.layers_[i].biases == b.layers_[i].biases))
        return false;
    }
    return true;
  }

 private:
  static void allocate(Layer& l, Shape wshape, std::size_t out) {
    l.weights = Tensor(wshape);
    l.weight_grad = Tensor(wshape);
    l.weight_velocity = Tensor(wshape);
    l.biases = Tensor({out});
    l.bias_grad = Tensor({out});
    l.bias_velocity = Tensor({out});
  }

  Shape input_shape_;
  std::size_t classes_ = 0;
  std::vector<Layer> layers_;
};

namespace detail {

inline Shape batched(std::size_t batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

inline void apply_activation(Activation act, std::span<double> v) {
  if (act == Activation::relu) {
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
  }
}

// Copies one [C, H, W] plane stack into a zero-bordered [C, H+2, W+2] buffer.
inline void pad_planes(const double* src, std::size_t c, std::size_t h, std::size_t w, std::vector<double>& dst) {
  const std::size_t pw = w + 2;
  const std::size_t plane = (h + 2) * pw;
  dst.assign(c * plane, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t y = 0; y < h; ++y) {
      std::memcpy(&dst[ci * plane + (y + 1) * pw + 1], src + (ci * h + y) * w, w * sizeof(double));
    }
  }
}

inline void dense_forward(const Layer& l, const Tensor& in, Tensor& out) {
  const std::size_t batch = in.dim(0);
  const std::size_t nin = l.in_channels;
  const std::size_t nout = l.out_channels;
  const double* wt = l.weights.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = in.data() + b * nin;
    double* y = out.data() + b * nout;
    std::copy_n(l.biases.data(), nout, y);
    for (std::size_t i = 0; i < nin; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* wrow = wt + i * nout;
      for (std::size_t o = 0; o < nout; ++o) y[o] += xi * wrow[o];
    }
  }
}

// Convolutions run over the padded row width: output position r * (w + 2) + c
// reads padded input position r * (w + 2) + c + ky * (w + 2) + kx, so every
// tap becomes one contiguous multiply-add over the whole plane. Columns
// c >= w are scratch and discarded.
inline void conv_forward(const Layer& l, const Tensor& in, Tensor& out) {
  const std::size_t batch = in.dim(0);
  const std::size_t cin = l.in_channels, cout = l.out_channels, h = l.height, w = l.width;
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  const std::size_t span = h * pw;
  std::vector<double> pad;
  std::vector<double> full(span);
  for (std::size_t b = 0; b < batch; ++b) {
    pad_planes(in.data() + b * cin * h * w, cin, h, w, pad);
    pad.resize(pad.size() + 2, 0.0);
    double* y = out.data() + b * cout * h * w;
    for (std::size_t co = 0; co < cout; ++co) {
      std::fill(full.begin(), full.end(), l.biases[co]);
      double* acc = full.data();
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* kern = l.weights.data() + (co * cin + ci) * 9;
        const double* src = pad.data() + ci * pplane;
        for (std::size_t tap = 0; tap < 9; ++tap) {
          const double k = kern[tap];
          const double* s = src + (tap / 3) * pw + (tap % 3);
          for (std::size_t q = 0; q < span; ++q) acc[q] += k * s[q];
        }
      }
      double* plane = y + co * h * w;
      for (std::size_t r = 0; r < h; ++r) std::copy_n(acc + r * pw, w, plane + r * w);
    }
  }
}

inline void pool_forward(const Layer& l, const Tensor& in, Tensor& out, std::vector<std::uint32_t>* argmax) {
  const std::size_t batch = in.dim(0);
  const std::size_t c = l.in_channels, h = l.height, w = l.width;
  const std::size_t oh = h / 2, ow = w / 2;
  if (argmax) argmax->resize(out.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t in_base = (b * c + ch) * h * w;
      const std::size_t out_base = (b * c + ch) * oh * ow;
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t s = 0; s < ow; ++s) {
          std::size_t best = in_base + 2 * r * w + 2 * s;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t q : cand) {
            if (in[q] > in[best]) best = q;
          }
          out[out_base + r * ow + s] = in[best];
          if (argmax) (*argmax)[out_base + r * ow + s] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
}

inline void dense_backward(Layer& l, const Tensor& in, const Tensor& g, Tensor* dx) {
  const std::size_t batch = in.dim(0);
  const std::size_t nin = l.in_channels, nout = l.out_channels;
  double* dw = l.weight_grad.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = in.data() + b * nin;
    const double* gr = g.data() + b * nout;
    for (std::size_t o = 0; o < nout; ++o) l.bias_grad[o] += gr[o];
    for (std::size_t i = 0; i < nin; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* drow = dw + i * nout;
      for (std::size_t o = 0; o < nout; ++o) drow[o] += xi * gr[o];
    }
    if (dx) {
      double* d = dx->data() + b * nin;
      const double* wt = l.weights.data();
      for (std::size_t i = 0; i < nin; ++i) {
        const double* wrow = wt + i * nout;
        double s = 0.0;
        for (std::size_t o = 0; o < nout; ++o) s += wrow[o] * gr[o];
        d[i] = s;
      }
    }
  }
}

// Dot product over eight fixed lanes. Lane j sums the terms q = j mod 8 in
// order, so the result depends on n only, never on pointer alignment.
inline double dot(const double* a, const double* b, std::size_t n) {
  constexpr std::size_t lanes = 8;
  double acc[lanes] = {};
  std::size_t q = 0;
  for (; q + lanes <= n; q += lanes) {
#pragma omp simd
    for (std::size_t j = 0; j < lanes; ++j) acc[j] += a[q + j] * b[q + j];
  }
  for (std::size_t j = 0; q < n; ++q, ++j) acc[j] += a[q] * b[q];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

inline void conv_backward(Layer& l, const Tensor& in, const Tensor& g, Tensor* dx) {
  const std::size_t batch = in.dim(0);
  const std::size_t cin = l.in_channels, cout = l.out_channels, h = l.height, w = l.width;
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  const std::size_t span = h * pw;
  std::vector<double> pad;
  std::vector<double> dpad;
  std::vector<double> gfull(span, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    pad_planes(in.data() + b * cin * h * w, cin, h, w, pad);
    pad.resize(pad.size() + 2, 0.0);
    if (dx) dpad.assign(cin * pplane + 2, 0.0);
    const double* gb = g.data() + b * cout * h * w;
    for (std::size_t co = 0; co < cout; ++co) {
      const double* gplane = gb + co * h * w;
      double bsum = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        std::copy_n(gplane + r * w, w, gfull.data() + r * pw);
        for (std::size_t c = 0; c < w; ++c) bsum += gplane[r * w + c];
      }
      l.bias_grad[co] += bsum;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* dk = l.weight_grad.data() + (co * cin + ci) * 9;
        const double* kern = l.weights.data() + (co * cin + ci) * 9;
        const double* src = pad.data() + ci * pplane;
        for (std::size_t tap = 0; tap < 9; ++tap) {
          const std::size_t off = (tap / 3) * pw + (tap % 3);
          dk[tap] += dot(gfull.data(), src + off, span);
          if (dx) {
            const double k = kern[tap];
            double* d = dpad.data() + ci * pplane + off;
            const double* gf = gfull.data();
            for (std::size_t q = 0; q < span; ++q) d[q] += k * gf[q];
          }
        }
      }
    }
    if (dx) {
      double* d = dx->data() + b * cin * h * w;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t r = 0; r < h; ++r) {
          std::memcpy(d + (ci * h + r) * w, &dpad[ci * pplane + (r + 1) * pw + 1], w * sizeof(double));
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor Model::forward(const Tensor& batch, Tape* tape) const {
  detail::require(!layers_.empty(), ErrorKind::invalid_argument, "forward: model has no layers");
  detail::require(batch.rank() >= 1 && batch.dim(0) > 0, ErrorKind::shape_mismatch, "forward: empty batch");
  const std::size_t n = batch.dim(0);
  if (batch.stride0() != shape_size(input_shape_)) {
    detail::fail(ErrorKind::shape_mismatch, "forward: batch " + shape_string(batch.shape()) +
                                                " does not match model input " + shape_string(input_shape_));
  }
  if (tape) {
    tape->inputs.clear();
    tape->outputs.clear();
    tape->pool_argmax.assign(layers_.size(), {});
  }
  Tensor current = batch;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    Tensor out(detail::batched(n, l.output_shape()));
    switch (l.kind) {
      case LayerKind::dense: detail::dense_forward(l, current, out); break;
      case LayerKind::conv3x3: detail::conv_forward(l, current, out); break;
      case LayerKind::maxpool2:
        detail::pool_forward(l, current, out, tape ? &tape->pool_argmax[li] : nullptr);
        break;
    }
    detail::apply_activation(l.activation, out.values());
    if (tape) tape->inputs.push_back(std::move(current));
    current = tape ? out : std::move(out);
    if (tape) tape->outputs.push_back(std::move(out));
  }
  return current;
}

inline Tensor Model::backward(const Tape& tape, const Tensor& logits_grad, bool want_input_grad) {
  detail::require(tape.inputs.size() == layers_.size(), ErrorKind::invalid_argument,
                  "backward: tape does not belong to this model");
  if (logits_grad.shape() != tape.outputs.back().shape()) {
    detail::fail(ErrorKind::shape_mismatch, "backward: gradient " + shape_string(logits_grad.shape()) +
                                                " does not match logits " + shape_string(tape.outputs.back().shape()));
  }
  Tensor grad = logits_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& l = layers_[li];
    const Tensor& in = tape.inputs[li];
    const Tensor& out = tape.outputs[li];
    if (l.activation == Activation::relu) {
      for (std::size_t q = 0; q < grad.size(); ++q) {
        if (!(out[q] > 0.0)) grad[q] = 0.0;
      }
    }
    const bool need_dx = li > 0 || want_input_grad;
    Tensor dx;
    if (need_dx) dx = Tensor(in.shape());
    switch (l.kind) {
      case LayerKind::dense: detail::dense_backward(l, in, grad, need_dx ? &dx : nullptr); break;
      case LayerKind::conv3x3: detail::conv_backward(l, in, grad, need_dx ? &dx : nullptr); break;
      case LayerKind::maxpool2:
        if (need_dx) {
          const auto& arg = tape.pool_argmax[li];
          for (std::size_t q = 0; q < grad.size(); ++q) dx[arg[q]] += grad[q];
        }
        break;
    }
    grad = std::move(dx);
  }
  return grad;
}

/// Classical momentum: v <- momentum * v + (g + weight_decay * w); w <- w - lr * v.
/// Weight decay applies to weights only, not biases.
inline void sgd_step(Model& model, double lr, double momentum, double weight_decay) {
  for (auto& l : model.layers()) {
    if (!l.has_parameters()) continue;
    auto w = l.weights.values();
    auto gw = l.weight_grad.values();
    auto vw = l.weight_velocity.values();
    for (std::size_t q = 0; q < w.size(); ++q) {
      vw[q] = momentum * vw[q] + (gw[q] + weight_decay * w[q]);
      w[q] -= lr * vw[q];
    }
    auto b = l.biases.values();
    auto gb = l.bias_grad.values();
    auto vb = l.bias_velocity.values();
    for (std::size_t q = 0; q < b.size(); ++q) {
      vb[q] = momentum * vb[q] + gb[q];
      b[q] -= lr * vb[q];
    }
  }
}

/// He-uniform weights, zero biases.
inline void init_parameters(Model& model, Rng& rng) {
  for (auto& l : model.layers()) {
    if (!l.has_parameters()) continue;
    const std::size_t fan_in = l.kind == LayerKind::dense ? l.in_channels : l.in_channels * 9;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : l.weights.values()) v = (2.0 * sample_uniform(rng) - 1.0) * bound;
    l.biases.fill(0.0);
  }
}

/// Reference architectures.
///   mlp:    in -> hidden1 -> hidden2 -> C, ReLU
///   conv:   conv3x3(c1) ReLU, pool, conv3x3(c2) ReLU, pool, dense(hidden) ReLU, dense(C)
///   linear: in -> C
inline Model build_model(const ModelSpec& spec, const Shape& input_shape, std::size_t classes, Rng& init_rng) {
  detail::require(input_shape.size() == 3, ErrorKind::shape_mismatch, "build_model: input must be [C, H, W]");
  detail::require(classes >= 2, ErrorKind::invalid_argument, "build_model: need at least two classes");
  Model model(input_shape, classes);
  const std::size_t in = shape_size(input_shape);
  switch (spec.arch) {
    case ModelSpec::Arch::linear: model.add_dense(in, classes, Activation::none); break;
    case ModelSpec::Arch::mlp:
      model.add_dense(in, spec.mlp_hidden1, Activation::relu);
      model.add_dense(spec.mlp_hidden1, spec.mlp_hidden2, Activation::relu);
      model.add_dense(spec.mlp_hidden2, classes, Activation::none);
      break;
    case ModelSpec::Arch::conv: {
      const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
      if (h % 4 != 0 || w % 4 != 0) {
        detail::fail(ErrorKind::shape_mismatch, "build_model: conv architecture needs H and W divisible by 4");
      }
      model.add_conv3x3(c, spec.conv1, h, w, Activation::relu);
      model.add_maxpool2(spec.conv1, h, w);
      model.add_conv3x3(spec.conv1, spec.conv2, h / 2, w / 2, Activation::relu);
      model.add_maxpool2(spec.conv2, h / 2, w / 2);
      model.add_dense(spec.conv2 * (h / 4) * (w / 4), spec.hidden, Activation::relu);
      model.add_dense(spec.hidden, classes, Activation::none);
      break;
    }
  }
  init_parameters(model, init_rng);
  return model;
}

// Binary model file: "LUMXMDL1", then u64 fields in host byte order:
// input rank, dims, classes, layer count; per layer kind, activation,
// in_channels, out_channels, height, width, then the raw weight and bias
// doubles.
inline void save_model(const Model& model, std::ostream& os) {
  auto put = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  os.write("LUMXMDL1", 8);
  put(model.input_shape().size());
  for (auto d : model.input_shape()) put(d);
  put(model.classes());
  put(model.layers().size());
  for (const auto& l : model.layers()) {
    put(static_cast<std::uint64_t>(l.kind));
    put(static_cast<std::uint64_t>(l.activation));
    put(l.in_channels);
    put(l.out_channels);
    put(l.height);
    put(l.width);
    if (l.has_parameters()) {
      os.write(reinterpret_cast<const char*>(l.weights.data()),
               static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
      os.write(reinterpret_cast<const char*>(l.biases.data()),
               static_cast<std::streamsize>(l.biases.size() * sizeof(double)));
    }
  }
  if (!os) detail::fail(ErrorKind::io_open, "save_model: write failed");
}

inline Model load_model(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8)) detail::fail(ErrorKind::io_truncated, "load_model: missing header");
  if (std::string(magic, 8) != "LUMXMDL1") detail::fail(ErrorKind::io_bad_magic, "load_model: not a model file");
  auto get = [&]() {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) detail::fail(ErrorKind::io_truncated, "load_model");
    return v;
  };
  Shape input(get());
  for (auto& d : input) d = get();
  const std::size_t classes = get();
  const std::size_t count = get();
  Model model(input, classes);
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(get());
    const auto act = static_cast<Activation>(get());
    const std::size_t in_c = get(), out_c = get(), h = get(), w = get();
    switch (kind) {
      case LayerKind::dense: model.add_dense(in_c, out_c, act); break;
      case LayerKind::conv3x3: model.add_conv3x3(in_c, out_c, h, w, act); break;
      case LayerKind::maxpool2: model.add_maxpool2(in_c, h, w); break;
      default: detail::fail(ErrorKind::io_bad_magic, "load_model: unknown layer kind");
    }
    auto& l = model.layers().back();
    if (l.has_parameters()) {
      if (!is.read(reinterpret_cast<char*>(l.weights.data()),
                   static_cast<std::streamsize>(l.weights.size() * sizeof(double))) ||
          !is.read(reinterpret_cast<char*>(l.biases.data()),
                   static_cast<std::streamsize>(l.biases.size() * sizeof(double)))) {
        detail::fail(ErrorKind::io_truncated, "load_model: parameters truncated");
      }
    }
  }
  return model;
}

}  // namespace lumix

#endif  // LUMIX_NN_HPP
