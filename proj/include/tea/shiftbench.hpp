#pragma once

// Distribution-shift benchmark generation: 2-D Gaussian-mixture covariate
// shift, a procedural oriented-bar image set, parametric corruption
// operators at five severities, IDX ingestion, and batching. Every generator
// is a pure function of (spec, seed); per-sample child streams keep results
// independent of iteration order.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tea/corruption_tables.hpp"
#include "tea/rng.hpp"
#include "tea/tensor.hpp"

namespace tea {

template <typename T>
struct LabeledDataset {
  Tensor<T> inputs;  // [n, ...] in [-1, 1]
  std::vector<int> labels;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
};

// ---- 2-D Gaussian mixture with parametric covariate shift ------------------

struct Mixture2DClass {
  std::array<double, 2> mean{0, 0};
  std::array<double, 4> cov{1, 0, 0, 1};  // row-major 2x2, symmetric positive definite
};

struct ShiftSpec {
  double rotation_deg = 0;
  std::array<double, 2> translation{0, 0};
  double scale = 1.0;
  double noise_std = 0;

  bool is_identity() const {
    return rotation_deg == 0 && translation[0] == 0 && translation[1] == 0 && scale == 1.0 &&
           noise_std == 0;
  }
};

struct Mixture2DSpec {
  std::vector<Mixture2DClass> classes;
  std::size_t samples_per_class = 500;
  ShiftSpec shift;

  void validate() const {
    if (classes.empty()) throw ConfigError("mixture2d needs at least one class");
    if (samples_per_class < 1) throw ConfigError("mixture2d samples_per_class must be >= 1");
    if (!(shift.scale > 0)) throw ConfigError("mixture2d shift scale must be > 0");
    for (const auto& c : classes) {
      if (c.cov[1] != c.cov[2])
        throw ConfigError("mixture2d covariance must be symmetric");
      if (!(c.cov[0] > 0) || !(c.cov[0] * c.cov[3] - c.cov[1] * c.cov[2] > 0))
        throw ConfigError("mixture2d covariance must be positive definite");
    }
  }
};

enum class Split { Train, Test };

// Train samples the base mixture; test applies the shift transform to fresh
// draws (rotate about the origin, translate, scale about the origin, then
// additive noise). Labels are untouched: covariate shift only. Output is
// clamped to [-1,1] to keep the dataset range contract.
template <typename T>
LabeledDataset<T> gen_mixture2d(const Mixture2DSpec& spec, Split split, const RngStream& rng) {
  spec.validate();
  const std::size_t k = spec.classes.size();
  const std::size_t n = k * spec.samples_per_class;
  LabeledDataset<T> ds;
  ds.inputs = Tensor<T>({n, 2});
  ds.labels.resize(n);
  ds.provenance = split == Split::Train ? "mixture2d:train" : "mixture2d:test";

  const double rad = spec.shift.rotation_deg * 3.14159265358979323846 / 180.0;
  const double cr = std::cos(rad), sr = std::sin(rad);
  RngStream base = rng.fork(split == Split::Train ? 0x7472 : 0x7465);

  std::size_t idx = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& cls = spec.classes[c];
    // Cholesky factor of the covariance.
    const double la = std::sqrt(cls.cov[0]);
    const double lb = cls.cov[1] / la;
    const double lc = std::sqrt(cls.cov[3] - lb * lb);
    RngStream cls_rng = base.fork(c);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++idx) {
      RngStream sr_rng = cls_rng.fork(i);
      const double z0 = sr_rng.normal(), z1 = sr_rng.normal();
      double x = cls.mean[0] + la * z0;
      double y = cls.mean[1] + lb * z0 + lc * z1;
      if (split == Split::Test) {
        const double rx = cr * x - sr * y;
        const double ry = sr * x + cr * y;
        x = spec.shift.scale * (rx + spec.shift.translation[0]);
        y = spec.shift.scale * (ry + spec.shift.translation[1]);
        if (spec.shift.noise_std > 0) {
          x += spec.shift.noise_std * sr_rng.normal();
          y += spec.shift.noise_std * sr_rng.normal();
        }
      }
      ds.inputs.at2(idx, 0) = T(std::clamp(x, -1.0, 1.0));
      ds.inputs.at2(idx, 1) = T(std::clamp(y, -1.0, 1.0));
      ds.labels[idx] = int(c);
    }
  }
  return ds;
}

// ---- Procedural oriented-bar images ----------------------------------------

struct SynthImagesSpec {
  std::size_t classes = 4;
  std::size_t image_size = 16;
  double bar_width = 1.6;         // gaussian cross-section, pixels
  double center_jitter = 1.2;     // pixels
  double angle_jitter_deg = 8.0;
  double contrast_lo = 0.7;
  double contrast_hi = 1.1;
  double pixel_noise = 0.05;      // on the [0,1] scale

  void validate() const {
    if (classes < 2) throw ConfigError("synth_images needs >= 2 classes");
    if (image_size < 4 || image_size % 2) throw ConfigError("synth_images image_size must be even and >= 4");
  }
};

// Class k draws a bar through the (jittered) center at angle pi*k/K plus
// jitter. Images are single channel, [n, 1, S, S], values in [-1, 1].
template <typename T>
LabeledDataset<T> gen_synth_images(const SynthImagesSpec& spec, std::size_t per_class,
                                   Split split, const RngStream& rng) {
  spec.validate();
  const std::size_t s = spec.image_size;
  const std::size_t n = spec.classes * per_class;
  LabeledDataset<T> ds;
  ds.inputs = Tensor<T>({n, 1, s, s});
  ds.labels.resize(n);
  ds.provenance = split == Split::Train ? "synth_images:train" : "synth_images:test";

  RngStream base = rng.fork(split == Split::Train ? 0x7472 : 0x7465);
  const double half = double(s - 1) / 2.0;
  std::size_t idx = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    RngStream cls_rng = base.fork(c);
    for (std::size_t i = 0; i < per_class; ++i, ++idx) {
      RngStream r = cls_rng.fork(i);
      const double angle = 3.14159265358979323846 *
                           (double(c) / double(spec.classes) +
                            r.normal() * spec.angle_jitter_deg / 180.0);
      const double cx = half + r.normal() * spec.center_jitter;
      const double cy = half + r.normal() * spec.center_jitter;
      const double contrast = r.uniform(spec.contrast_lo, spec.contrast_hi);
      const double nx = -std::sin(angle), ny = std::cos(angle);  // bar normal
      T* img = ds.inputs.data.data() + idx * s * s;
      for (std::size_t py = 0; py < s; ++py)
        for (std::size_t px = 0; px < s; ++px) {
          const double d = (double(px) - cx) * nx + (double(py) - cy) * ny;
          double v01 = contrast * std::exp(-d * d / (2.0 * spec.bar_width * spec.bar_width));
          v01 += spec.pixel_noise * r.normal();
          img[py * s + px] = T(std::clamp(2.0 * v01 - 1.0, -1.0, 1.0));
        }
      ds.labels[idx] = int(c);
    }
  }
  return ds;
}

// ---- Corruption operators ---------------------------------------------------

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  DefocusBlur,
  Contrast,
  Brightness,
  Pixelate
};

inline const std::vector<std::pair<CorruptionKind, std::string>>& corruption_kinds() {
  static const std::vector<std::pair<CorruptionKind, std::string>> kinds = {
      {CorruptionKind::GaussianNoise, "gaussian_noise"},
      {CorruptionKind::ShotNoise, "shot_noise"},
      {CorruptionKind::ImpulseNoise, "impulse_noise"},
      {CorruptionKind::DefocusBlur, "defocus_blur"},
      {CorruptionKind::Contrast, "contrast"},
      {CorruptionKind::Brightness, "brightness"},
      {CorruptionKind::Pixelate, "pixelate"}};
  return kinds;
}

inline std::string corruption_name(CorruptionKind k) {
  for (const auto& [kind, name] : corruption_kinds())
    if (kind == k) return name;
  throw Error("unknown corruption kind");
}

inline CorruptionKind corruption_from_name(const std::string& name) {
  for (const auto& [kind, n] : corruption_kinds())
    if (n == name) return kind;
  throw ConfigError("unknown corruption kind '" + name + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 1;

  void validate() const {
    if (severity < 1 || severity > kSeverityLevels)
      throw ConfigError("corruption severity must be in 1.." + std::to_string(kSeverityLevels));
  }
};

namespace detail {

inline std::uint64_t poisson_draw(RngStream& rng, double lambda) {
  if (lambda <= 0) return 0;
  if (lambda < 30.0) {
    // Knuth's product-of-uniforms method.
    const double limit = std::exp(-lambda);
    double p = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      p *= 1.0 - rng.next_unit();  // (0,1]
    } while (p > limit);
    return k - 1;
  }
  // Normal approximation for large rates.
  const double v = lambda + std::sqrt(lambda) * rng.normal();
  return v > 0 ? std::uint64_t(v + 0.5) : 0;
}

// Geometry of an image tensor: [n,H,W], [n,1,H,W] or [n,C,H,W].
struct ImageDims {
  std::size_t n, c, h, w;
};

inline ImageDims image_dims(const Shape& shape) {
  if (shape.size() == 3) return {shape[0], 1, shape[1], shape[2]};
  if (shape.size() == 4) return {shape[0], shape[1], shape[2], shape[3]};
  throw ShapeError("corrupt expects [n,H,W] or [n,C,H,W], got " + shape_str(shape));
}

}  // namespace detail

// Applies the severity-table parameters for spec.kind. Input and output live
// in [-1,1]; the result is clamped. Sample i draws from rng.fork(i), so the
// operator is deterministic under any evaluation order.
template <typename T>
Tensor<T> corrupt(const Tensor<T>& images, const CorruptionSpec& spec, const RngStream& rng) {
  spec.validate();
  const auto d = detail::image_dims(images.shape);
  const int sv = spec.severity - 1;
  Tensor<T> out = images;
  const std::size_t plane = d.h * d.w;
  const std::size_t per_sample = d.c * plane;

  auto to01 = [](double v) { return (v + 1.0) / 2.0; };
  auto from01 = [](double u) { return std::clamp(2.0 * u - 1.0, -1.0, 1.0); };

  for (std::size_t i = 0; i < d.n; ++i) {
    RngStream sr = rng.fork(i);
    T* img = out.data.data() + i * per_sample;
    switch (spec.kind) {
      case CorruptionKind::GaussianNoise: {
        const double std2 = 2.0 * kGaussianNoiseStd01[sv];  // [-1,1] scale
        for (std::size_t j = 0; j < per_sample; ++j)
          img[j] = T(std::clamp(double(img[j]) + std2 * sr.normal(), -1.0, 1.0));
        break;
      }
      case CorruptionKind::ShotNoise: {
        const double lam = kShotNoisePhotons[sv];
        for (std::size_t j = 0; j < per_sample; ++j) {
          const double u = std::clamp(to01(img[j]), 0.0, 1.0);
          const double shot = double(detail::poisson_draw(sr, u * lam)) / lam;
          img[j] = T(from01(shot));
        }
        break;
      }
      case CorruptionKind::ImpulseNoise: {
        const double p = kImpulseNoiseProb[sv];
        for (std::size_t j = 0; j < per_sample; ++j) {
          const double roll = sr.next_unit();
          if (roll < p) img[j] = T(sr.next_unit() < 0.5 ? -1.0 : 1.0);
        }
        break;
      }
      case CorruptionKind::DefocusBlur: {
        const int k = kDefocusKernel[sv];
        const int r = k / 2;
        std::vector<T> src(plane);
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          T* pl = img + ch * plane;
          std::copy(pl, pl + plane, src.begin());
          for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x) {
              double acc = 0;
              for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                  const std::size_t yy =
                      std::size_t(std::clamp<int>(int(y) + dy, 0, int(d.h) - 1));
                  const std::size_t xx =
                      std::size_t(std::clamp<int>(int(x) + dx, 0, int(d.w) - 1));
                  acc += src[yy * d.w + xx];
                }
              pl[y * d.w + x] = T(std::clamp(acc / double(k * k), -1.0, 1.0));
            }
        }
        break;
      }
      case CorruptionKind::Contrast: {
        const double f = kContrastFactor[sv];
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          T* pl = img + ch * plane;
          double mean = 0;
          for (std::size_t j = 0; j < plane; ++j) mean += to01(pl[j]);
          mean /= double(plane);
          for (std::size_t j = 0; j < plane; ++j)
            pl[j] = T(from01((to01(pl[j]) - mean) * f + mean));
        }
        break;
      }
      case CorruptionKind::Brightness: {
        const double b = kBrightnessOffset01[sv];
        for (std::size_t j = 0; j < per_sample; ++j)
          img[j] = T(from01(to01(img[j]) + b));
        break;
      }
      case CorruptionKind::Pixelate: {
        const int blk = kPixelateBlock[sv];
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          T* pl = img + ch * plane;
          for (std::size_t y0 = 0; y0 < d.h; y0 += std::size_t(blk))
            for (std::size_t x0 = 0; x0 < d.w; x0 += std::size_t(blk)) {
              const std::size_t y1 = std::min(y0 + std::size_t(blk), d.h);
              const std::size_t x1 = std::min(x0 + std::size_t(blk), d.w);
              double acc = 0;
              for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) acc += pl[y * d.w + x];
              const T v = T(acc / double((y1 - y0) * (x1 - x0)));
              for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) pl[y * d.w + x] = v;
            }
        }
        break;
      }
    }
  }
  return out;
}

// Brightness operator at an explicit offset (01 scale); offset 0 is the
// identity. The severity table above feeds this with its fixed offsets.
template <typename T>
Tensor<T> apply_brightness(const Tensor<T>& images, double offset01) {
  Tensor<T> out = images;
  for (T& v : out.data)
    v = T(std::clamp(2.0 * ((double(v) + 1.0) / 2.0 + offset01) - 1.0, -1.0, 1.0));
  return out;
}

// ---- IDX ingestion ----------------------------------------------------------

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError("idx: truncated while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Big-endian IDX: 3-D uint8 images (magic 0x803) and 1-D labels (0x801).
// Pixel p maps to 2*(p/255) - 1.
template <typename T>
LabeledDataset<T> load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("idx: cannot open " + images_path);
  const auto magic_i = detail::read_u32_be(imgs, "image magic");
  if (magic_i != kIdxImagesMagic)
    throw IoError("idx: bad image magic in " + images_path);
  const std::size_t n = detail::read_u32_be(imgs, "image count");
  const std::size_t h = detail::read_u32_be(imgs, "image rows");
  const std::size_t w = detail::read_u32_be(imgs, "image cols");
  if (n == 0 || h == 0 || w == 0) throw IoError("idx: empty image dims in " + images_path);
  std::vector<unsigned char> pixels(n * h * w);
  if (!imgs.read(reinterpret_cast<char*>(pixels.data()), std::streamsize(pixels.size())))
    throw IoError("idx: truncated image payload in " + images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("idx: cannot open " + labels_path);
  const auto magic_l = detail::read_u32_be(labs, "label magic");
  if (magic_l != kIdxLabelsMagic)
    throw IoError("idx: bad label magic in " + labels_path);
  const std::size_t nl = detail::read_u32_be(labs, "label count");
  if (nl != n)
    throw IoError("idx: image/label count mismatch (" + std::to_string(n) + " vs " +
                  std::to_string(nl) + ")");
  std::vector<unsigned char> raw_labels(nl);
  if (!labs.read(reinterpret_cast<char*>(raw_labels.data()), std::streamsize(nl)))
    throw IoError("idx: truncated label payload in " + labels_path);

  LabeledDataset<T> ds;
  ds.inputs = Tensor<T>({n, h, w});
  for (std::size_t j = 0; j < pixels.size(); ++j)
    ds.inputs[j] = T(2.0 * (double(pixels[j]) / 255.0) - 1.0);
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.provenance = "idx:" + images_path;
  return ds;
}

// [n,H,W] -> [n,1,H,W]; model inputs carry an explicit channel axis.
template <typename T>
LabeledDataset<T> with_channel_dim(LabeledDataset<T> ds) {
  if (ds.inputs.rank() == 3) {
    Shape s{ds.inputs.shape[0], 1, ds.inputs.shape[1], ds.inputs.shape[2]};
    ds.inputs = ds.inputs.reshaped(s);
  }
  return ds;
}

// ---- Batching ----------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> inputs;
  std::vector<int> labels;
};

// Seeded Fisher-Yates shuffle, then fixed-size slices; the last partial
// batch is kept.
template <typename T>
std::vector<Batch<T>> batches(const LabeledDataset<T>& ds, std::size_t batch_size,
                              const RngStream& shuffle_rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng = shuffle_rng;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t row = ds.inputs.size() / n;
  Shape sample_shape(ds.inputs.shape.begin() + 1, ds.inputs.shape.end());

  std::vector<Batch<T>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape bshape;
    bshape.push_back(count);
    for (auto ddim : sample_shape) bshape.push_back(ddim);
    Batch<T> b;
    b.inputs = Tensor<T>(bshape);
    b.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[start + i];
      std::copy(ds.inputs.data.begin() + src * row, ds.inputs.data.begin() + (src + 1) * row,
                b.inputs.data.begin() + i * row);
      b.labels[i] = ds.labels[src];
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace tea
