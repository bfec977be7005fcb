#pragma once

// Layer kinds, parameter bundles, and per-layer forward/backward kernels.
// No autodiff graph: each kernel ships its hand-derived backward, returning
// gradients for parameters and for the layer input. Reductions are plain
// sequential loops accumulated in double, so results are order-deterministic.

#include <cstddef>
#include <string>
#include <vector>

#include "tea/tensor.hpp"

namespace tea {

enum class LayerKind { Dense, Conv3x3, ReLU, AvgPool2, Flatten, BatchNorm, GroupNorm };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv3x3: return "Conv3x3";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::AvgPool2: return "AvgPool2";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::GroupNorm: return "GroupNorm";
  }
  return "?";
}

// Variance denominator epsilon for both normalization kinds.
inline constexpr double kNormEps = 1e-5;

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_features = 0;   // Dense
  std::size_t out_features = 0;  // Dense
  std::size_t in_channels = 0;   // Conv3x3
  std::size_t out_channels = 0;  // Conv3x3
  std::size_t channels = 0;      // BatchNorm / GroupNorm
  std::size_t group_count = 0;   // GroupNorm

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_features = in;
    s.out_features = out;
    return s;
  }
  static LayerSpec conv3x3(std::size_t in_ch, std::size_t out_ch) {
    LayerSpec s;
    s.kind = LayerKind::Conv3x3;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::ReLU}; }
  static LayerSpec avg_pool2() { return LayerSpec{LayerKind::AvgPool2}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::Flatten}; }
  static LayerSpec batch_norm(std::size_t ch) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.channels = ch;
    return s;
  }
  static LayerSpec group_norm(std::size_t ch, std::size_t groups) {
    LayerSpec s;
    s.kind = LayerKind::GroupNorm;
    s.channels = ch;
    s.group_count = groups;
    return s;
  }

  bool has_params() const {
    return kind == LayerKind::Dense || kind == LayerKind::Conv3x3 ||
           kind == LayerKind::BatchNorm || kind == LayerKind::GroupNorm;
  }
  bool is_norm() const { return kind == LayerKind::BatchNorm || kind == LayerKind::GroupNorm; }
};

// Parameter bundle for one layer. Unused slots stay empty; BatchNorm and
// GroupNorm use gamma/beta, Dense and Conv3x3 use weight/bias.
template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> gamma;
  Tensor<T> beta;

  template <typename U>
  LayerParams<U> cast() const {
    return LayerParams<U>{weight.template cast<U>(), bias.template cast<U>(),
                          gamma.template cast<U>(), beta.template cast<U>()};
  }
};

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  template <typename U>
  RunningStats<U> cast() const {
    return RunningStats<U>{mean.template cast<U>(), var.template cast<U>()};
  }
};

enum class StatsMode { TrainStats, EvalStats };

// Per-layer values saved by forward for the matching backward.
template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> xhat;        // normalized pre-affine values (norm layers)
  Tensor<T> mean;        // batch stats actually used: per channel (BN) or per (n,group) (GN)
  Tensor<T> var;
  StatsMode mode = StatsMode::TrainStats;
};

namespace nnk {

// ---- Dense ---------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const LayerSpec& spec, const LayerParams<T>& p, const Tensor<T>& x) {
  const std::size_t n = x.shape[0], in = spec.in_features, out = spec.out_features;
  Tensor<T> y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data.data() + i * in;
    T* yi = y.data.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = p.bias[o];
      const T* wo = p.weight.data.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) acc += double(wo[k]) * double(xi[k]);
      yi[o] = T(acc);
    }
  }
  return y;
}

template <typename T>
void dense_backward(const LayerSpec& spec, const LayerParams<T>& p, const Tensor<T>& x,
                    const Tensor<T>& g, LayerParams<T>& grads, Tensor<T>& dx) {
  const std::size_t n = x.shape[0], in = spec.in_features, out = spec.out_features;
  grads.weight = Tensor<T>({out, in});
  grads.bias = Tensor<T>({out});
  dx = zeros_like(x);
  for (std::size_t o = 0; o < out; ++o) {
    double db = 0;
    for (std::size_t i = 0; i < n; ++i) db += g.data[i * out + o];
    grads.bias[o] = T(db);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data.data() + i * in;
    const T* gi = g.data.data() + i * out;
    T* dxi = dx.data.data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T go = gi[o];
      const T* wo = p.weight.data.data() + o * in;
      T* dwo = grads.weight.data.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) {
        dwo[k] += go * xi[k];
        dxi[k] += go * wo[k];
      }
    }
  }
}

// ---- Conv3x3, stride 1, zero padding 1 ------------------------------------

template <typename T>
Tensor<T> conv3x3_forward(const LayerSpec& spec, const LayerParams<T>& p, const Tensor<T>& x) {
  const std::size_t n = x.shape[0], c_in = spec.in_channels, h = x.shape[2], w = x.shape[3];
  const std::size_t c_out = spec.out_channels;
  Tensor<T> y({n, c_out, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < c_out; ++f) {
      T* yf = y.data.data() + ((i * c_out + f) * h) * w;
      const T bf = p.bias[f];
      for (std::size_t q = 0; q < h * w; ++q) yf[q] = bf;
      for (std::size_t c = 0; c < c_in; ++c) {
        const T* xc = x.data.data() + ((i * c_in + c) * h) * w;
        const T* wk = p.weight.data.data() + ((f * c_in + c) * 3) * 3;
        for (std::size_t u = 0; u < 3; ++u) {
          for (std::size_t v = 0; v < 3; ++v) {
            const T wv = wk[u * 3 + v];
            // output row r reads input row r+u-1
            const std::ptrdiff_t du = std::ptrdiff_t(u) - 1, dv = std::ptrdiff_t(v) - 1;
            const std::size_t r0 = du < 0 ? 1 : 0;
            const std::size_t r1 = du > 0 ? h - 1 : h;
            const std::size_t s0 = dv < 0 ? 1 : 0;
            const std::size_t s1 = dv > 0 ? w - 1 : w;
            for (std::size_t r = r0; r < r1; ++r) {
              const T* xrow = xc + std::size_t(std::ptrdiff_t(r) + du) * w + dv;
              T* yrow = yf + r * w;
              for (std::size_t s = s0; s < s1; ++s) yrow[s] += wv * xrow[s];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv3x3_backward(const LayerSpec& spec, const LayerParams<T>& p, const Tensor<T>& x,
                      const Tensor<T>& g, LayerParams<T>& grads, Tensor<T>& dx) {
  const std::size_t n = x.shape[0], c_in = spec.in_channels, h = x.shape[2], w = x.shape[3];
  const std::size_t c_out = spec.out_channels;
  grads.weight = Tensor<T>({c_out, c_in, 3, 3});
  grads.bias = Tensor<T>({c_out});
  dx = zeros_like(x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < c_out; ++f) {
      const T* gf = g.data.data() + ((i * c_out + f) * h) * w;
      double db = 0;
      for (std::size_t q = 0; q < h * w; ++q) db += gf[q];
      grads.bias[f] += T(db);
      for (std::size_t c = 0; c < c_in; ++c) {
        const T* xc = x.data.data() + ((i * c_in + c) * h) * w;
        T* dxc = dx.data.data() + ((i * c_in + c) * h) * w;
        const T* wk = p.weight.data.data() + ((f * c_in + c) * 3) * 3;
        T* dwk = grads.weight.data.data() + ((f * c_in + c) * 3) * 3;
        for (std::size_t u = 0; u < 3; ++u) {
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t du = std::ptrdiff_t(u) - 1, dv = std::ptrdiff_t(v) - 1;
            const std::size_t r0 = du < 0 ? 1 : 0;
            const std::size_t r1 = du > 0 ? h - 1 : h;
            const std::size_t s0 = dv < 0 ? 1 : 0;
            const std::size_t s1 = dv > 0 ? w - 1 : w;
            const T wv = wk[u * 3 + v];
            double dw = 0;
            for (std::size_t r = r0; r < r1; ++r) {
              const T* xrow = xc + std::size_t(std::ptrdiff_t(r) + du) * w + dv;
              T* dxrow = dxc + std::size_t(std::ptrdiff_t(r) + du) * w + dv;
              const T* grow = gf + r * w;
              for (std::size_t s = s0; s < s1; ++s) {
                dw += double(grow[s]) * double(xrow[s]);
                dxrow[s] += grow[s] * wv;
              }
            }
            dwk[u * 3 + v] += T(dw);
          }
        }
      }
    }
  }
}

// ---- ReLU ------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data)
    if (v < T(0)) v = T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& g) {
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.data[i] <= T(0)) dx.data[i] = T(0);
  return dx;
}

// ---- AvgPool2 (2x2 window, stride 2) ---------------------------------------

template <typename T>
Tensor<T> avgpool2_forward(const Tensor<T>& x) {
  const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  if (h % 2 || w % 2)
    throw ShapeError("AvgPool2 requires even spatial dims, got " + shape_str(x.shape));
  Tensor<T> y({n, c, h / 2, w / 2});
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const T* xp = x.data.data() + nc * h * w;
    T* yp = y.data.data() + nc * (h / 2) * (w / 2);
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j)
        yp[i * (w / 2) + j] =
            (xp[(2 * i) * w + 2 * j] + xp[(2 * i) * w + 2 * j + 1] +
             xp[(2 * i + 1) * w + 2 * j] + xp[(2 * i + 1) * w + 2 * j + 1]) /
            T(4);
  }
  return y;
}

template <typename T>
Tensor<T> avgpool2_backward(const Shape& in_shape, const Tensor<T>& g) {
  const std::size_t n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
  Tensor<T> dx(in_shape);
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const T* gp = g.data.data() + nc * (h / 2) * (w / 2);
    T* dxp = dx.data.data() + nc * h * w;
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        const T v = gp[i * (w / 2) + j] / T(4);
        dxp[(2 * i) * w + 2 * j] = v;
        dxp[(2 * i) * w + 2 * j + 1] = v;
        dxp[(2 * i + 1) * w + 2 * j] = v;
        dxp[(2 * i + 1) * w + 2 * j + 1] = v;
      }
  }
  return dx;
}

// ---- BatchNorm -------------------------------------------------------------
// Normalizes per channel over batch (and spatial dims when rank 4).
// Input layout: [N, C, inner...] with inner = product of trailing dims.

template <typename T>
Tensor<T> batchnorm_forward(const LayerSpec& spec, const LayerParams<T>& p,
                            const RunningStats<T>& run, const Tensor<T>& x, StatsMode mode,
                            LayerCache<T>& cache) {
  const std::size_t n = x.shape[0], c = spec.channels;
  const std::size_t inner = x.size() / (n * c);
  Tensor<T> mean({c}), var({c});
  if (mode == StatsMode::TrainStats) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0, sumsq = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* xp = x.data.data() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          sum += xp[j];
          sumsq += double(xp[j]) * double(xp[j]);
        }
      }
      const double m = double(n * inner);
      const double mu = sum / m;
      mean[ch] = T(mu);
      var[ch] = T(std::max(0.0, sumsq / m - mu * mu));
    }
  } else {
    mean = run.mean;
    var = run.var;
  }
  Tensor<T> y(x.shape), xhat(x.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T istd = T(1.0 / std::sqrt(double(var[ch]) + kNormEps));
    const T mu = mean[ch], ga = p.gamma[ch], be = p.beta[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const T* xp = x.data.data() + (i * c + ch) * inner;
      T* hp = xhat.data.data() + (i * c + ch) * inner;
      T* yp = y.data.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        hp[j] = (xp[j] - mu) * istd;
        yp[j] = ga * hp[j] + be;
      }
    }
  }
  cache.xhat = std::move(xhat);
  cache.mean = std::move(mean);
  cache.var = std::move(var);
  cache.mode = mode;
  return y;
}

template <typename T>
void batchnorm_backward(const LayerSpec& spec, const LayerParams<T>& p, const LayerCache<T>& cache,
                        const Tensor<T>& g, LayerParams<T>& grads, Tensor<T>& dx) {
  const Tensor<T>& x = cache.input;
  const std::size_t n = x.shape[0], c = spec.channels;
  const std::size_t inner = x.size() / (n * c);
  const double m = double(n * inner);
  grads.gamma = Tensor<T>({c});
  grads.beta = Tensor<T>({c});
  dx = zeros_like(x);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double istd = 1.0 / std::sqrt(double(cache.var[ch]) + kNormEps);
    const double mu = cache.mean[ch];
    const double ga = p.gamma[ch];
    double dga = 0, dbe = 0, sum_dxhat = 0, sum_dxhat_xm = 0, sum_xm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* xp = x.data.data() + (i * c + ch) * inner;
      const T* hp = cache.xhat.data.data() + (i * c + ch) * inner;
      const T* gp = g.data.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        dga += double(gp[j]) * double(hp[j]);
        dbe += gp[j];
        const double dxhat = double(gp[j]) * ga;
        sum_dxhat += dxhat;
        sum_dxhat_xm += dxhat * (double(xp[j]) - mu);
        sum_xm += double(xp[j]) - mu;
      }
    }
    grads.gamma[ch] = T(dga);
    grads.beta[ch] = T(dbe);
    if (cache.mode == StatsMode::EvalStats) {
      // Stats are constants: straight-through scale.
      const T k = T(ga * istd);
      for (std::size_t i = 0; i < n; ++i) {
        const T* gp = g.data.data() + (i * c + ch) * inner;
        T* dp = dx.data.data() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) dp[j] = gp[j] * k;
      }
    } else {
      const double dvar = sum_dxhat_xm * (-0.5) * istd * istd * istd;
      const double dmu = -istd * sum_dxhat + dvar * (-2.0 / m) * sum_xm;
      for (std::size_t i = 0; i < n; ++i) {
        const T* xp = x.data.data() + (i * c + ch) * inner;
        const T* gp = g.data.data() + (i * c + ch) * inner;
        T* dp = dx.data.data() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          const double dxhat = double(gp[j]) * ga;
          dp[j] = T(dxhat * istd + dvar * 2.0 * (double(xp[j]) - mu) / m + dmu / m);
        }
      }
    }
  }
}

// ---- GroupNorm -------------------------------------------------------------
// Normalizes per (sample, group) over the group's channels and spatial dims.
// Batch-independent, so both stats modes behave identically.

template <typename T>
Tensor<T> groupnorm_forward(const LayerSpec& spec, const LayerParams<T>& p, const Tensor<T>& x,
                            LayerCache<T>& cache) {
  const std::size_t n = x.shape[0], c = spec.channels, groups = spec.group_count;
  const std::size_t inner = x.size() / (n * c);
  const std::size_t cpg = c / groups;
  const std::size_t m = cpg * inner;
  Tensor<T> mean({n, groups}), var({n, groups});
  Tensor<T> y(x.shape), xhat(x.shape);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      double sum = 0, sumsq = 0;
      for (std::size_t cc = gi * cpg; cc < (gi + 1) * cpg; ++cc) {
        const T* xp = x.data.data() + (i * c + cc) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          sum += xp[j];
          sumsq += double(xp[j]) * double(xp[j]);
        }
      }
      const double mu = sum / double(m);
      const double v = std::max(0.0, sumsq / double(m) - mu * mu);
      mean.at2(i, gi) = T(mu);
      var.at2(i, gi) = T(v);
      const T istd = T(1.0 / std::sqrt(v + kNormEps));
      for (std::size_t cc = gi * cpg; cc < (gi + 1) * cpg; ++cc) {
        const T* xp = x.data.data() + (i * c + cc) * inner;
        T* hp = xhat.data.data() + (i * c + cc) * inner;
        T* yp = y.data.data() + (i * c + cc) * inner;
        const T ga = p.gamma[cc], be = p.beta[cc];
        for (std::size_t j = 0; j < inner; ++j) {
          hp[j] = (xp[j] - T(mu)) * istd;
          yp[j] = ga * hp[j] + be;
        }
      }
    }
  }
  cache.xhat = std::move(xhat);
  cache.mean = std::move(mean);
  cache.var = std::move(var);
  return y;
}

template <typename T>
void groupnorm_backward(const LayerSpec& spec, const LayerParams<T>& p, const LayerCache<T>& cache,
                        const Tensor<T>& g, LayerParams<T>& grads, Tensor<T>& dx) {
  const Tensor<T>& x = cache.input;
  const std::size_t n = x.shape[0], c = spec.channels, groups = spec.group_count;
  const std::size_t inner = x.size() / (n * c);
  const std::size_t cpg = c / groups;
  const double m = double(cpg * inner);
  grads.gamma = Tensor<T>({c});
  grads.beta = Tensor<T>({c});
  dx = zeros_like(x);
  for (std::size_t cc = 0; cc < c; ++cc) {
    double dga = 0, dbe = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* hp = cache.xhat.data.data() + (i * c + cc) * inner;
      const T* gp = g.data.data() + (i * c + cc) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        dga += double(gp[j]) * double(hp[j]);
        dbe += gp[j];
      }
    }
    grads.gamma[cc] = T(dga);
    grads.beta[cc] = T(dbe);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const double mu = cache.mean.at2(i, gi);
      const double istd = 1.0 / std::sqrt(double(cache.var.at2(i, gi)) + kNormEps);
      double sum_dxhat = 0, sum_dxhat_xm = 0, sum_xm = 0;
      for (std::size_t cc = gi * cpg; cc < (gi + 1) * cpg; ++cc) {
        const T* xp = x.data.data() + (i * c + cc) * inner;
        const T* gp = g.data.data() + (i * c + cc) * inner;
        const double ga = p.gamma[cc];
        for (std::size_t j = 0; j < inner; ++j) {
          const double dxhat = double(gp[j]) * ga;
          sum_dxhat += dxhat;
          sum_dxhat_xm += dxhat * (double(xp[j]) - mu);
          sum_xm += double(xp[j]) - mu;
        }
      }
      const double dvar = sum_dxhat_xm * (-0.5) * istd * istd * istd;
      const double dmu = -istd * sum_dxhat + dvar * (-2.0 / m) * sum_xm;
      for (std::size_t cc = gi * cpg; cc < (gi + 1) * cpg; ++cc) {
        const T* xp = x.data.data() + (i * c + cc) * inner;
        const T* gp = g.data.data() + (i * c + cc) * inner;
        T* dp = dx.data.data() + (i * c + cc) * inner;
        const double ga = p.gamma[cc];
        for (std::size_t j = 0; j < inner; ++j) {
          const double dxhat = double(gp[j]) * ga;
          dp[j] = T(dxhat * istd + dvar * 2.0 * (double(xp[j]) - mu) / m + dmu / m);
        }
      }
    }
  }
}

}  // namespace nnk
}  // namespace tea
