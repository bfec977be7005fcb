#pragma once

// Model topology, parameter state, and whole-model forward/backward.
// ModelState is a value; forward/backward never mutate it. Running stats
// change only through update_running_stats (source training) or the BN
// baseline's explicit replacement.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tea/layers.hpp"
#include "tea/rng.hpp"
#include "tea/tensor.hpp"

namespace tea {

struct ModelSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;  // per sample, e.g. {C,H,W} or {D}

  std::size_t num_classes() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      if (it->kind == LayerKind::Dense) return it->out_features;
    return 0;
  }
};

inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Dense:
      if (in.size() != 2 || in[1] != spec.in_features)
        throw ShapeError("Dense expects [N," + std::to_string(spec.in_features) + "], got " +
                         shape_str(in));
      return {in[0], spec.out_features};
    case LayerKind::Conv3x3:
      if (in.size() != 4 || in[1] != spec.in_channels)
        throw ShapeError("Conv3x3 expects [N," + std::to_string(spec.in_channels) +
                         ",H,W], got " + shape_str(in));
      return {in[0], spec.out_channels, in[2], in[3]};
    case LayerKind::ReLU:
      return in;
    case LayerKind::AvgPool2:
      if (in.size() != 4 || in[2] % 2 || in[3] % 2)
        throw ShapeError("AvgPool2 expects [N,C,2h,2w], got " + shape_str(in));
      return {in[0], in[1], in[2] / 2, in[3] / 2};
    case LayerKind::Flatten: {
      std::size_t f = 1;
      for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
      return {in[0], f};
    }
    case LayerKind::BatchNorm:
    case LayerKind::GroupNorm:
      if (in.size() < 2 || in[1] != spec.channels)
        throw ShapeError(std::string(layer_kind_name(spec.kind)) + " expects channel dim " +
                         std::to_string(spec.channels) + ", got " + shape_str(in));
      if (spec.kind == LayerKind::GroupNorm &&
          (spec.group_count == 0 || spec.channels % spec.group_count))
        throw ShapeError("GroupNorm group_count " + std::to_string(spec.group_count) +
                         " must divide channels " + std::to_string(spec.channels));
      return in;
  }
  throw ShapeError("unknown layer kind");
}

// Checks adjacent layer dims agree; returns per-layer output shapes for a
// batch of the given size.
inline std::vector<Shape> infer_shapes(const ModelSpec& spec, std::size_t batch) {
  Shape cur;
  cur.push_back(batch);
  for (std::size_t d : spec.input_shape) cur.push_back(d);
  std::vector<Shape> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    try {
      cur = layer_output_shape(spec.layers[i], cur);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(cur);
  }
  return out;
}

inline void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("model has no layers");
  if (spec.input_shape.empty()) throw ConfigError("model input shape is empty");
  auto shapes = infer_shapes(spec, 1);
  if (shapes.back().size() != 2)
    throw ConfigError("model must end with logits [N,K], got " + shape_str(shapes.back()));
}

template <typename T>
struct ModelState {
  ModelSpec spec;
  std::vector<LayerParams<T>> params;    // one per layer, empty slots for param-less kinds
  std::vector<RunningStats<T>> running;  // one per layer, used by BatchNorm only

  template <typename U>
  ModelState<U> cast() const {
    ModelState<U> out;
    out.spec = spec;
    for (const auto& p : params) out.params.push_back(p.template cast<U>());
    for (const auto& r : running) out.running.push_back(r.template cast<U>());
    return out;
  }
};

// Glorot-uniform weights, zero biases, identity norm affine, N(0,1) running stats.
template <typename T>
ModelState<T> init_model(const ModelSpec& spec, RngStream rng) {
  validate(spec);
  ModelState<T> m;
  m.spec = spec;
  m.params.resize(spec.layers.size());
  m.running.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerParams<T>& p = m.params[i];
    RngStream lr = rng.fork(i);
    switch (l.kind) {
      case LayerKind::Dense: {
        p.weight = Tensor<T>({l.out_features, l.in_features});
        p.bias = Tensor<T>({l.out_features});
        const double lim = std::sqrt(6.0 / double(l.in_features + l.out_features));
        for (T& v : p.weight.data) v = T(lr.uniform(-lim, lim));
        break;
      }
      case LayerKind::Conv3x3: {
        p.weight = Tensor<T>({l.out_channels, l.in_channels, 3, 3});
        p.bias = Tensor<T>({l.out_channels});
        const double fan_in = double(l.in_channels) * 9.0;
        const double fan_out = double(l.out_channels) * 9.0;
        const double lim = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& v : p.weight.data) v = T(lr.uniform(-lim, lim));
        break;
      }
      case LayerKind::BatchNorm:
        m.running[i].mean = Tensor<T>({l.channels});
        m.running[i].var = Tensor<T>({l.channels}, T(1));
        [[fallthrough]];
      case LayerKind::GroupNorm:
        p.gamma = Tensor<T>({l.channels}, T(1));
        p.beta = Tensor<T>({l.channels});
        break;
      default:
        break;
    }
  }
  return m;
}

// Everything backward needs; single-use by contract.
template <typename T>
struct ForwardCache {
  const ModelState<T>* model = nullptr;
  StatsMode mode = StatsMode::TrainStats;
  std::vector<LayerCache<T>> layers;
  bool consumed = false;
};

template <typename T>
std::pair<Tensor<T>, ForwardCache<T>> forward(const ModelState<T>& model, const Tensor<T>& batch,
                                              StatsMode mode) {
  Shape expect;
  expect.push_back(batch.shape.empty() ? 0 : batch.shape[0]);
  for (std::size_t d : model.spec.input_shape) expect.push_back(d);
  if (batch.shape != expect || batch.shape[0] < 1)
    throw ShapeError("batch shape " + shape_str(batch.shape) + " does not match model input " +
                     shape_str(expect));
  require_finite(batch, "input batch");

  ForwardCache<T> cache;
  cache.model = &model;
  cache.mode = mode;
  cache.layers.resize(model.spec.layers.size());
  Tensor<T> x = batch;
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    const LayerSpec& l = model.spec.layers[i];
    LayerCache<T>& lc = cache.layers[i];
    lc.input = x;
    switch (l.kind) {
      case LayerKind::Dense:
        x = nnk::dense_forward(l, model.params[i], x);
        break;
      case LayerKind::Conv3x3:
        x = nnk::conv3x3_forward(l, model.params[i], x);
        break;
      case LayerKind::ReLU:
        x = nnk::relu_forward(x);
        break;
      case LayerKind::AvgPool2:
        x = nnk::avgpool2_forward(x);
        break;
      case LayerKind::Flatten:
        x = x.reshaped(layer_output_shape(l, x.shape));
        break;
      case LayerKind::BatchNorm:
        x = nnk::batchnorm_forward(l, model.params[i], model.running[i], x, mode, lc);
        break;
      case LayerKind::GroupNorm:
        x = nnk::groupnorm_forward(l, model.params[i], x, lc);
        break;
    }
    if (!x.all_finite())
      throw NumericError("non-finite activation after layer " + std::to_string(i) + " (" +
                         layer_kind_name(l.kind) + ")");
  }
  return {std::move(x), std::move(cache)};
}

template <typename T>
struct BackwardResult {
  std::vector<LayerParams<T>> param_grads;
  Tensor<T> input_grad;
};

template <typename T>
BackwardResult<T> backward(const ModelState<T>& model, ForwardCache<T>& cache,
                           const Tensor<T>& grad_logits) {
  if (cache.model != &model) throw Error("cache does not belong to this model");
  if (cache.consumed) throw Error("forward cache already consumed");
  cache.consumed = true;

  BackwardResult<T> res;
  res.param_grads.resize(model.spec.layers.size());
  Tensor<T> g = grad_logits;
  for (std::size_t ii = model.spec.layers.size(); ii-- > 0;) {
    const LayerSpec& l = model.spec.layers[ii];
    LayerCache<T>& lc = cache.layers[ii];
    Tensor<T> dx;
    switch (l.kind) {
      case LayerKind::Dense:
        nnk::dense_backward(l, model.params[ii], lc.input, g, res.param_grads[ii], dx);
        break;
      case LayerKind::Conv3x3:
        nnk::conv3x3_backward(l, model.params[ii], lc.input, g, res.param_grads[ii], dx);
        break;
      case LayerKind::ReLU:
        dx = nnk::relu_backward(lc.input, g);
        break;
      case LayerKind::AvgPool2:
        dx = nnk::avgpool2_backward(lc.input.shape, g);
        break;
      case LayerKind::Flatten:
        dx = g.reshaped(lc.input.shape);
        break;
      case LayerKind::BatchNorm:
        nnk::batchnorm_backward(l, model.params[ii], lc, g, res.param_grads[ii], dx);
        break;
      case LayerKind::GroupNorm:
        nnk::groupnorm_backward(l, model.params[ii], lc, g, res.param_grads[ii], dx);
        break;
    }
    g = std::move(dx);
  }
  res.input_grad = std::move(g);
  return res;
}

// Folds the cache's batch statistics into the running stats with the given
// momentum: running = (1-momentum)*running + momentum*batch. Source training
// only; adaptation never calls this.
template <typename T>
void update_running_stats(ModelState<T>& model, const ForwardCache<T>& cache, T momentum) {
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    if (model.spec.layers[i].kind != LayerKind::BatchNorm) continue;
    const LayerCache<T>& lc = cache.layers[i];
    RunningStats<T>& rs = model.running[i];
    for (std::size_t c = 0; c < rs.mean.size(); ++c) {
      rs.mean[c] = (T(1) - momentum) * rs.mean[c] + momentum * lc.mean[c];
      rs.var[c] = (T(1) - momentum) * rs.var[c] + momentum * lc.var[c];
    }
  }
}

}  // namespace tea
