#pragma once

// Adam and plain SGD over the per-layer parameter bundles, restricted by an
// adaptable mask. Moment state mirrors the parameter structure.

#include <cstdint>
#include <vector>

#include "tea/model.hpp"

namespace tea {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-tensor flags; exactly the normalization affine tensors for every
// parameter-updating adaptation method.
struct LayerMask {
  bool weight = false;
  bool bias = false;
  bool gamma = false;
  bool beta = false;
};

struct AdaptableMask {
  std::vector<LayerMask> layers;

  bool any() const {
    for (const auto& l : layers)
      if (l.weight || l.bias || l.gamma || l.beta) return true;
    return false;
  }
};

inline AdaptableMask norm_affine_mask(const ModelSpec& spec) {
  AdaptableMask m;
  m.layers.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].is_norm()) {
      m.layers[i].gamma = true;
      m.layers[i].beta = true;
    }
  return m;
}

inline AdaptableMask all_params_mask(const ModelSpec& spec) {
  AdaptableMask m;
  m.layers.resize(spec.layers.size());
  for (auto& l : m.layers) l = LayerMask{true, true, true, true};
  return m;
}

inline AdaptableMask empty_mask(const ModelSpec& spec) {
  AdaptableMask m;
  m.layers.resize(spec.layers.size());
  return m;
}

template <typename T>
struct OptimizerState {
  OptimizerConfig cfg;
  std::vector<LayerParams<T>> m;  // first moments
  std::vector<LayerParams<T>> v;  // second moments
  std::int64_t t = 0;

  explicit OptimizerState(OptimizerConfig c = {}) : cfg(c) {}
};

namespace detail {

template <typename T>
void adam_update_tensor(Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v,
                        const OptimizerConfig& cfg, double lr, std::int64_t t) {
  if (m.empty()) m = zeros_like(p);
  if (v.empty()) v = zeros_like(p);
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * double(m[i]) + (1 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * double(v[i]) + (1 - cfg.beta2) * gi * gi;
    m[i] = T(mi);
    v[i] = T(vi);
    const double mhat = bc1 > 0 ? mi / bc1 : mi;
    const double vhat = bc2 > 0 ? vi / bc2 : vi;
    p[i] = T(double(p[i]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace detail

// One optimizer step at learning rate lr on the masked tensors. Gradients
// for unmasked tensors are ignored; their parameters stay bit-identical.
template <typename T>
void optimizer_step(ModelState<T>& model, const std::vector<LayerParams<T>>& grads,
                    const AdaptableMask& mask, OptimizerState<T>& state, double lr) {
  if (mask.layers.size() != model.spec.layers.size())
    throw ShapeError("mask layer count does not match model");
  if (!mask.any()) return;
  if (state.m.empty()) {
    state.m.resize(model.params.size());
    state.v.resize(model.params.size());
  }
  ++state.t;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto step_tensor = [&](Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v,
                           bool on) {
      if (!on || p.empty()) return;
      if (!g.same_shape(p)) throw ShapeError("gradient/parameter shape mismatch");
      if (state.cfg.kind == OptimizerKind::Sgd) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = T(double(p[j]) - lr * double(g[j]));
      } else {
        detail::adam_update_tensor(p, g, m, v, state.cfg, lr, state.t);
      }
    };
    step_tensor(model.params[i].weight, grads[i].weight, state.m[i].weight, state.v[i].weight,
                mask.layers[i].weight);
    step_tensor(model.params[i].bias, grads[i].bias, state.m[i].bias, state.v[i].bias,
                mask.layers[i].bias);
    step_tensor(model.params[i].gamma, grads[i].gamma, state.m[i].gamma, state.v[i].gamma,
                mask.layers[i].gamma);
    step_tensor(model.params[i].beta, grads[i].beta, state.m[i].beta, state.v[i].beta,
                mask.layers[i].beta);
  }
}

}  // namespace tea
