#pragma once

// Energy-based reinterpretation of a classifier. The marginal energy of an
// input is the negative log-sum-exp of its logits; the joint energy of
// (input, class) is the negated logit. The partition function is intractable
// and deliberately has no representation here: everything works with
// unnormalized log-densities.

#include <cmath>
#include <span>
#include <vector>

#include "tea/model.hpp"
#include "tea/tensor.hpp"

namespace tea {

// Stateless view of a model for energy evaluation; never mutates it.
template <typename T>
struct EnergyView {
  const ModelState<T>* model = nullptr;
  StatsMode stats_mode = StatsMode::TrainStats;
};

// E(x, y) = -logits[y], per row.
template <typename T>
Tensor<T> energy_joint(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  if (labels.size() != n) throw ShapeError("energy_joint: label count mismatch");
  Tensor<T> out({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= k)
      throw Error("energy_joint: label " + std::to_string(labels[i]) + " out of range [0," +
                  std::to_string(k) + ")");
    out[i] = -logits.at2(i, std::size_t(labels[i]));
  }
  return out;
}

// E(x) = -log sum_y exp(logits[y]), max-shifted so any finite logits stay finite.
template <typename T>
Tensor<T> energy_marginal(const Tensor<T>& logits) {
  require_finite(logits, "logits");
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  Tensor<T> out({n});
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data.data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(double(row[j] - mx));
    out[i] = -(mx + T(std::log(s)));
  }
  return out;
}

// dE/dlogits = -softmax(logits), row-wise.
template <typename T>
Tensor<T> energy_grad_logits(const Tensor<T>& logits) {
  require_finite(logits, "logits");
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  Tensor<T> out(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data.data() + i * k;
    T* g = out.data.data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = T(std::exp(double(row[j] - mx)));
      s += g[j];
    }
    for (std::size_t j = 0; j < k; ++j) g[j] = T(-double(g[j]) / s);
  }
  return out;
}

// log p(x) up to the (never computed) log partition constant: just -E.
template <typename T>
Tensor<T> unnormalized_log_density(const Tensor<T>& energies) {
  Tensor<T> out = energies;
  for (T& v : out.data) v = -v;
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  Tensor<T> p = energy_grad_logits(logits);
  for (T& v : p.data) v = -v;
  return p;
}

template <typename T>
struct EnergyEval {
  Tensor<T> energies;                        // per sample, [batch]
  Tensor<T> input_grad;                      // d(mean energy)/d(batch)
  std::vector<LayerParams<T>> param_grads;   // d(mean energy)/d(theta)
};

// Marginal energies of a batch plus gradients of their MEAN with respect to
// both the inputs and every parameter tensor (masking is the caller's job).
template <typename T>
EnergyEval<T> energy_of_inputs(const EnergyView<T>& view, const Tensor<T>& batch) {
  auto [logits, cache] = forward(*view.model, batch, view.stats_mode);
  EnergyEval<T> out;
  out.energies = energy_marginal(logits);
  Tensor<T> g = energy_grad_logits(logits);
  const T inv_n = T(1) / T(batch.shape[0]);
  for (T& v : g.data) v *= inv_n;
  auto back = backward(*view.model, cache, g);
  out.input_grad = std::move(back.input_grad);
  out.param_grads = std::move(back.param_grads);
  return out;
}

template <typename T>
double mean_of(const Tensor<T>& t) {
  if (t.empty()) throw Error("mean of empty tensor");
  double s = 0;
  for (T v : t.data) s += v;
  return s / double(t.size());
}

}  // namespace tea
