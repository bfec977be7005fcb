#pragma once

// Scalar losses over logits with analytic logit gradients. Shared by source
// training, the TENT/PL baselines, and the gradient checker.

#include <cmath>
#include <span>

#include "tea/energy.hpp"
#include "tea/tensor.hpp"

namespace tea {

template <typename T>
struct LossValue {
  double value = 0;
  Tensor<T> grad_logits;
};

// Mean softmax cross-entropy against integer labels.
template <typename T>
LossValue<T> cross_entropy_mean(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  if (labels.size() != n) throw ShapeError("cross_entropy: label count mismatch");
  LossValue<T> out;
  out.grad_logits = Tensor<T>(logits.shape);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data.data() + i * k;
    T* g = out.grad_logits.data.data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(double(row[j] - mx));
    const double lse = double(mx) + std::log(s);
    const std::size_t y = std::size_t(labels[i]);
    if (labels[i] < 0 || y >= k) throw Error("cross_entropy: label out of range");
    total += lse - double(row[y]);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(double(row[j]) - lse);
      g[j] = T((p - (j == y ? 1.0 : 0.0)) / double(n));
    }
  }
  out.value = total / double(n);
  return out;
}

// Mean Shannon entropy of the softmax predictions (the TENT objective).
// dH/dz_j = -p_j (log p_j + H) per row.
template <typename T>
LossValue<T> softmax_entropy_mean(const Tensor<T>& logits) {
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  LossValue<T> out;
  out.grad_logits = Tensor<T>(logits.shape);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data.data() + i * k;
    T* g = out.grad_logits.data.data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(double(row[j] - mx));
    const double lse = double(mx) + std::log(s);
    double h = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = double(row[j]) - lse;
      h -= std::exp(logp) * logp;
    }
    total += h;
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = double(row[j]) - lse;
      g[j] = T(-std::exp(logp) * (logp + h) / double(n));
    }
  }
  out.value = total / double(n);
  return out;
}

// Mean marginal energy (negative log-sum-exp) of the batch.
template <typename T>
LossValue<T> marginal_energy_mean(const Tensor<T>& logits) {
  LossValue<T> out;
  out.value = mean_of(energy_marginal(logits));
  out.grad_logits = energy_grad_logits(logits);
  const T inv_n = T(1) / T(logits.shape[0]);
  for (T& v : out.grad_logits.data) v *= inv_n;
  return out;
}

// Sum of all logits; the trivial fixture loss.
template <typename T>
LossValue<T> sum_logits(const Tensor<T>& logits) {
  LossValue<T> out;
  double s = 0;
  for (T v : logits.data) s += v;
  out.value = s;
  out.grad_logits = Tensor<T>(logits.shape, T(1));
  return out;
}

}  // namespace tea
