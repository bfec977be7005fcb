#pragma once

// Langevin negative sampler over the energy landscape. Each chain element
// moves downhill by half a step of its own energy gradient plus injected
// Gaussian noise; the noise scale depends on the scaling mode. Sample i of a
// batch draws from its own child stream, so per-element chains can run in
// parallel without changing the results.

#include <algorithm>
#include <string>
#include <vector>

#include "tea/energy.hpp"
#include "tea/rng.hpp"
#include "tea/tensor.hpp"

namespace tea {

enum class SgldInit { Uniform, Gaussian };

// PaperLiteral: noise scale alpha. Decoupled: independent noise_std (the
// hyperparameter-table reading; default). ExactLangevin: sqrt(alpha), the
// discretization whose stationary law is known analytically; used by the
// sampler oracle, never by adaptation.
enum class SgldScaling { PaperLiteral, Decoupled, ExactLangevin };

struct SgldConfig {
  int steps = 20;
  double step_size = 0.1;
  double noise_std = 0.01;
  SgldInit init = SgldInit::Uniform;
  bool clamp_to_range = false;
  SgldScaling scaling = SgldScaling::Decoupled;

  double noise_scale() const {
    switch (scaling) {
      case SgldScaling::PaperLiteral: return step_size;
      case SgldScaling::Decoupled: return noise_std;
      case SgldScaling::ExactLangevin: return std::sqrt(step_size);
    }
    return 0;
  }

  void validate() const {
    if (steps < 1) throw ConfigError("sgld steps must be >= 1");
    if (!(step_size > 0)) throw ConfigError("sgld step_size must be > 0");
    if (noise_std < 0) throw ConfigError("sgld noise_std must be >= 0");
  }
};

// Per-sample energies plus per-sample input gradients dE_i/dx_i (not the
// mean-energy gradient).
template <typename T>
struct SampleEnergy {
  Tensor<T> energies;
  Tensor<T> input_grad;
};

// Marginal-energy adapter over a model view. energy_of_inputs differentiates
// the batch MEAN energy; rescaling by the batch size gives the gradient of
// the SUMMED energy, which is the per-sample gradient dE_i/dx_i whenever the
// energies decouple and the full coupled gradient under train-stats
// normalization, where batch statistics tie the samples together.
template <typename T>
struct MarginalEnergyOf {
  EnergyView<T> view;

  SampleEnergy<T> operator()(const Tensor<T>& x) const {
    auto ev = energy_of_inputs(view, x);
    const T n = T(x.shape[0]);
    for (T& v : ev.input_grad.data) v *= n;
    return {std::move(ev.energies), std::move(ev.input_grad)};
  }
};

// E(x) = ||x||^2 / 2 per sample; analytic test hook with stationary law
// N(0, I) under exact Langevin dynamics.
template <typename T>
struct QuadraticEnergy {
  SampleEnergy<T> operator()(const Tensor<T>& x) const {
    const std::size_t n = x.shape[0];
    const std::size_t d = x.size() / n;
    SampleEnergy<T> out;
    out.energies = Tensor<T>({n});
    out.input_grad = x;
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0;
      const T* xi = x.data.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) e += 0.5 * double(xi[j]) * double(xi[j]);
      out.energies[i] = T(e);
    }
    return out;
  }
};

template <typename T>
Tensor<T> init_negatives(const SgldConfig& cfg, const Shape& shape, const RngStream& rng) {
  cfg.validate();
  Tensor<T> x(shape);
  const std::size_t n = shape[0];
  const std::size_t d = x.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    RngStream sr = rng.fork(i);
    T* xi = x.data.data() + i * d;
    for (std::size_t j = 0; j < d; ++j)
      xi[j] = T(cfg.init == SgldInit::Uniform ? sr.uniform(-1, 1) : sr.normal());
  }
  return x;
}

namespace detail {

// In-place drift + noise; sample i draws from noise_base.fork(i).
template <typename T>
void sgld_apply(Tensor<T>& x, const Tensor<T>& grad, const SgldConfig& cfg,
                const RngStream& noise_base) {
  const T drift = T(cfg.step_size / 2);
  const T scale = T(cfg.noise_scale());
  const std::size_t n = x.shape[0];
  const std::size_t d = x.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    RngStream sr = noise_base.fork(i);
    T* xi = x.data.data() + i * d;
    const T* gi = grad.data.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      T v = xi[j] - drift * gi[j];
      if (scale > T(0)) v += scale * T(sr.normal());
      if (cfg.clamp_to_range) v = std::clamp(v, T(-1), T(1));
      xi[j] = v;
    }
  }
}

}  // namespace detail

// One update: x <- x - (alpha/2) dE/dx + scale * eps. Advances rng by one so
// consecutive calls see distinct per-sample noise streams.
template <typename T, typename EnergyFn>
Tensor<T> sgld_step(EnergyFn&& energy, const Tensor<T>& x, const SgldConfig& cfg, RngStream& rng,
                    int step_index = -1) {
  cfg.validate();
  require_finite(x, "sgld state");
  SampleEnergy<T> se = energy(x);
  if (!se.input_grad.all_finite())
    throw NumericError("non-finite sgld gradient at step " +
                       (step_index >= 0 ? std::to_string(step_index) : std::string("?")));
  Tensor<T> out = x;
  detail::sgld_apply(out, se.input_grad, cfg, rng.fork(rng.next_u64()));
  return out;
}

template <typename T>
struct ChainResult {
  Tensor<T> negatives;
  std::vector<double> energy_trace;  // mean energy of the state entering each step
  double max_energy_increase = 0;    // largest consecutive trace increase observed
};

// Fresh init from p0 followed by cfg.steps updates (no replay buffer). The
// trace records the mean energy of x_t before step t acts on it.
template <typename T, typename EnergyFn>
ChainResult<T> sgld_chain(EnergyFn&& energy, const SgldConfig& cfg, const Shape& batch_shape,
                          RngStream rng) {
  cfg.validate();
  ChainResult<T> res;
  Tensor<T> x = init_negatives<T>(cfg, batch_shape, rng.fork(0x696e6974));  // "init"
  RngStream noise = rng.fork(0x6e6f6973);                                   // "nois"
  res.energy_trace.reserve(std::size_t(cfg.steps));
  for (int t = 0; t < cfg.steps; ++t) {
    SampleEnergy<T> se = energy(x);
    if (!se.input_grad.all_finite())
      throw NumericError("non-finite sgld gradient at step " + std::to_string(t));
    res.energy_trace.push_back(mean_of(se.energies));
    if (t > 0)
      res.max_energy_increase =
          std::max(res.max_energy_increase, res.energy_trace[t] - res.energy_trace[t - 1]);
    detail::sgld_apply(x, se.input_grad, cfg, noise.fork(std::uint64_t(t)));
    if (!x.all_finite())
      throw NumericError("non-finite negatives after step " + std::to_string(t));
  }
  res.negatives = std::move(x);
  return res;
}

}  // namespace tea
