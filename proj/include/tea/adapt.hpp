#pragma once

// The adaptation engine: contrastive-divergence updates of the normalization
// affine parameters (TEA), plus the BN-stats, TENT and pseudo-label baselines
// and a no-op SOURCE reference. Negatives from the SGLD chain are constants
// for the parameter gradient; no gradient flows through the sampling chain.
// Running statistics are never written during adaptation.

#include <optional>
#include <string>
#include <vector>

#include "tea/losses.hpp"
#include "tea/metrics.hpp"
#include "tea/optimizer.hpp"
#include "tea/sgld.hpp"

namespace tea {

enum class AdaptMethod { TEA, BN, TENT, PL, SOURCE };
enum class AdaptMode { Continual, Episodic };

inline const char* adapt_method_name(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::TEA: return "TEA";
    case AdaptMethod::BN: return "BN";
    case AdaptMethod::TENT: return "TENT";
    case AdaptMethod::PL: return "PL";
    case AdaptMethod::SOURCE: return "SOURCE";
  }
  return "?";
}

struct AdaptConfig {
  AdaptMethod method = AdaptMethod::TEA;
  int steps = 1;        // N, per batch
  double rate = 0.001;  // beta
  OptimizerConfig optimizer;
  AdaptMode mode = AdaptMode::Continual;
  SgldConfig sgld;
  double pl_confidence_threshold = 0.9;

  void validate() const {
    if (steps < 1) throw ConfigError("adapt steps must be >= 1");
    if (!(rate > 0)) throw ConfigError("adapt rate must be > 0");
    if (std::isnan(pl_confidence_threshold))
      throw ConfigError("pl_confidence_threshold must be a number");
    sgld.validate();
  }

  // Stats mode used for adaptation forwards and for this method's
  // predictions: batch statistics for the parameter-updating methods,
  // running statistics for SOURCE and BN.
  StatsMode prediction_stats() const {
    return (method == AdaptMethod::SOURCE || method == AdaptMethod::BN) ? StatsMode::EvalStats
                                                                        : StatsMode::TrainStats;
  }
};

struct StepRecord {
  int batch_index = 0;
  int step_index = 0;
  std::optional<double> loss;
  double e_test = 0;            // mean marginal energy of the test batch
  std::optional<double> e_neg;  // mean energy of SGLD negatives (TEA)
  std::optional<double> accuracy;
  bool rejected = false;  // non-finite loss/gradient; model left unchanged
  bool noop = false;      // PL kept no samples
};

// Eq. 8's scalar objective: mean test energy minus mean negative energy.
template <typename T>
double cd_loss(const Tensor<T>& e_test, const Tensor<T>& e_neg) {
  if (e_test.empty() || e_neg.empty()) throw Error("cd_loss: empty energy vector");
  return mean_of(e_test) - mean_of(e_neg);
}

template <typename T>
struct CdEval {
  double loss = 0;
  Tensor<T> test_logits;
  Tensor<T> e_test;
  Tensor<T> e_neg;
  std::vector<LayerParams<T>> grads;  // d(loss)/d(theta), negatives held constant
};

// Contrastive-divergence loss and parameter gradients for a test batch
// against fixed negatives. Both sides forward in the view's stats mode, each
// batch normalized by its own statistics.
template <typename T>
CdEval<T> cd_eval(const EnergyView<T>& view, const Tensor<T>& test_batch,
                  const Tensor<T>& negatives) {
  CdEval<T> out;
  auto [logits, cache] = forward(*view.model, test_batch, view.stats_mode);
  out.test_logits = logits;
  out.e_test = energy_marginal(logits);
  Tensor<T> g = energy_grad_logits(logits);
  const T inv_n = T(1) / T(test_batch.shape[0]);
  for (T& v : g.data) v *= inv_n;
  auto back_test = backward(*view.model, cache, g);

  auto neg_eval = energy_of_inputs(view, negatives);
  out.e_neg = std::move(neg_eval.energies);
  out.loss = cd_loss(out.e_test, out.e_neg);

  out.grads = std::move(back_test.param_grads);
  for (std::size_t i = 0; i < out.grads.size(); ++i) {
    auto sub = [](Tensor<T>& a, const Tensor<T>& b) {
      for (std::size_t j = 0; j < a.size(); ++j) a[j] -= b[j];
    };
    sub(out.grads[i].weight, neg_eval.param_grads[i].weight);
    sub(out.grads[i].bias, neg_eval.param_grads[i].bias);
    sub(out.grads[i].gamma, neg_eval.param_grads[i].gamma);
    sub(out.grads[i].beta, neg_eval.param_grads[i].beta);
  }
  return out;
}

namespace detail {

template <typename T>
bool masked_grads_finite(const std::vector<LayerParams<T>>& grads, const AdaptableMask& mask) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (mask.layers[i].weight && !grads[i].weight.all_finite()) return false;
    if (mask.layers[i].bias && !grads[i].bias.all_finite()) return false;
    if (mask.layers[i].gamma && !grads[i].gamma.all_finite()) return false;
    if (mask.layers[i].beta && !grads[i].beta.all_finite()) return false;
  }
  return true;
}

}  // namespace detail

template <typename T>
struct StepResult {
  ModelState<T> model;
  StepRecord record;
  Tensor<T> negatives;  // TEA only
};

// One TEA update: sample negatives with SGLD, take an optimizer step on the
// masked parameters along the CD gradient. A non-finite loss or gradient
// rejects the step and returns the model unchanged.
template <typename T>
StepResult<T> tea_step(const ModelState<T>& model, const AdaptableMask& mask,
                       const Tensor<T>& batch, const AdaptConfig& cfg, RngStream rng,
                       OptimizerState<T>& opt) {
  EnergyView<T> view{&model, StatsMode::TrainStats};
  StepResult<T> out;
  out.record.e_test = 0;

  ChainResult<T> chain = sgld_chain<T>(MarginalEnergyOf<T>{view}, cfg.sgld, batch.shape, rng);
  CdEval<T> cd = cd_eval(view, batch, chain.negatives);
  out.negatives = std::move(chain.negatives);
  out.record.e_test = mean_of(cd.e_test);
  out.record.e_neg = mean_of(cd.e_neg);
  out.record.loss = cd.loss;

  if (!std::isfinite(cd.loss) || !detail::masked_grads_finite(cd.grads, mask)) {
    out.record.rejected = true;
    out.model = model;
    return out;
  }
  out.model = model;
  optimizer_step(out.model, cd.grads, mask, opt, cfg.rate);
  return out;
}

// One TENT update: minimize the mean softmax entropy of the batch.
template <typename T>
StepResult<T> tent_step(const ModelState<T>& model, const AdaptableMask& mask,
                        const Tensor<T>& batch, const AdaptConfig& cfg, OptimizerState<T>& opt) {
  auto [logits, cache] = forward(model, batch, StatsMode::TrainStats);
  LossValue<T> lv = softmax_entropy_mean(logits);
  StepResult<T> out;
  out.record.loss = lv.value;
  out.record.e_test = mean_of(energy_marginal(logits));
  auto back = backward(model, cache, lv.grad_logits);
  if (!std::isfinite(lv.value) || !detail::masked_grads_finite(back.param_grads, mask)) {
    out.record.rejected = true;
    out.model = model;
    return out;
  }
  out.model = model;
  optimizer_step(out.model, back.param_grads, mask, opt, cfg.rate);
  return out;
}

// One pseudo-label update: cross-entropy against confident argmax labels.
// Keeps samples whose max probability reaches the threshold; with none kept
// the step is a no-op.
template <typename T>
StepResult<T> pl_step(const ModelState<T>& model, const AdaptableMask& mask,
                      const Tensor<T>& batch, const AdaptConfig& cfg, OptimizerState<T>& opt) {
  auto [logits, cache] = forward(model, batch, StatsMode::TrainStats);
  StepResult<T> out;
  out.record.e_test = mean_of(energy_marginal(logits));

  Tensor<T> probs = softmax_rows(logits);
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  std::vector<std::size_t> kept;
  std::vector<std::size_t> pseudo(n);
  for (std::size_t i = 0; i < n; ++i) {
    pseudo[i] = argmax_row(probs, i);
    if (double(probs.at2(i, pseudo[i])) >= cfg.pl_confidence_threshold) kept.push_back(i);
  }
  if (kept.empty()) {
    out.record.noop = true;
    out.model = model;
    return out;
  }
  // Mean cross-entropy over the kept rows only.
  Tensor<T> g(logits.shape);
  double loss = 0;
  for (std::size_t idx : kept) {
    const T* row = logits.data.data() + idx * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(double(row[j] - mx));
    const double lse = double(mx) + std::log(s);
    loss += lse - double(row[pseudo[idx]]);
    T* gr = g.data.data() + idx * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(double(row[j]) - lse);
      gr[j] = T((p - (j == pseudo[idx] ? 1.0 : 0.0)) / double(kept.size()));
    }
  }
  out.record.loss = loss / double(kept.size());
  auto back = backward(model, cache, g);
  if (!std::isfinite(*out.record.loss) || !detail::masked_grads_finite(back.param_grads, mask)) {
    out.record.rejected = true;
    out.model = model;
    return out;
  }
  out.model = model;
  optimizer_step(out.model, back.param_grads, mask, opt, cfg.rate);
  return out;
}

// BN baseline: replace every BatchNorm layer's running statistics with this
// batch's statistics. No parameter changes; idempotent for a fixed batch.
template <typename T>
ModelState<T> bn_stats_adapt(const ModelState<T>& model, const Tensor<T>& batch) {
  if (batch.shape[0] < 2) throw Error("bn_stats_adapt: batch size must be >= 2");
  bool has_bn = false;
  for (const auto& l : model.spec.layers) has_bn |= (l.kind == LayerKind::BatchNorm);
  if (!has_bn) throw Error("bn_stats_adapt: model has no BatchNorm layer");

  auto [logits, cache] = forward(model, batch, StatsMode::TrainStats);
  ModelState<T> out = model;
  for (std::size_t i = 0; i < out.spec.layers.size(); ++i) {
    if (out.spec.layers[i].kind != LayerKind::BatchNorm) continue;
    out.running[i].mean = cache.layers[i].mean;
    out.running[i].var = cache.layers[i].var;
  }
  return out;
}

template <typename T>
struct AdaptBatch {
  Tensor<T> inputs;
  std::vector<int> labels;  // empty when unlabeled; evaluation only
};

template <typename T>
struct AdaptResult {
  ModelState<T> model;
  std::vector<StepRecord> trace;       // steps x batches records
  std::vector<Tensor<T>> predictions;  // per-batch logits after adapting on that batch
  Tensor<T> last_negatives;            // TEA only
};

// Outer loop: for each incoming batch run cfg.steps updates, then predict
// the batch with the adapted parameters. Continual mode carries parameters
// and optimizer moments across batches; episodic mode resets both to the
// source state first. Labels never influence the updates.
template <typename T>
AdaptResult<T> adapt_run(const ModelState<T>& source, const std::vector<AdaptBatch<T>>& batches,
                         const AdaptConfig& cfg, RngStream rng) {
  cfg.validate();
  AdaptableMask mask = norm_affine_mask(source.spec);
  AdaptResult<T> out;
  out.model = source;
  OptimizerState<T> opt(cfg.optimizer);

  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (cfg.mode == AdaptMode::Episodic) {
      out.model = source;
      opt = OptimizerState<T>(cfg.optimizer);
    }
    const Tensor<T>& x = batches[b].inputs;
    for (int step = 0; step < cfg.steps; ++step) {
      StepRecord rec;
      try {
        switch (cfg.method) {
          case AdaptMethod::TEA: {
            auto r = tea_step(out.model, mask, x, cfg, rng.fork(b).fork(std::uint64_t(step)), opt);
            out.model = std::move(r.model);
            out.last_negatives = std::move(r.negatives);
            rec = r.record;
            break;
          }
          case AdaptMethod::TENT: {
            auto r = tent_step(out.model, mask, x, cfg, opt);
            out.model = std::move(r.model);
            rec = r.record;
            break;
          }
          case AdaptMethod::PL: {
            auto r = pl_step(out.model, mask, x, cfg, opt);
            out.model = std::move(r.model);
            rec = r.record;
            break;
          }
          case AdaptMethod::BN: {
            out.model = bn_stats_adapt(out.model, x);
            auto [logits, cache] = forward(out.model, x, StatsMode::EvalStats);
            rec.e_test = mean_of(energy_marginal(logits));
            break;
          }
          case AdaptMethod::SOURCE: {
            auto [logits, cache] = forward(out.model, x, StatsMode::EvalStats);
            rec.e_test = mean_of(energy_marginal(logits));
            break;
          }
        }
      } catch (const NumericError&) {
        rec.rejected = true;  // a rejected step never aborts the run
      }
      rec.batch_index = int(b);
      rec.step_index = step;
      if (!batches[b].labels.empty()) {
        auto [logits, cache] = forward(out.model, x, cfg.prediction_stats());
        rec.accuracy = accuracy(logits, batches[b].labels);
      }
      out.trace.push_back(rec);
    }
    auto [logits, cache] = forward(out.model, x, cfg.prediction_stats());
    out.predictions.push_back(std::move(logits));
  }
  return out;
}

}  // namespace tea
