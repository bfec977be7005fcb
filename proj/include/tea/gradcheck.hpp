#pragma once

// Central finite-difference verification of the analytic gradients, to both
// parameters and inputs. 64-bit only. Central differences require the loss
// to be smooth within +-h of the probe point; a ReLU unit whose sign flips
// between the two evaluations breaks that, so each probe compares activation
// sign masks and retries with a smaller step before trusting the sample.

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tea/losses.hpp"
#include "tea/model.hpp"

namespace tea {

enum class ScalarLoss { SumLogits, MarginalEnergyMean, CrossEntropyMean, SoftmaxEntropyMean };

inline const char* scalar_loss_name(ScalarLoss l) {
  switch (l) {
    case ScalarLoss::SumLogits: return "sum_logits";
    case ScalarLoss::MarginalEnergyMean: return "marginal_energy_mean";
    case ScalarLoss::CrossEntropyMean: return "cross_entropy_mean";
    case ScalarLoss::SoftmaxEntropyMean: return "softmax_entropy_mean";
  }
  return "?";
}

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per parameter tensor, plus "input"
  double tolerance = 1e-4;
  bool passed = true;

  double worst() const {
    double w = 0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
  std::size_t total_skipped() const {
    std::size_t s = 0;
    for (const auto& e : entries) s += e.skipped_at_kink;
    return s;
  }
};

namespace detail {

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

}  // namespace detail

template <typename T>
LossValue<T> eval_scalar_loss(ScalarLoss loss, const Tensor<T>& logits,
                              std::span<const int> labels) {
  switch (loss) {
    case ScalarLoss::SumLogits: return sum_logits(logits);
    case ScalarLoss::MarginalEnergyMean: return marginal_energy_mean(logits);
    case ScalarLoss::CrossEntropyMean: return cross_entropy_mean(logits, labels);
    case ScalarLoss::SoftmaxEntropyMean: return softmax_entropy_mean(logits);
  }
  throw Error("unknown scalar loss");
}

template <typename T>
GradCheckReport grad_check(const ModelState<T>& model, const Tensor<T>& batch, ScalarLoss loss,
                           std::span<const int> labels = {},
                           StatsMode mode = StatsMode::TrainStats, double h = 1e-4,
                           double tolerance = 1e-4) {
  static_assert(std::is_same_v<T, double>, "grad_check requires the 64-bit precision mode");

  auto loss_and_mask = [&](const ModelState<T>& m, const Tensor<T>& x,
                           std::vector<char>& mask) -> double {
    auto [logits, cache] = forward(m, x, mode);
    mask.clear();
    for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
      if (m.spec.layers[i].kind != LayerKind::ReLU) continue;
      for (T v : cache.layers[i].input.data) mask.push_back(v > T(0));
    }
    return eval_scalar_loss(loss, logits, labels).value;
  };

  // apply(step) perturbs one scalar in place; eval() computes the loss there.
  // Central differences at step and step/2 are Richardson-combined to cancel
  // the h^2 truncation term, which otherwise swamps gradients of magnitude
  // ~1e-6 at the 1e-4 relative tolerance.
  auto central_diff = [&](const std::function<void(double)>& apply,
                          const std::function<double(std::vector<char>&)>& eval)
      -> std::optional<double> {
    for (double step : {h, h / 16.0}) {
      std::vector<char> mask_ref, mask;
      bool masks_agree = true;
      double d[2];
      for (int half = 0; half < 2; ++half) {
        const double s = half ? step / 2 : step;
        apply(s);
        const double up = eval(half == 0 ? mask_ref : mask);
        if (half && mask != mask_ref) masks_agree = false;
        apply(-s);
        const double dn = eval(mask);
        if (mask != mask_ref) masks_agree = false;
        apply(0);
        d[half] = (up - dn) / (2 * s);
      }
      if (masks_agree) return (4.0 * d[1] - d[0]) / 3.0;
    }
    return std::nullopt;
  };

  // Analytic gradients.
  auto [logits, cache] = forward(model, batch, mode);
  LossValue<T> lv = eval_scalar_loss(loss, logits, labels);
  auto back = backward(model, cache, lv.grad_logits);

  GradCheckReport report;
  report.tolerance = tolerance;

  ModelState<T> probe = model;
  for (std::size_t li = 0; li < model.spec.layers.size(); ++li) {
    auto check_tensor = [&](Tensor<T>& pt, const Tensor<T>& at, const char* field) {
      if (pt.empty()) return;
      GradCheckEntry entry;
      entry.name = "layer" + std::to_string(li) + "." + field;
      for (std::size_t j = 0; j < pt.size(); ++j) {
        const T keep = pt[j];
        auto numeric = central_diff([&](double step) { pt[j] = keep + T(step); },
                                    [&](std::vector<char>& m) {
                                      return loss_and_mask(probe, batch, m);
                                    });
        pt[j] = keep;
        if (!numeric) {
          ++entry.skipped_at_kink;
          continue;
        }
        ++entry.checked;
        entry.max_rel_err = std::max(entry.max_rel_err, detail::rel_err(at[j], *numeric));
      }
      report.entries.push_back(entry);
    };
    check_tensor(probe.params[li].weight, back.param_grads[li].weight, "weight");
    check_tensor(probe.params[li].bias, back.param_grads[li].bias, "bias");
    check_tensor(probe.params[li].gamma, back.param_grads[li].gamma, "gamma");
    check_tensor(probe.params[li].beta, back.param_grads[li].beta, "beta");
  }

  GradCheckEntry input_entry;
  input_entry.name = "input";
  Tensor<T> xprobe = batch;
  for (std::size_t j = 0; j < xprobe.size(); ++j) {
    const T keep = xprobe[j];
    auto numeric = central_diff([&](double step) { xprobe[j] = keep + T(step); },
                                [&](std::vector<char>& m) {
                                  return loss_and_mask(model, xprobe, m);
                                });
    xprobe[j] = keep;
    if (!numeric) {
      ++input_entry.skipped_at_kink;
      continue;
    }
    ++input_entry.checked;
    input_entry.max_rel_err =
        std::max(input_entry.max_rel_err, detail::rel_err(back.input_grad[j], *numeric));
  }
  report.entries.push_back(input_entry);

  for (const auto& e : report.entries)
    if (e.max_rel_err >= tolerance) report.passed = false;
  return report;
}

}  // namespace tea
