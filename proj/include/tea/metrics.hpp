#pragma once

// Evaluation metrics: accuracy, corruption-grid aggregates (average accuracy
// and mean corruption error against a baseline), reliability binning with
// ECE/MCE, and energy summary statistics.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tea/tensor.hpp"

namespace tea {

template <typename T>
std::size_t argmax_row(const Tensor<T>& logits, std::size_t row) {
  const std::size_t k = logits.shape[1];
  const T* r = logits.data.data() + row * k;
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (r[j] > r[best]) best = j;  // ties keep the lowest index
  return best;
}

template <typename T>
double accuracy(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape[0];
  if (n == 0 || labels.size() != n) throw ShapeError("accuracy: need n >= 1 matching labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax_row(logits, i) == std::size_t(labels[i])) ++correct;
  return double(correct) / double(n);
}

// error_rate[c][s] for corruption c and severity column s; complete before
// any aggregate is computed.
struct CorruptionGrid {
  std::vector<std::string> corruption_names;
  std::vector<int> severities;
  std::vector<std::vector<double>> error_rate;  // [corruption][severity]
  std::string method;

  void check_complete() const {
    if (corruption_names.empty() || severities.empty())
      throw Error("corruption grid is empty");
    if (error_rate.size() != corruption_names.size())
      throw Error("corruption grid has missing rows");
    for (const auto& row : error_rate)
      if (row.size() != severities.size()) throw Error("corruption grid has holes");
  }
};

inline double average_accuracy(const CorruptionGrid& grid) {
  grid.check_complete();
  double sum = 0;
  std::size_t cells = 0;
  for (const auto& row : grid.error_rate)
    for (double e : row) {
      sum += e;
      ++cells;
    }
  return 1.0 - sum / double(cells);
}

// Per-corruption error sums of f normalized by the baseline's, averaged over
// corruptions, in percent. Identical grids give exactly 100.
inline double mce(const CorruptionGrid& grid_f, const CorruptionGrid& grid_f0) {
  grid_f.check_complete();
  grid_f0.check_complete();
  if (grid_f.corruption_names != grid_f0.corruption_names ||
      grid_f.severities != grid_f0.severities)
    throw Error("mce: corruption/severity sets differ between model and baseline");
  double ratio_sum = 0;
  for (std::size_t c = 0; c < grid_f.corruption_names.size(); ++c) {
    double ef = 0, e0 = 0;
    for (std::size_t s = 0; s < grid_f.severities.size(); ++s) {
      ef += grid_f.error_rate[c][s];
      e0 += grid_f0.error_rate[c][s];
    }
    if (e0 <= 0)
      throw Error("mce: baseline error sum is zero for corruption '" +
                  grid_f.corruption_names[c] + "'");
    ratio_sum += ef / e0;
  }
  return 100.0 * (ratio_sum / double(grid_f.corruption_names.size()));
}

struct ReliabilityBin {
  std::size_t count = 0;
  double mean_confidence = 0;
  double accuracy = 0;
};

struct ReliabilityBins {
  static constexpr std::size_t kBins = 10;
  std::vector<ReliabilityBin> bins{kBins};
  std::size_t total = 0;

  // Additive merge; bins are compatible by construction (fixed edges).
  void merge(const ReliabilityBins& other) {
    for (std::size_t b = 0; b < kBins; ++b) {
      const auto& o = other.bins[b];
      auto& m = bins[b];
      const std::size_t n = m.count + o.count;
      if (n == 0) continue;
      m.mean_confidence =
          (m.mean_confidence * double(m.count) + o.mean_confidence * double(o.count)) / double(n);
      m.accuracy = (m.accuracy * double(m.count) + o.accuracy * double(o.count)) / double(n);
      m.count = n;
    }
    total += other.total;
  }
};

// Bins predictions by max-probability confidence into ten bins over (0,1],
// edges at k/10, right-closed: confidence exactly 0.7 lands in (0.6, 0.7].
template <typename T>
ReliabilityBins reliability(const Tensor<T>& probs, std::span<const int> labels) {
  const std::size_t n = probs.shape[0], k = probs.shape[1];
  if (n == 0) throw Error("reliability: empty predictions");
  if (labels.size() != n) throw ShapeError("reliability: label count mismatch");
  std::vector<double> conf_sum(ReliabilityBins::kBins, 0);
  std::vector<std::size_t> correct(ReliabilityBins::kBins, 0);
  ReliabilityBins out;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = probs.data.data() + i * k;
    double sum = 0;
    std::size_t best = 0;
    for (std::size_t j = 0; j < k; ++j) {
      sum += row[j];
      if (row[j] > row[best]) best = j;
    }
    if (std::fabs(sum - 1.0) > 1e-5)
      throw Error("reliability: probability row " + std::to_string(i) + " sums to " +
                  std::to_string(sum));
    const double conf = row[best];
    std::size_t b = std::size_t(std::ceil(conf * 10.0)) - 1;
    b = std::min(b, ReliabilityBins::kBins - 1);
    ++out.bins[b].count;
    conf_sum[b] += conf;
    if (best == std::size_t(labels[i])) ++correct[b];
  }
  out.total = n;
  for (std::size_t b = 0; b < ReliabilityBins::kBins; ++b) {
    if (out.bins[b].count == 0) continue;
    out.bins[b].mean_confidence = conf_sum[b] / double(out.bins[b].count);
    out.bins[b].accuracy = double(correct[b]) / double(out.bins[b].count);
  }
  return out;
}

// ECE is the count-weighted mean |accuracy - confidence| over non-empty bins;
// MCE is the maximum. Empty bins are excluded from both.
inline std::pair<double, double> ece_mce(const ReliabilityBins& bins) {
  if (bins.total == 0) throw Error("ece_mce: no predictions");
  double ece = 0, mce_v = 0;
  for (const auto& b : bins.bins) {
    if (b.count == 0) continue;
    const double gap = std::fabs(b.accuracy - b.mean_confidence);
    ece += gap * double(b.count) / double(bins.total);
    mce_v = std::max(mce_v, gap);
  }
  return {ece, mce_v};
}

struct EnergySummary {
  double mean = 0;
  double stddev = 0;  // population convention (1/n)
  double min = 0;
  double max = 0;
  std::vector<double> deciles;  // p10..p90, linear interpolation
};

// Linear-interpolation percentile on the sorted values: rank h = (n-1)p maps
// to x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
inline double percentile_linear(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw Error("percentile of empty set");
  const double h = double(n - 1) * p;
  const std::size_t lo = std::size_t(h);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + (h - double(lo)) * (sorted[lo + 1] - sorted[lo]);
}

template <typename T>
EnergySummary energy_summary(const Tensor<T>& energies) {
  if (energies.empty()) throw Error("energy_summary: empty input");
  EnergySummary s;
  double sum = 0, sumsq = 0;
  s.min = energies[0];
  s.max = energies[0];
  for (T v : energies.data) {
    sum += v;
    sumsq += double(v) * double(v);
    s.min = std::min(s.min, double(v));
    s.max = std::max(s.max, double(v));
  }
  const double n = double(energies.size());
  s.mean = sum / n;
  s.stddev = std::sqrt(std::max(0.0, sumsq / n - s.mean * s.mean));
  std::vector<double> sorted(energies.data.begin(), energies.data.end());
  std::sort(sorted.begin(), sorted.end());
  for (int d = 1; d <= 9; ++d) s.deciles.push_back(percentile_linear(sorted, d / 10.0));
  return s;
}

}  // namespace tea
