#include <gtest/gtest.h>

#include <cmath>

#include "tea/energy.hpp"

using namespace tea;

namespace {

Tensor<double> logits_of(std::vector<double> v, std::size_t k) {
  const std::size_t n = v.size() / k;
  return Tensor<double>({n, k}, std::move(v));
}

}  // namespace

TEST(Energy, JointFixtures) {
  auto e = energy_joint(logits_of({1.0, 2.0}, 2), std::vector<int>{1});
  EXPECT_DOUBLE_EQ(e[0], -2.0);
  e = energy_joint(logits_of({0, 0, 0}, 3), std::vector<int>{2});
  EXPECT_DOUBLE_EQ(e[0], 0.0);
  e = energy_joint(logits_of({-3.5}, 1), std::vector<int>{0});
  EXPECT_DOUBLE_EQ(e[0], 3.5);
  EXPECT_THROW(energy_joint(logits_of({1.0, 2.0}, 2), std::vector<int>{2}), Error);
}

TEST(Energy, MarginalFixtures) {
  auto e = energy_marginal(logits_of({0, 0}, 2));
  EXPECT_NEAR(e[0], -std::log(2.0), 1e-12);
  e = energy_marginal(logits_of({1000.0, 1000.0}, 2));
  EXPECT_NEAR(e[0], -(1000.0 + std::log(2.0)), 1e-9);
  e = energy_marginal(logits_of({2.5}, 1));
  EXPECT_DOUBLE_EQ(e[0], -2.5);

  Tensor<double> bad({1, 2}, std::vector<double>{1.0, std::nan("")});
  EXPECT_THROW(energy_marginal(bad), NumericError);
}

TEST(Energy, GradIsNegativeSoftmax) {
  auto g = energy_grad_logits(logits_of({0, 0}, 2));
  EXPECT_NEAR(g[0], -0.5, 1e-12);
  EXPECT_NEAR(g[1], -0.5, 1e-12);
  g = energy_grad_logits(logits_of({0.0, std::log(3.0)}, 2));
  EXPECT_NEAR(g[0], -0.25, 1e-12);
  EXPECT_NEAR(g[1], -0.75, 1e-12);
}

TEST(Energy, GradMatchesFiniteDifferences) {
  RngStream rng(77, 0);
  Tensor<double> logits({8, 5});
  for (auto& v : logits.data) v = rng.uniform(-4, 4);
  auto g = energy_grad_logits(logits);
  const double h = 1e-6;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    Tensor<double> up = logits, dn = logits;
    up[j] += h;
    dn[j] -= h;
    const std::size_t row = j / 5;
    const double numeric =
        (energy_marginal(up)[row] - energy_marginal(dn)[row]) / (2 * h);
    EXPECT_NEAR(g[j], numeric, 1e-6);
  }
  // rows of the gradient sum to -1
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += g.at2(i, k);
    EXPECT_NEAR(s, -1.0, 1e-6);
  }
}

TEST(Energy, FreeEnergyBounds) {
  RngStream rng(5, 0);
  const std::size_t n = 1000, k = 7;
  Tensor<double> logits({n, k});
  for (auto& v : logits.data) v = rng.uniform(-30, 30);
  auto e = energy_marginal(logits);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at2(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at2(i, j));
    EXPECT_LE(mx, -e[i] + 1e-9);
    EXPECT_LE(-e[i], mx + std::log(double(k)) + 1e-9);
  }
}

TEST(Energy, ShiftEquivariance) {
  RngStream rng(6, 0);
  const std::size_t n = 1000, k = 4;
  Tensor<double> logits({n, k});
  for (auto& v : logits.data) v = rng.uniform(-10, 10);
  auto e0 = energy_marginal(logits);
  for (double c : {0.5, -3.0, 123.0}) {
    Tensor<double> shifted = logits;
    for (auto& v : shifted.data) v += c;
    auto e1 = energy_marginal(shifted);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(e1[i], e0[i] - c, 1e-6);
  }
}

// logsumexp(z) >= <p,z> + H(p) for any probability vector p, with equality
// at p = softmax(z).
TEST(Energy, ConjugacyWithEntropy) {
  RngStream rng(7, 0);
  const std::size_t n = 100, k = 5;
  Tensor<double> logits({n, k});
  for (auto& v : logits.data) v = rng.uniform(-6, 6);
  auto e = energy_marginal(logits);
  auto p_star = softmax_rows(logits);
  for (std::size_t i = 0; i < n; ++i) {
    const double lse = -e[i];
    auto value_at = [&](const std::vector<double>& p) {
      double dot = 0, ent = 0;
      for (std::size_t j = 0; j < k; ++j) {
        dot += p[j] * logits.at2(i, j);
        if (p[j] > 0) ent -= p[j] * std::log(p[j]);
      }
      return dot + ent;
    };
    std::vector<double> ps(k);
    for (std::size_t j = 0; j < k; ++j) ps[j] = p_star.at2(i, j);
    EXPECT_NEAR(value_at(ps), lse, 1e-6);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> p(k);
      double s = 0;
      for (auto& v : p) s += (v = rng.uniform(1e-3, 1.0));
      for (auto& v : p) v /= s;
      EXPECT_LE(value_at(p), lse + 1e-6);
    }
  }
}

TEST(Energy, JointEqualsMarginalForSingleClass) {
  RngStream rng(8, 0);
  Tensor<double> logits({20, 1});
  for (auto& v : logits.data) v = rng.uniform(-5, 5);
  std::vector<int> labels(20, 0);
  auto ej = energy_joint(logits, labels);
  auto em = energy_marginal(logits);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(ej[i], em[i], 1e-12);
}

TEST(Energy, UnnormalizedLogDensity) {
  Tensor<double> e({3}, std::vector<double>{0.0, -std::log(2.0), 5.0});
  auto ld = unnormalized_log_density(e);
  EXPECT_DOUBLE_EQ(ld[0], 0.0);
  EXPECT_NEAR(ld[1], std::log(2.0), 1e-12);
  EXPECT_LT(ld[2], ld[0]);  // lower energy -> strictly higher value
  EXPECT_LT(ld[0], ld[1]);
}

TEST(Energy, OfInputsConstantLogits) {
  // Dense with zero weights: logits are the bias for every input, so the
  // energy is constant and the input gradient vanishes.
  ModelSpec spec;
  spec.input_shape = {3};
  spec.layers = {LayerSpec::dense(3, 2)};
  auto m = init_model<double>(spec, RngStream(1, 0));
  for (auto& v : m.params[0].weight.data) v = 0.0;
  m.params[0].bias = Tensor<double>({2}, std::vector<double>{1.0, 2.0});

  RngStream rng(2, 0);
  Tensor<double> x({4, 3});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  EnergyView<double> view{&m, StatsMode::TrainStats};
  auto ev = energy_of_inputs(view, x);
  const double expect = -std::log(std::exp(1.0) + std::exp(2.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ev.energies[i], expect, 1e-12);
  for (double v : ev.input_grad.data) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Energy, OfInputsGradMatchesFiniteDifferences) {
  ModelSpec spec;
  spec.input_shape = {4};
  spec.layers = {LayerSpec::dense(4, 6), LayerSpec::batch_norm(6), LayerSpec::relu(),
                 LayerSpec::dense(6, 3)};
  auto m = init_model<double>(spec, RngStream(31, 0));
  RngStream rng(32, 0);
  Tensor<double> x({5, 4});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  EnergyView<double> view{&m, StatsMode::TrainStats};
  auto ev = energy_of_inputs(view, x);

  const double h = 1e-5;
  for (std::size_t j = 0; j < x.size(); ++j) {
    Tensor<double> up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    const double mu = mean_of(energy_of_inputs(view, up).energies);
    const double md = mean_of(energy_of_inputs(view, dn).energies);
    const double numeric = (mu - md) / (2 * h);
    const double denom = std::max({std::fabs(numeric), std::fabs(ev.input_grad[j]), 1e-4});
    EXPECT_LT(std::fabs(numeric - ev.input_grad[j]) / denom, 1e-4) << "entry " << j;
  }
}

TEST(Energy, DuplicatedSampleSameEnergy) {
  ModelSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerSpec::dense(2, 3)};
  auto m = init_model<double>(spec, RngStream(9, 0));
  Tensor<double> x({3, 2}, std::vector<double>{0.3, -0.2, 0.3, -0.2, 0.9, 0.1});
  EnergyView<double> view{&m, StatsMode::TrainStats};
  auto ev = energy_of_inputs(view, x);
  EXPECT_DOUBLE_EQ(ev.energies[0], ev.energies[1]);
}
