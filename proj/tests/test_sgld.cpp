#include <gtest/gtest.h>

#include <cmath>

#include "tea/sgld.hpp"

using namespace tea;

namespace {

ModelState<double> constant_logit_model(std::vector<double> bias) {
  ModelSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerSpec::dense(2, bias.size())};
  auto m = init_model<double>(spec, RngStream(1, 0));
  for (auto& v : m.params[0].weight.data) v = 0.0;
  const std::size_t k = bias.size();
  m.params[0].bias = Tensor<double>({k}, std::move(bias));
  return m;
}

}  // namespace

TEST(Sgld, UniformInitMoments) {
  SgldConfig cfg;
  cfg.init = SgldInit::Uniform;
  auto x = init_negatives<double>(cfg, {100, 1000}, RngStream(11, 0));
  double sum = 0, lo = 1e9, hi = -1e9;
  for (double v : x.data) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_NEAR(sum / double(x.size()), 0.0, 0.02);
  EXPECT_GE(lo, -1.0);
  EXPECT_LE(hi, 1.0);
}

TEST(Sgld, GaussianInitMoments) {
  SgldConfig cfg;
  cfg.init = SgldInit::Gaussian;
  auto x = init_negatives<double>(cfg, {100, 1000}, RngStream(12, 0));
  double sum = 0, sumsq = 0;
  for (double v : x.data) {
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / double(x.size());
  EXPECT_NEAR(sumsq / double(x.size()) - mean * mean, 1.0, 0.05);
}

TEST(Sgld, InitDeterminism) {
  SgldConfig cfg;
  auto a = init_negatives<double>(cfg, {4, 7}, RngStream(42, 3));
  auto b = init_negatives<double>(cfg, {4, 7}, RngStream(42, 3));
  EXPECT_EQ(a.data, b.data);
  auto c = init_negatives<double>(cfg, {4, 7}, RngStream(42, 4));
  EXPECT_NE(a.data, c.data);
}

TEST(Sgld, StepZeroGradZeroNoiseIsIdentity) {
  auto m = constant_logit_model({0.5, -0.5});
  EnergyView<double> view{&m, StatsMode::TrainStats};
  MarginalEnergyOf<double> energy{view};
  SgldConfig cfg;
  cfg.noise_std = 0.0;
  cfg.scaling = SgldScaling::Decoupled;
  Tensor<double> x({3, 2}, std::vector<double>{0.1, 0.2, -0.3, 0.4, 0.5, -0.6});
  RngStream rng(5, 0);
  auto y = sgld_step(energy, x, cfg, rng);
  EXPECT_EQ(y.data, x.data);
}

TEST(Sgld, QuadraticDriftArithmetic) {
  QuadraticEnergy<double> energy;
  SgldConfig cfg;
  cfg.step_size = 0.2;
  cfg.noise_std = 0.0;
  cfg.scaling = SgldScaling::Decoupled;
  Tensor<double> x({2, 3}, std::vector<double>{1, -2, 3, 0.5, 0, -1});
  RngStream rng(6, 0);
  auto y = sgld_step(energy, x, cfg, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 0.9 * x[i], 1e-12);
}

TEST(Sgld, DecoupledNoiseScale) {
  // Appendix defaults: drift -0.05 * grad plus noise of std 0.01.
  QuadraticEnergy<double> energy;
  SgldConfig cfg;
  cfg.step_size = 0.1;
  cfg.noise_std = 0.01;
  cfg.scaling = SgldScaling::Decoupled;
  const std::size_t n = 20000;
  Tensor<double> x({n, 1}, 1.0);
  RngStream rng(7, 0);
  auto y = sgld_step(energy, x, cfg, rng);
  // Residuals after removing the deterministic drift are the injected noise.
  double sum = 0, sumsq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (1.0 - 0.05) * 1.0;
    sum += r;
    sumsq += r * r;
  }
  const double mean = sum / n;
  const double std = std::sqrt(sumsq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 3e-4);
  EXPECT_NEAR(std, 0.01, 1e-3);
}

TEST(Sgld, PaperLiteralNoiseUsesAlpha) {
  QuadraticEnergy<double> energy;
  SgldConfig cfg;
  cfg.step_size = 0.1;
  cfg.noise_std = 0.0;  // ignored in this mode
  cfg.scaling = SgldScaling::PaperLiteral;
  const std::size_t n = 20000;
  Tensor<double> x({n, 1}, 0.0);
  RngStream rng(8, 0);
  auto y = sgld_step(energy, x, cfg, rng);
  double sumsq = 0;
  for (double v : y.data) sumsq += v * v;
  EXPECT_NEAR(std::sqrt(sumsq / n), 0.1, 0.01);
}

TEST(Sgld, ChainSingleStepNoDriftReturnsInit) {
  auto m = constant_logit_model({1.0, 1.0});
  EnergyView<double> view{&m, StatsMode::TrainStats};
  SgldConfig cfg;
  cfg.steps = 1;
  cfg.noise_std = 0.0;
  RngStream rng(9, 0);
  auto chain = sgld_chain<double>(MarginalEnergyOf<double>{view}, cfg, {4, 2}, rng);
  auto p0 = init_negatives<double>(cfg, {4, 2}, rng.fork(0x696e6974));
  EXPECT_EQ(chain.negatives.data, p0.data);
  EXPECT_EQ(chain.energy_trace.size(), 1u);
}

TEST(Sgld, ChainDeterminism) {
  auto m = constant_logit_model({1.0, -1.0});
  EnergyView<double> view{&m, StatsMode::TrainStats};
  SgldConfig cfg;
  cfg.steps = 5;
  auto a = sgld_chain<double>(MarginalEnergyOf<double>{view}, cfg, {3, 2}, RngStream(10, 1));
  auto b = sgld_chain<double>(MarginalEnergyOf<double>{view}, cfg, {3, 2}, RngStream(10, 1));
  EXPECT_EQ(a.negatives.data, b.negatives.data);
  EXPECT_EQ(a.energy_trace, b.energy_trace);
}

TEST(Sgld, QuadraticStationaryMomentsQuick) {
  // Exact Langevin on E = ||x||^2/2 equilibrates to N(0, 1/(1 - alpha/4)).
  QuadraticEnergy<double> energy;
  SgldConfig cfg;
  cfg.step_size = 0.05;
  cfg.scaling = SgldScaling::ExactLangevin;
  cfg.steps = 1;
  const std::size_t chains = 400;
  Tensor<double> x({chains, 2});
  RngStream rng(13, 0);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  const int total = 4000, burn = 1000;
  double sum = 0, sumsq = 0;
  std::size_t count = 0;
  for (int t = 0; t < total; ++t) {
    x = sgld_step(energy, x, cfg, rng);
    if (t >= burn) {
      for (double v : x.data) {
        sum += v;
        sumsq += v * v;
        ++count;
      }
    }
  }
  const double mean = sum / double(count);
  const double var = sumsq / double(count) - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_GT(var, 0.9);
  EXPECT_LT(var, 1.1);
}

TEST(Sgld, DescentWithoutNoiseOnToyModel) {
  // A trained-looking 2-class model: energy decreases along sigma=0 chains
  // for at least 80% of consecutive step pairs.
  ModelSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerSpec::dense(2, 8), LayerSpec::batch_norm(8), LayerSpec::relu(),
                 LayerSpec::dense(8, 2)};
  auto m = init_model<double>(spec, RngStream(21, 0));
  EnergyView<double> view{&m, StatsMode::TrainStats};
  SgldConfig cfg;
  cfg.steps = 30;
  cfg.step_size = 0.05;
  cfg.noise_std = 0.0;
  auto chain = sgld_chain<double>(MarginalEnergyOf<double>{view}, cfg, {16, 2}, RngStream(22, 0));
  int non_increasing = 0;
  for (std::size_t t = 1; t < chain.energy_trace.size(); ++t)
    if (chain.energy_trace[t] <= chain.energy_trace[t - 1] + 1e-9) ++non_increasing;
  EXPECT_GE(double(non_increasing) / double(chain.energy_trace.size() - 1), 0.8);
}

TEST(Sgld, NonFiniteGradientAborts) {
  auto bad_energy = [](const Tensor<double>& x) {
    SampleEnergy<double> se;
    se.energies = Tensor<double>({x.shape[0]}, 0.0);
    se.input_grad = zeros_like(x);
    se.input_grad[0] = std::nan("");
    return se;
  };
  SgldConfig cfg;
  cfg.steps = 3;
  EXPECT_THROW(sgld_chain<double>(bad_energy, cfg, {2, 2}, RngStream(1, 1)), NumericError);
}

TEST(Sgld, ClampKeepsRange) {
  QuadraticEnergy<double> energy;
  SgldConfig cfg;
  cfg.steps = 10;
  cfg.step_size = 0.5;
  cfg.noise_std = 2.0;  // large noise to push past the range
  cfg.clamp_to_range = true;
  auto chain = sgld_chain<double>(energy, cfg, {8, 4}, RngStream(30, 0));
  for (double v : chain.negatives.data) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Sgld, ConfigValidation) {
  SgldConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.steps = 1;
  cfg.step_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.step_size = 0.1;
  cfg.noise_std = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
