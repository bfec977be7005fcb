#include <gtest/gtest.h>

#include "tea/gradcheck.hpp"

using namespace tea;

namespace {

// Covers every layer kind in one stack: Conv3x3, BatchNorm, ReLU, AvgPool2,
// Conv3x3, GroupNorm, ReLU, Flatten, Dense.
ModelSpec all_kinds_spec() {
  ModelSpec spec;
  spec.input_shape = {1, 6, 6};
  spec.layers = {LayerSpec::conv3x3(1, 4),    LayerSpec::batch_norm(4),
                 LayerSpec::relu(),           LayerSpec::avg_pool2(),
                 LayerSpec::conv3x3(4, 4),    LayerSpec::group_norm(4, 2),
                 LayerSpec::relu(),           LayerSpec::flatten(),
                 LayerSpec::dense(4 * 3 * 3, 3)};
  return spec;
}

ModelSpec mlp_spec() {
  ModelSpec spec;
  spec.input_shape = {5};
  spec.layers = {LayerSpec::dense(5, 8), LayerSpec::batch_norm(8), LayerSpec::relu(),
                 LayerSpec::dense(8, 3)};
  return spec;
}

Tensor<double> random_batch(const Shape& per_sample, std::size_t n, RngStream& rng) {
  Shape s;
  s.push_back(n);
  for (auto d : per_sample) s.push_back(d);
  Tensor<double> x(s);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  return x;
}

}  // namespace

TEST(GradCheck, SumLogitsDenseModel) {
  ModelSpec spec;
  spec.input_shape = {4};
  spec.layers = {LayerSpec::dense(4, 3)};
  auto m = init_model<double>(spec, RngStream(3, 0));
  RngStream rng(4, 0);
  auto x = random_batch(spec.input_shape, 5, rng);
  auto report = grad_check(m, x, ScalarLoss::SumLogits);
  EXPECT_TRUE(report.passed) << "worst " << report.worst();
}

TEST(GradCheck, MarginalEnergyConvBnDense) {
  ModelSpec spec;
  spec.input_shape = {1, 4, 4};
  spec.layers = {LayerSpec::conv3x3(1, 3), LayerSpec::batch_norm(3), LayerSpec::relu(),
                 LayerSpec::flatten(), LayerSpec::dense(3 * 4 * 4, 3)};
  auto m = init_model<double>(spec, RngStream(8, 0));
  RngStream rng(9, 0);
  auto x = random_batch(spec.input_shape, 4, rng);
  auto report = grad_check(m, x, ScalarLoss::MarginalEnergyMean);
  EXPECT_TRUE(report.passed) << "worst " << report.worst();
}

TEST(GradCheck, CrossEntropyThreeClass) {
  auto spec = mlp_spec();
  auto m = init_model<double>(spec, RngStream(15, 0));
  RngStream rng(16, 0);
  auto x = random_batch(spec.input_shape, 6, rng);
  std::vector<int> labels{0, 1, 2, 1, 0, 2};
  auto report = grad_check(m, x, ScalarLoss::CrossEntropyMean, labels);
  EXPECT_TRUE(report.passed) << "worst " << report.worst();
}

TEST(GradCheck, AllLayerKindsAllLossesManySeeds) {
  auto spec = all_kinds_spec();
  std::vector<int> labels{0, 1, 2, 0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = init_model<double>(spec, RngStream(seed, 1));
    RngStream rng(seed, 2);
    auto x = random_batch(spec.input_shape, 4, rng);
    for (ScalarLoss loss : {ScalarLoss::MarginalEnergyMean, ScalarLoss::SoftmaxEntropyMean,
                            ScalarLoss::CrossEntropyMean}) {
      auto report = grad_check(m, x, loss, labels);
      EXPECT_TRUE(report.passed) << scalar_loss_name(loss) << " seed " << seed << " worst "
                                 << report.worst();
    }
  }
}

TEST(GradCheck, EachLayerKindIsolatedManySeeds) {
  struct Case {
    ModelSpec spec;
  };
  std::vector<Case> cases;
  {
    ModelSpec s;
    s.input_shape = {4};
    s.layers = {LayerSpec::dense(4, 3)};
    cases.push_back({s});
  }
  {
    ModelSpec s;
    s.input_shape = {2, 4, 4};
    s.layers = {LayerSpec::conv3x3(2, 3), LayerSpec::flatten(), LayerSpec::dense(48, 3)};
    cases.push_back({s});
  }
  {
    ModelSpec s;
    s.input_shape = {4};
    s.layers = {LayerSpec::relu(), LayerSpec::dense(4, 3)};
    cases.push_back({s});
  }
  {
    ModelSpec s;
    s.input_shape = {2, 4, 4};
    s.layers = {LayerSpec::avg_pool2(), LayerSpec::flatten(), LayerSpec::dense(8, 3)};
    cases.push_back({s});
  }
  {
    ModelSpec s;
    s.input_shape = {6};
    s.layers = {LayerSpec::batch_norm(6), LayerSpec::dense(6, 3)};
    cases.push_back({s});
  }
  {
    ModelSpec s;
    s.input_shape = {6, 2, 2};
    s.layers = {LayerSpec::group_norm(6, 3), LayerSpec::flatten(), LayerSpec::dense(24, 3)};
    cases.push_back({s});
  }
  for (const auto& c : cases) {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      auto m = init_model<double>(c.spec, RngStream(seed, 1));
      RngStream rng(seed, 2);
      auto x = random_batch(c.spec.input_shape, 5, rng);
      auto report = grad_check(m, x, ScalarLoss::MarginalEnergyMean);
      EXPECT_TRUE(report.passed)
          << layer_kind_name(c.spec.layers[0].kind) << " seed " << seed << " worst "
          << report.worst();
    }
  }
}

TEST(GradCheck, EvalStatsMode) {
  auto spec = mlp_spec();
  auto m = init_model<double>(spec, RngStream(21, 0));
  // Non-trivial running stats so the eval path is exercised.
  m.running[1].mean = Tensor<double>({8}, 0.3);
  m.running[1].var = Tensor<double>({8}, 2.0);
  RngStream rng(22, 0);
  auto x = random_batch(spec.input_shape, 5, rng);
  auto report =
      grad_check(m, x, ScalarLoss::MarginalEnergyMean, {}, StatsMode::EvalStats);
  EXPECT_TRUE(report.passed) << "worst " << report.worst();
}
