#include <gtest/gtest.h>

#include <algorithm>

#include "scrc/error.hpp"
#include "scrc/kernels.hpp"
#include "test_util.hpp"

namespace scrc {
namespace {

bool same(const ScoredExample& a, const ScoredExample& b) {
  return a.probs == b.probs && a.confidence == b.confidence && a.label == b.label &&
         a.logits == b.logits;
}

class KernelParity : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = kernels::max_threads();
    kernels::set_threads(GetParam());
  }
  void TearDown() override { kernels::set_threads(saved_); }

  int saved_ = 1;
};

TEST_P(KernelParity, ScoreRecords) {
  SynthConfig cfg;
  cfg.n_samples = 3000;
  cfg.seed = 5;
  const auto records = generate(cfg);
  std::vector<std::vector<double>> logits;
  for (const auto& r : records) logits.push_back(r.logits);
  const EnergyNormalizer energy(logits, 1.5);
  for (auto tag : {ScoreTag::kMsp, ScoreTag::kMargin, ScoreTag::kEntropy, ScoreTag::kEnergy}) {
    const ScoreKind kind{tag, 1.5};
    const auto par = kernels::score_records(records, kind, &energy);
    const auto ser = kernels::serial::score_records(records, kind, &energy);
    ASSERT_EQ(par.size(), ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) ASSERT_TRUE(same(par[i], ser[i])) << i;
  }
  EXPECT_THROW(kernels::score_records(records, {ScoreTag::kEnergy, 1.0}, nullptr), Error);
}

TEST_P(KernelParity, TransductiveLambda1) {
  std::mt19937_64 rng(6);
  auto cal = testing::random_confidences(2000, rng, false);
  std::sort(cal.begin(), cal.end());
  const auto test = testing::random_confidences(5000, rng, true);
  for (double xi : {0.6, 0.9}) {
    EXPECT_EQ(kernels::transductive_lambda1(cal, test, xi),
              kernels::serial::transductive_lambda1(cal, test, xi));
  }
}

TEST_P(KernelParity, SolvePrefixesAndApply) {
  const auto cal = testing::scored_synthetic(1500, 8, 7);
  const auto test = testing::scored_synthetic(1500, 8, 8);
  const CalibrationTable table(cal);
  std::vector<std::size_t> ms;
  for (std::size_t m = 0; m <= table.size(); m += 13) ms.push_back(m);
  RiskSpec spec;
  for (auto method : {Method::kScrcT, Method::kScrcI}) {
    for (const auto& loss : {LossKind::miscoverage(), LossKind::weighted_ordinal(8)}) {
      const auto par = kernels::solve_prefixes(table, ms, method, spec, loss);
      const auto ser = kernels::serial::solve_prefixes(table, ms, method, spec, loss);
      ASSERT_EQ(par.size(), ser.size());
      for (std::size_t i = 0; i < par.size(); ++i) {
        EXPECT_EQ(par[i].feasible, ser[i].feasible);
        EXPECT_EQ(par[i].lambda2, ser[i].lambda2);
        EXPECT_EQ(par[i].mean_set_size, ser[i].mean_set_size);
        EXPECT_EQ(par[i].xi_lcb, ser[i].xi_lcb);
      }

      std::vector<kernels::Decision> decisions;
      for (std::size_t i = 0; i < test.size(); ++i) {
        decisions.push_back({i % 3 != 0, static_cast<double>(i % 10) / 10.0});
      }
      const auto a = kernels::apply_decisions(test, decisions, loss);
      const auto b = kernels::serial::apply_decisions(test, decisions, loss);
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].selected, b[i].selected);
        EXPECT_EQ(a[i].loss, b[i].loss);
        EXPECT_EQ(a[i].set_size, b[i].set_size);
      }
    }
  }
  EXPECT_THROW(kernels::apply_decisions(test, std::vector<kernels::Decision>(3), LossKind::miscoverage()), Error);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelParity, ::testing::Values(1, 4));

}  // namespace
}  // namespace scrc
