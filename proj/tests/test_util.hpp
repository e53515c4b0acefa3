#pragma once

// Random instance generators and brute-force oracles shared by the unit and
// acceptance tests. The oracles evaluate the defining inequalities directly
// on a fixed lambda grid and share no code with the solvers they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/data.hpp"
#include "scrc/kernels.hpp"

namespace scrc::testing {

inline constexpr double kOracleStep = 1e-4;
inline constexpr int kOracleSteps = 10000;

inline std::vector<double> random_simplex(std::size_t k, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = e(rng);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline ScoredExample random_example(std::size_t k, std::mt19937_64& rng) {
  ScoredExample e;
  e.probs = random_simplex(k, rng);
  e.confidence = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  e.label = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  return e;
}

// Confidences; every third instance is quantized to create ties.
inline std::vector<double> random_confidences(std::size_t n, std::mt19937_64& rng, bool quantize) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> g(n);
  for (double& v : g) v = quantize ? std::round(u(rng) * 10.0) / 10.0 : u(rng);
  return g;
}

// First grid lambda1 with (1/N) sum 1{g_i < 1 - lambda1} <= 1 - xi.
inline double oracle_stage1(const std::vector<double>& pooled, double xi) {
  for (int j = 0; j <= kOracleSteps; ++j) {
    const double lambda = j * kOracleStep;
    int count = 0;
    for (double g : pooled) count += g < 1.0 - lambda ? 1 : 0;
    if (static_cast<double>(count) / static_cast<double>(pooled.size()) <= 1.0 - xi) return lambda;
  }
  return 1.0;
}

struct OracleItem {
  std::vector<double> probs;
  std::size_t label;
};

// Loss of the set {k : p_k >= 1 - lambda}; ordinal when weights is non-empty.
inline double oracle_loss(const OracleItem& item, double lambda, const std::vector<double>& weights) {
  const double t = 1.0 - lambda;
  if (weights.empty()) return item.probs[item.label] >= t ? 0.0 : 1.0;
  std::size_t best = weights.size();
  for (std::size_t k = 0; k < item.probs.size(); ++k) {
    if (item.probs[k] >= t) {
      const std::size_t d = k > item.label ? k - item.label : item.label - k;
      best = std::min(best, d);
    }
  }
  return best == weights.size() ? 1.0 : weights[best];
}

// First grid lambda2 with sum of losses <= budget. Entries with a false
// `mask` contribute no loss. The loss sum is monotone in lambda (checked by
// its own property test), so the first qualifying grid index is found by
// bisection over the grid.
inline double oracle_stage2(const std::vector<OracleItem>& items, long long budget,
                            const std::vector<double>& weights,
                            const std::vector<bool>& mask = {}) {
  const auto fits = [&](int j) {
    const double lambda = j * kOracleStep;
    double total = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (mask.empty() || mask[i]) total += oracle_loss(items[i], lambda, weights);
    }
    return total <= static_cast<double>(budget);
  };
  int lo = 0;
  int hi = kOracleSteps + 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (fits(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo > kOracleSteps ? 1.0 : lo * kOracleStep;
}

// Scored synthetic data with margin confidence.
inline std::vector<ScoredExample> scored_synthetic(std::size_t n, std::size_t k, std::uint64_t seed,
                                                   double signal = 2.5, double hardness = 0.3) {
  SynthConfig cfg;
  cfg.n_classes = k;
  cfg.n_samples = n;
  cfg.signal_strength = signal;
  cfg.hardness_mix = hardness;
  cfg.seed = seed;
  const auto records = generate(cfg);
  return kernels::serial::score_records(records, ScoreKind{ScoreTag::kMargin, 1.0}, nullptr);
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double standard_error(const std::vector<double>& xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace scrc::testing
