#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference in kernels::serial producing identical output; the reference is
// used by the tests and the benchmark.

#include <cstddef>
#include <span>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/data.hpp"
#include "scrc/pipeline.hpp"
#include "scrc/scores.hpp"
#include "scrc/sets.hpp"

namespace scrc::kernels {

struct Decision {
  bool selected = false;
  double lambda2 = 1.0;
};

struct PointOutcome {
  bool selected = false;
  double loss = 0.0;          // l(C_lambda2(x), y), also for rejected points
  std::size_t set_size = 0;   // |C_lambda2(x)|, counterfactual when rejected
};

// `energy` is required when kind.tag == kEnergy and ignored otherwise.
std::vector<ScoredExample> score_records(std::span<const LabeledLogits> records,
                                         const ScoreKind& kind, const EnergyNormalizer* energy);

std::vector<double> transductive_lambda1(std::span<const double> sorted_cal_g,
                                         std::span<const double> test_g, double xi);

std::vector<PrefixSolution> solve_prefixes(const CalibrationTable& table,
                                           std::span<const std::size_t> ms, Method method,
                                           const RiskSpec& spec, const LossKind& loss);

std::vector<PointOutcome> apply_decisions(std::span<const ScoredExample> test,
                                          std::span<const Decision> decisions,
                                          const LossKind& loss);

int max_threads();
void set_threads(int n);

namespace serial {

std::vector<ScoredExample> score_records(std::span<const LabeledLogits> records,
                                         const ScoreKind& kind, const EnergyNormalizer* energy);

std::vector<double> transductive_lambda1(std::span<const double> sorted_cal_g,
                                         std::span<const double> test_g, double xi);

std::vector<PrefixSolution> solve_prefixes(const CalibrationTable& table,
                                           std::span<const std::size_t> ms, Method method,
                                           const RiskSpec& spec, const LossKind& loss);

std::vector<PointOutcome> apply_decisions(std::span<const ScoredExample> test,
                                          std::span<const Decision> decisions,
                                          const LossKind& loss);

}  // namespace serial
}  // namespace scrc::kernels
