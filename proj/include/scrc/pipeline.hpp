#pragma once

// End-to-end calibration: SCRC-T (transductive), SCRC-I (calibration-only),
// and the CRC-ALL / RAND baselines, plus test-time application.

#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/sets.hpp"
#include "scrc/stage2.hpp"

namespace scrc {

enum class Objective { kMinLambda2, kMinSetSize };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view text);

struct CalibrationOptions {
  Objective objective = Objective::kMinSetSize;
  bool sweep = true;  // false: evaluate only the stage-one threshold
};

struct GridPoint {
  double lambda1 = 0.0;
  std::size_t m = 0;
  std::optional<double> lambda2;
  double mean_set_size = 0.0;  // over the selected calibration subset
  bool feasible = false;
};

struct CalibrationOutcome {
  ThresholdPair thresholds;
  std::vector<GridPoint> grid_trace;
  Objective objective = Objective::kMinSetSize;
};

// Calibration examples ordered by confidence, highest first, so that every
// selected subset {g >= 1 - lambda1} is a prefix.
class CalibrationTable {
 public:
  explicit CalibrationTable(std::span<const ScoredExample> cal);

  std::size_t size() const { return items_.size(); }
  std::size_t num_classes() const { return num_classes_; }

  // #{i : g_i >= 1 - lambda1}
  std::size_t selected_count(double lambda1) const;

  std::span<const double> confidences_ascending() const { return ascending_g_; }
  std::span<const LabeledProbs> prefix(std::size_t m) const {
    return std::span<const LabeledProbs>(items_).first(m);
  }

  // Mean |C_lambda2(x_i)| over the first m items; 0 when m == 0.
  double mean_set_size(std::size_t m, double lambda2) const;

 private:
  std::vector<ScoredExample> sorted_;
  std::vector<LabeledProbs> items_;
  std::vector<std::vector<double>> probs_desc_;
  std::vector<double> descending_g_;
  std::vector<double> ascending_g_;
  std::size_t num_classes_ = 0;
};

// Stage-two solution for the first m table items. A pure function of m for a
// given table, spec, loss and method.
struct PrefixSolution {
  bool feasible = false;
  double lambda2 = 1.0;
  double mean_set_size = 0.0;
  double xi_lcb = 0.0;  // SCRC-I only
};

PrefixSolution solve_prefix(const CalibrationTable& table, std::size_t m, Method method,
                            const RiskSpec& spec, const LossKind& loss);

// lambda1 grid: start, start+eta, ... below 1, then 1 itself.
std::vector<double> lambda1_grid(double start, double eta);

// Uncached reference path for a single test confidence.
CalibrationOutcome scrc_t_calibrate(std::span<const ScoredExample> cal, double test_g,
                                    const RiskSpec& spec, const LossKind& loss,
                                    CalibrationOptions options = {});

CalibrationOutcome scrc_i_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                    const LossKind& loss, CalibrationOptions options = {});

CalibrationOutcome crc_all_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                     const LossKind& loss);

CalibrationOutcome rand_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                  const LossKind& loss, std::uint64_t seed);

// SCRC-T for many test points sharing one calibration set. Stage-two
// solutions are memoized by selected count m, which fully determines the
// selected subset; outputs are identical to scrc_t_calibrate.
class TransductiveCalibrator {
 public:
  TransductiveCalibrator(std::span<const ScoredExample> cal, const RiskSpec& spec,
                         const LossKind& loss, CalibrationOptions options = {});

  CalibrationOutcome calibrate(double test_g) const;

  // One entry per test confidence; nullopt where no grid point is feasible.
  // Runs the per-point stage-one thresholds and the stage-two solves in
  // parallel.
  std::vector<std::optional<ThresholdPair>> thresholds(std::span<const double> test_g) const;

  const CalibrationTable& table() const { return table_; }

 private:
  PrefixSolution cached(std::size_t m) const;

  CalibrationTable table_;
  RiskSpec spec_;
  LossKind loss_;
  CalibrationOptions options_;
  mutable std::mutex mutex_;
  mutable std::vector<std::optional<PrefixSolution>> cache_;
};

// Abstain when g < 1 - lambda1, else C_lambda2(x). Not valid for RAND.
SelectiveOutput apply(const ThresholdPair& thresholds, const ScoredExample& example);

// RAND: accept with probability lambda1 independently of the example.
SelectiveOutput apply_random(const ThresholdPair& thresholds, const ScoredExample& example,
                             std::mt19937_64& rng);

}  // namespace scrc
