#pragma once

// First-stage selection: who gets a prediction and who is rejected.
//
// The first-stage empirical risk is a step function of lambda1 with jumps at
// lambda1 = 1 - g_(j), so every threshold below is computed exactly from an
// order statistic instead of a grid.

#include <cstddef>
#include <span>

namespace scrc {

enum class StageOneMode { kTransductive, kCalibrationOnly };

struct StageOneResult {
  double lambda1_hat = 1.0;
  StageOneMode mode = StageOneMode::kTransductive;
  // Calibration-only diagnostics; zero in transductive mode.
  double xi_hat = 0.0;
  double epsilon = 0.0;
  double xi_lcb = 0.0;
};

// 1{g < 1 - lambda1}
inline int stage1_loss(double g, double lambda1) { return g < 1.0 - lambda1 ? 1 : 0; }

// g >= 1 - lambda1
inline bool select(double g, double lambda1) { return g >= 1.0 - lambda1; }

// Largest number of rejections allowed among `pool` points at coverage xi:
// floor(pool * (1 - xi)).
std::size_t allowed_rejections(std::size_t pool, double xi);

// Smallest lambda1 in [0,1] with #{g_i < 1 - lambda1} <= allowed over the
// given confidences. `sorted_ascending` must be sorted.
double lambda1_from_sorted(std::span<const double> sorted_ascending, std::size_t allowed);

// Pools the n calibration confidences with the test confidence.
double transductive_lambda1(std::span<const double> cal_g, double test_g, double xi);

// Same rule, but `sorted_cal_g` is pre-sorted ascending and the test point is
// inserted logically in O(log n).
double transductive_lambda1_sorted(std::span<const double> sorted_cal_g, double test_g, double xi);

double calibration_only_lambda1(std::span<const double> cal_g, double xi);

// sqrt(log(2/delta) / (2n))
double dkw_half_width(std::size_t n, double delta);

// max(xi_hat - epsilon, 0)
double xi_lower_bound(double xi_hat, double epsilon);

// Calibration-only threshold with the empirical selection rate and its DKW
// lower confidence bound.
StageOneResult calibration_only_stage1(std::span<const double> cal_g, double xi, double delta);

}  // namespace scrc
