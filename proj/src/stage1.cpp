#include "scrc/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/error.hpp"

namespace scrc {

std::size_t allowed_rejections(std::size_t pool, double xi) {
  const long long k = snapped_floor(static_cast<double>(pool) * (1.0 - xi));
  return k <= 0 ? 0 : static_cast<std::size_t>(k);
}

double lambda1_from_sorted(std::span<const double> sorted_ascending, std::size_t allowed) {
  // #{g < t} <= allowed  <=>  t <= g_(allowed+1)
  if (allowed >= sorted_ascending.size()) return 0.0;
  return lambda_from_threshold(sorted_ascending[allowed]);
}

double transductive_lambda1(std::span<const double> cal_g, double test_g, double xi) {
  if (cal_g.empty()) throw Error(ErrorCode::kInvalidArgument, "need at least one calibration point");
  std::vector<double> pooled(cal_g.begin(), cal_g.end());
  pooled.push_back(test_g);
  std::sort(pooled.begin(), pooled.end());
  return lambda1_from_sorted(pooled, allowed_rejections(pooled.size(), xi));
}

double transductive_lambda1_sorted(std::span<const double> sorted_cal_g, double test_g, double xi) {
  if (sorted_cal_g.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one calibration point");
  }
  const std::size_t n = sorted_cal_g.size();
  const std::size_t allowed = allowed_rejections(n + 1, xi);
  if (allowed >= n + 1) return 0.0;
  // Order statistic (allowed+1) of the pool, 0-based index `allowed`.
  const std::size_t pos =
      static_cast<std::size_t>(std::lower_bound(sorted_cal_g.begin(), sorted_cal_g.end(), test_g) -
                               sorted_cal_g.begin());
  double value;
  if (allowed < pos) {
    value = sorted_cal_g[allowed];
  } else if (allowed == pos) {
    value = test_g;
  } else {
    value = sorted_cal_g[allowed - 1];
  }
  return lambda_from_threshold(value);
}

double calibration_only_lambda1(std::span<const double> cal_g, double xi) {
  if (cal_g.empty()) throw Error(ErrorCode::kInvalidArgument, "need at least one calibration point");
  std::vector<double> sorted(cal_g.begin(), cal_g.end());
  std::sort(sorted.begin(), sorted.end());
  return lambda1_from_sorted(sorted, allowed_rejections(sorted.size(), xi));
}

double dkw_half_width(std::size_t n, double delta) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "DKW half-width needs n >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::kOutOfRange, "delta must lie in (0,1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

double xi_lower_bound(double xi_hat, double epsilon) { return std::max(xi_hat - epsilon, 0.0); }

StageOneResult calibration_only_stage1(std::span<const double> cal_g, double xi, double delta) {
  StageOneResult r;
  r.mode = StageOneMode::kCalibrationOnly;
  r.lambda1_hat = calibration_only_lambda1(cal_g, xi);
  const auto selected = std::count_if(cal_g.begin(), cal_g.end(),
                                      [&](double g) { return select(g, r.lambda1_hat); });
  r.xi_hat = static_cast<double>(selected) / static_cast<double>(cal_g.size());
  r.epsilon = dkw_half_width(cal_g.size(), delta);
  r.xi_lcb = xi_lower_bound(r.xi_hat, r.epsilon);
  return r;
}

}  // namespace scrc
