#include "scrc/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "scrc/error.hpp"

namespace scrc {

long long crc_budget(std::size_t m, double alpha) {
  return snapped_ceil(static_cast<double>(m + 1) * alpha) - 1;
}

long long augmented_budget(std::size_t n, double alpha, double xi_lcb) {
  return snapped_ceil(static_cast<double>(n + 1) * alpha * xi_lcb) - 1;
}

bool augmented_feasible(std::size_t n, double alpha, double xi_lcb) {
  const double x = static_cast<double>(n + 1) * alpha * xi_lcb;
  return x >= 1.0 || snapped_floor(x) >= 1;
}

std::size_t m_min(double alpha) {
  const long long v = snapped_ceil(1.0 / alpha) - 1;
  return v < 0 ? 0 : static_cast<std::size_t>(v);
}

std::size_t min_feasible_count(double alpha) {
  std::size_t m = m_min(alpha);
  while (crc_budget(m, alpha) <= 0) ++m;
  return m;
}

double loss_sum(std::span<const LabeledProbs> items, double lambda2, const LossKind& loss) {
  double total = 0.0;
  for (const auto& item : items) total += loss(prediction_set(item.probs, lambda2), item.label);
  return total;
}

double solve_miscoverage(std::vector<double> true_label_probs, long long budget) {
  if (budget < 0) return 1.0;
  const auto allowed = static_cast<std::size_t>(budget);
  if (allowed >= true_label_probs.size()) return 0.0;
  auto nth = true_label_probs.begin() + static_cast<std::ptrdiff_t>(allowed);
  std::nth_element(true_label_probs.begin(), nth, true_label_probs.end());
  return lambda_from_threshold(*nth);
}

double solve_monotone(std::span<const LabeledProbs> items, long long budget, const LossKind& loss) {
  if (budget < 0) return 1.0;
  std::vector<double> candidates;
  candidates.reserve(items.size() * (items.empty() ? 0 : items.front().probs.size()) + 2);
  candidates.push_back(0.0);
  candidates.push_back(1.0);
  for (const auto& item : items) {
    for (double p : item.probs) candidates.push_back(lambda_from_threshold(p));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const auto within = [&](double lambda2) {
    return loss_sum(items, lambda2, loss) <= static_cast<double>(budget);
  };
  // loss_sum is non-increasing along `candidates`; find the first that fits.
  std::size_t lo = 0;
  std::size_t hi = candidates.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (within(candidates[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo == candidates.size() ? 1.0 : candidates[lo];
}

double solve_lambda2(std::span<const LabeledProbs> items, long long budget, const LossKind& loss) {
  double lambda2;
  if (loss.tag == LossTag::kMiscoverage) {
    std::vector<double> truth;
    truth.reserve(items.size());
    for (const auto& item : items) truth.push_back(item.probs[item.label]);
    lambda2 = solve_miscoverage(std::move(truth), budget);
  } else {
    lambda2 = solve_monotone(items, budget, loss);
  }
  if (budget >= 0 && lambda2 < 1.0 && loss_sum(items, lambda2, loss) > static_cast<double>(budget)) {
    std::ostringstream msg;
    msg << "lambda2=" << lambda2 << " violates the loss budget " << budget;
    throw std::logic_error(msg.str());
  }
  return lambda2;
}

StageTwoResult try_crc_lambda2(std::span<const LabeledProbs> selected, double alpha,
                               const LossKind& loss) {
  StageTwoResult r;
  r.m = selected.size();
  r.budget = crc_budget(r.m, alpha);
  r.feasible = r.budget > 0;
  if (r.feasible) r.lambda2_hat = solve_lambda2(selected, r.budget, loss);
  return r;
}

StageTwoResult crc_lambda2(std::span<const LabeledProbs> selected, double alpha,
                           const LossKind& loss) {
  auto r = try_crc_lambda2(selected, alpha, loss);
  if (!r.feasible) {
    std::ostringstream msg;
    msg << "m=" << r.m << " selected points give budget " << r.budget << " at alpha=" << alpha
        << "; need m >= " << min_feasible_count(alpha);
    throw Error(ErrorCode::kInfeasible, msg.str());
  }
  return r;
}

StageTwoResult try_augmented_crc_lambda2(std::span<const FlaggedExample> all_cal, double alpha,
                                         double xi_lcb, const LossKind& loss) {
  StageTwoResult r;
  std::vector<LabeledProbs> selected;
  for (const auto& e : all_cal) {
    if (e.selected) selected.push_back({e.probs, e.label});
  }
  r.m = selected.size();
  r.budget = augmented_budget(all_cal.size(), alpha, xi_lcb);
  r.feasible = !all_cal.empty() && augmented_feasible(all_cal.size(), alpha, xi_lcb);
  if (r.feasible) r.lambda2_hat = solve_lambda2(selected, r.budget, loss);
  return r;
}

StageTwoResult augmented_crc_lambda2(std::span<const FlaggedExample> all_cal, double alpha,
                                     double xi_lcb, const LossKind& loss) {
  auto r = try_augmented_crc_lambda2(all_cal, alpha, xi_lcb, loss);
  if (!r.feasible) {
    std::ostringstream msg;
    msg << "(n+1)*alpha*xi_lcb = " << static_cast<double>(all_cal.size() + 1) * alpha * xi_lcb
        << " < 1; increase n, alpha or delta";
    throw Error(ErrorCode::kInfeasible, msg.str());
  }
  return r;
}

}  // namespace scrc
