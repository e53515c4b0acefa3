#pragma once

// Conformal risk control on the selected calibration subset.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/sets.hpp"

namespace scrc {

struct LabeledProbs {
  std::span<const double> probs;
  ClassIndex label = 0;
};

struct StageTwoResult {
  std::optional<double> lambda2_hat;  // present iff feasible
  std::size_t m = 0;
  long long budget = -1;
  bool feasible = false;
};

// ceil((m+1) alpha) - 1
long long crc_budget(std::size_t m, double alpha);
// ceil((n+1) alpha xi_lcb) - 1
long long augmented_budget(std::size_t n, double alpha, double xi_lcb);

// (n+1) alpha xi_lcb >= 1, with the same integer snapping as the budgets.
bool augmented_feasible(std::size_t n, double alpha, double xi_lcb);

// ceil(1/alpha) - 1. When 1/alpha is an integer the budget at m == m_min is
// still zero, so the count at which the budget first turns positive is
// min_feasible_count().
std::size_t m_min(double alpha);
std::size_t min_feasible_count(double alpha);

// Sum of l(C_lambda2(x_i), y_i).
double loss_sum(std::span<const LabeledProbs> items, double lambda2, const LossKind& loss);

// Smallest lambda2 in [0,1] with sum_i 1{p_i(y_i) < 1 - lambda2} <= budget.
// `true_label_probs` is used as scratch.
double solve_miscoverage(std::vector<double> true_label_probs, long long budget);

// Smallest lambda2 in [0,1] with loss_sum <= budget, for any loss that is
// non-increasing in the set. Bisection over the candidate thresholds where the
// loss sum can jump; returns 1 when no candidate qualifies.
double solve_monotone(std::span<const LabeledProbs> items, long long budget, const LossKind& loss);

// Counting rule on the selected subset. Never throws for infeasibility;
// inspect `feasible`.
StageTwoResult try_crc_lambda2(std::span<const LabeledProbs> selected, double alpha,
                               const LossKind& loss);
// Throws Error{kInfeasible} when the budget is not positive.
StageTwoResult crc_lambda2(std::span<const LabeledProbs> selected, double alpha,
                           const LossKind& loss);

struct FlaggedExample {
  std::span<const double> probs;
  ClassIndex label = 0;
  bool selected = false;
};

// Counting rule on the augmented loss S'(x) l(C(x), y) over all n calibration
// points. Feasible iff (n+1) alpha xi_lcb >= 1.
StageTwoResult try_augmented_crc_lambda2(std::span<const FlaggedExample> all_cal, double alpha,
                                         double xi_lcb, const LossKind& loss);
StageTwoResult augmented_crc_lambda2(std::span<const FlaggedExample> all_cal, double alpha,
                                     double xi_lcb, const LossKind& loss);

// Solve for a given subset and budget, dispatching on the loss kind, then
// re-check the constraint at the returned value.
double solve_lambda2(std::span<const LabeledProbs> items, long long budget, const LossKind& loss);

}  // namespace scrc
