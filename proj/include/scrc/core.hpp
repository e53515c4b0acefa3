#pragma once

// Domain types shared by every stage of selective conformal risk control.
//
// Class indices are 0-based inside the library. External formats (CSV
// labels, serialized prediction sets) are 1-based and converted at the
// boundary.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scrc {

inline constexpr double kSimplexTolerance = 1e-9;

using ClassIndex = std::size_t;

struct ScoredExample {
  std::vector<double> probs;            // f(x), on the simplex
  double confidence = 0.0;              // g(x) in [0,1]
  std::optional<ClassIndex> label;      // 0-based
  std::optional<std::vector<double>> logits;

  std::size_t num_classes() const { return probs.size(); }
};

// Throws Error{kNonSimplex} or Error{kOutOfRange}; returns the input on success.
const ScoredExample& validate_example(const ScoredExample& e);

struct RiskSpec {
  double coverage_target = 0.7;    // xi in (0,1]
  double risk_target = 0.1;        // alpha in (0,1)
  double confidence_delta = 0.05;  // delta in (0,1)
  double grid_step = 0.01;         // eta in (0,1]

  void validate() const;
};

enum class Method { kScrcT, kScrcI, kCrcAll, kRand };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);

// For kRand, lambda1 carries the acceptance probability of the test-time coin
// rather than a confidence threshold.
struct ThresholdPair {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  Method method = Method::kScrcT;
  std::optional<double> xi_lcb;  // present iff method == kScrcI
};

class SelectiveOutput {
 public:
  static SelectiveOutput abstain() { return SelectiveOutput(); }
  // Sorts and deduplicates; every index must be < num_classes when checked
  // by the caller.
  static SelectiveOutput predict(std::vector<ClassIndex> set);

  bool is_abstain() const { return abstain_; }
  const std::vector<ClassIndex>& set() const { return set_; }

  // "ABSTAIN" or "{i,j,...}" with 1-based sorted indices.
  std::string to_string() const;
  static SelectiveOutput parse(std::string_view text);

  friend bool operator==(const SelectiveOutput&, const SelectiveOutput&) = default;

 private:
  SelectiveOutput() = default;
  bool abstain_ = true;
  std::vector<ClassIndex> set_;
};

struct TrialMetrics {
  double selective_coverage = 0.0;
  std::optional<double> selective_risk;           // absent when nothing selected
  std::optional<double> mean_set_size_selected;   // absent when nothing selected
  std::optional<double> mean_set_size_rejected;   // absent when nothing rejected
  std::size_t n_selected = 0;
  std::size_t n_test = 0;
  bool feasible = true;
};

// Integer rounding of products such as (m+1)*alpha. Values within a relative
// 1e-9 of an integer snap to it so that decimal inputs like alpha=0.1 behave
// as the exact rationals they stand for.
long long snapped_ceil(double x);
long long snapped_floor(double x);

// Smallest lambda in [0,1] such that the floating-point test
// value >= 1 - lambda holds for every value >= threshold.
double lambda_from_threshold(double threshold);

}  // namespace scrc
