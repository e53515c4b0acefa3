#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "scrc/core.hpp"

namespace scrc {

using ClassSet = std::vector<ClassIndex>;  // sorted, unique

enum class LossTag { kMiscoverage, kWeightedOrdinal };

std::string_view to_string(LossTag tag);
LossTag parse_loss(std::string_view text);

// Bounded loss l(C, y) in [0,1], non-increasing as C grows.
struct LossKind {
  LossTag tag = LossTag::kMiscoverage;
  // w(d) for ordinal distance d = 0..K-1; non-decreasing, w(0) = 0, max = 1.
  std::vector<double> ordinal_weights;

  static LossKind miscoverage() { return {}; }
  // Empty weights select the linear schedule w(d) = d / (K-1).
  static LossKind weighted_ordinal(std::size_t num_classes, std::vector<double> weights = {});

  void validate(std::size_t num_classes) const;
  double operator()(const ClassSet& set, ClassIndex y) const;
};

std::vector<double> linear_ordinal_weights(std::size_t num_classes);

// {k : p_k >= 1 - lambda2}
ClassSet prediction_set(std::span<const double> probs, double lambda2);

double miscoverage_loss(const ClassSet& set, ClassIndex y);
// w(min_{k in set} |k - y|), or 1 for the empty set.
double weighted_ordinal_loss(const ClassSet& set, ClassIndex y, std::span<const double> weights);

inline std::size_t set_size(const ClassSet& set) { return set.size(); }

}  // namespace scrc
