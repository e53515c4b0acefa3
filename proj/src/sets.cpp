#include "scrc/sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scrc/error.hpp"

namespace scrc {

std::string_view to_string(LossTag tag) {
  return tag == LossTag::kMiscoverage ? "miscoverage" : "ordinal";
}

LossTag parse_loss(std::string_view text) {
  if (text == "miscoverage") return LossTag::kMiscoverage;
  if (text == "ordinal") return LossTag::kWeightedOrdinal;
  throw Error(ErrorCode::kInvalidArgument, "unknown loss '" + std::string(text) + "'");
}

std::vector<double> linear_ordinal_weights(std::size_t num_classes) {
  if (num_classes < 2) throw Error(ErrorCode::kInvalidArgument, "ordinal loss needs K >= 2");
  std::vector<double> w(num_classes);
  for (std::size_t d = 0; d < num_classes; ++d) {
    w[d] = static_cast<double>(d) / static_cast<double>(num_classes - 1);
  }
  return w;
}

LossKind LossKind::weighted_ordinal(std::size_t num_classes, std::vector<double> weights) {
  LossKind kind;
  kind.tag = LossTag::kWeightedOrdinal;
  kind.ordinal_weights = weights.empty() ? linear_ordinal_weights(num_classes) : std::move(weights);
  kind.validate(num_classes);
  return kind;
}

void LossKind::validate(std::size_t num_classes) const {
  if (tag == LossTag::kMiscoverage) return;
  const auto& w = ordinal_weights;
  if (w.size() != num_classes) {
    throw Error(ErrorCode::kInvalidArgument,
                "ordinal weight table needs " + std::to_string(num_classes) + " entries");
  }
  if (w.front() != 0.0) throw Error(ErrorCode::kInvalidArgument, "ordinal weights need w(0) = 0");
  if (!std::is_sorted(w.begin(), w.end())) {
    throw Error(ErrorCode::kInvalidArgument, "ordinal weights must be non-decreasing");
  }
  if (w.back() != 1.0) throw Error(ErrorCode::kInvalidArgument, "ordinal weights need max value 1");
}

double LossKind::operator()(const ClassSet& set, ClassIndex y) const {
  if (tag == LossTag::kMiscoverage) return miscoverage_loss(set, y);
  return weighted_ordinal_loss(set, y, ordinal_weights);
}

ClassSet prediction_set(std::span<const double> probs, double lambda2) {
  const double threshold = 1.0 - lambda2;
  ClassSet out;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] >= threshold) out.push_back(k);
  }
  return out;
}

double miscoverage_loss(const ClassSet& set, ClassIndex y) {
  return std::binary_search(set.begin(), set.end(), y) ? 0.0 : 1.0;
}

double weighted_ordinal_loss(const ClassSet& set, ClassIndex y, std::span<const double> weights) {
  if (set.empty()) return 1.0;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (ClassIndex k : set) {
    best = std::min(best, k > y ? k - y : y - k);
  }
  if (best >= weights.size()) {
    throw Error(ErrorCode::kInvalidArgument, "ordinal distance exceeds weight table");
  }
  return weights[best];
}

}  // namespace scrc
