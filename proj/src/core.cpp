#include "scrc/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scrc/error.hpp"

namespace scrc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonSimplex: return "NonSimplex";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNoFeasibleGridPoint: return "NoFeasibleGridPoint";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kInconsistentWidth: return "InconsistentWidth";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

const ScoredExample& validate_example(const ScoredExample& e) {
  if (e.probs.size() < 2) {
    throw Error(ErrorCode::kNonSimplex, "need at least two classes");
  }
  double sum = 0.0;
  for (double p : e.probs) {
    if (!std::isfinite(p)) throw Error(ErrorCode::kNonFinite, "probability is not finite");
    if (p < 0.0 || p > 1.0) {
      throw Error(ErrorCode::kNonSimplex, "probability outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    std::ostringstream msg;
    msg << "probabilities sum to " << sum;
    throw Error(ErrorCode::kNonSimplex, msg.str());
  }
  if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "confidence outside [0,1]");
  }
  if (e.label && *e.label >= e.probs.size()) {
    throw Error(ErrorCode::kOutOfRange, "label outside class range");
  }
  if (e.logits && e.logits->size() != e.probs.size()) {
    throw Error(ErrorCode::kOutOfRange, "logits and probs differ in width");
  }
  return e;
}

void RiskSpec::validate() const {
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "coverage target xi must lie in (0,1]");
  }
  if (!open01(risk_target)) throw Error(ErrorCode::kOutOfRange, "risk target alpha must lie in (0,1)");
  if (!open01(confidence_delta)) throw Error(ErrorCode::kOutOfRange, "delta must lie in (0,1)");
  if (!(grid_step > 0.0 && grid_step <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "grid step eta must lie in (0,1]");
  }
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kScrcT: return "scrc-t";
    case Method::kScrcI: return "scrc-i";
    case Method::kCrcAll: return "crc-all";
    case Method::kRand: return "rand";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::kScrcT, Method::kScrcI, Method::kCrcAll, Method::kRand}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + std::string(text) + "'");
}

SelectiveOutput SelectiveOutput::predict(std::vector<ClassIndex> set) {
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  SelectiveOutput out;
  out.abstain_ = false;
  out.set_ = std::move(set);
  return out;
}

std::string SelectiveOutput::to_string() const {
  if (abstain_) return "ABSTAIN";
  std::string s = "{";
  for (std::size_t i = 0; i < set_.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(set_[i] + 1);
  }
  s += '}';
  return s;
}

SelectiveOutput SelectiveOutput::parse(std::string_view text) {
  if (text == "ABSTAIN") return abstain();
  if (text.size() < 2 || text.front() != '{' || text.back() != '}') {
    throw Error(ErrorCode::kParseError, "bad selective output '" + std::string(text) + "'");
  }
  std::vector<ClassIndex> set;
  std::string_view body = text.substr(1, text.size() - 2);
  while (!body.empty()) {
    auto comma = body.find(',');
    std::string token(body.substr(0, comma));
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || token.empty() || v == 0) {
      throw Error(ErrorCode::kParseError, "bad class index '" + token + "'");
    }
    set.push_back(static_cast<ClassIndex>(v - 1));
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  auto out = predict(set);
  if (out.set_.size() != set.size() || !std::is_sorted(set.begin(), set.end())) {
    throw Error(ErrorCode::kParseError, "set indices must be sorted and unique");
  }
  return out;
}

namespace {

bool near_integer(double x, double& nearest) {
  nearest = std::round(x);
  return std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x));
}

}  // namespace

long long snapped_ceil(double x) {
  double nearest = 0.0;
  if (near_integer(x, nearest)) return static_cast<long long>(nearest);
  return static_cast<long long>(std::ceil(x));
}

long long snapped_floor(double x) {
  double nearest = 0.0;
  if (near_integer(x, nearest)) return static_cast<long long>(nearest);
  return static_cast<long long>(std::floor(x));
}

double lambda_from_threshold(double threshold) {
  if (threshold >= 1.0) return 0.0;
  if (threshold <= 0.0) return 1.0;
  double lambda = 1.0 - threshold;
  while (1.0 - lambda > threshold && lambda < 1.0) {
    lambda = std::nextafter(lambda, 2.0);
  }
  return std::min(lambda, 1.0);
}

}  // namespace scrc
