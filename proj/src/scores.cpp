#include "scrc/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scrc/error.hpp"

namespace scrc {

std::string_view to_string(ScoreTag tag) {
  switch (tag) {
    case ScoreTag::kMsp: return "msp";
    case ScoreTag::kMargin: return "margin";
    case ScoreTag::kEntropy: return "entropy";
    case ScoreTag::kEnergy: return "energy";
  }
  return "unknown";
}

ScoreTag parse_score(std::string_view text) {
  for (ScoreTag t : {ScoreTag::kMsp, ScoreTag::kMargin, ScoreTag::kEntropy, ScoreTag::kEnergy}) {
    if (text == to_string(t)) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown score '" + std::string(text) + "'");
}

void ScoreKind::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kOutOfRange, "temperature must be positive");
  }
}

namespace {

void check_logits(std::span<const double> logits, double temperature) {
  if (logits.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two logits");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kOutOfRange, "temperature must be positive");
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "logit is not finite");
  }
}

}  // namespace

std::vector<double> temperature_softmax(std::span<const double> logits, double temperature) {
  check_logits(logits, temperature);
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp((logits[k] - top) / temperature);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

double msp(std::span<const double> probs) {
  return *std::max_element(probs.begin(), probs.end());
}

double margin(std::span<const double> probs) {
  if (probs.size() < 2) throw Error(ErrorCode::kInvalidArgument, "margin needs K >= 2");
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (double p : probs) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return std::clamp(first - second, 0.0, 1.0);
}

double entropy_confidence(std::span<const double> probs) {
  if (probs.size() < 2) throw Error(ErrorCode::kInvalidArgument, "entropy needs K >= 2");
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(1.0 - h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

double raw_energy(std::span<const double> logits, double temperature) {
  check_logits(logits, temperature);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp((v - top) / temperature);
  return -(top + temperature * std::log(sum));
}

EnergyNormalizer::EnergyNormalizer(std::span<const std::vector<double>> calib_logits,
                                   double temperature)
    : temperature_(temperature) {
  if (calib_logits.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "energy normalizer needs calibration logits");
  }
  lo_ = std::numeric_limits<double>::infinity();
  hi_ = -lo_;
  for (const auto& l : calib_logits) {
    const double neg = -raw_energy(l, temperature);
    lo_ = std::min(lo_, neg);
    hi_ = std::max(hi_, neg);
  }
  degenerate_ = !(hi_ > lo_);
}

double EnergyNormalizer::operator()(std::span<const double> logits) const {
  if (degenerate_) return 0.5;
  const double neg = -raw_energy(logits, temperature_);
  return std::clamp((neg - lo_) / (hi_ - lo_), 0.0, 1.0);
}

double energy_confidence(std::span<const double> logits, double temperature,
                         std::span<const std::vector<double>> calib_logits) {
  return EnergyNormalizer(calib_logits, temperature)(logits);
}

double probability_confidence(ScoreTag tag, std::span<const double> probs) {
  switch (tag) {
    case ScoreTag::kMsp: return msp(probs);
    case ScoreTag::kMargin: return margin(probs);
    case ScoreTag::kEntropy: return entropy_confidence(probs);
    case ScoreTag::kEnergy: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "energy confidence needs logits");
}

}  // namespace scrc
