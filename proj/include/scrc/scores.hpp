#pragma once

// Probability vectors and selection confidences derived from raw logits.
// Every confidence lies in [0,1] with larger meaning "more confident".

#include <span>
#include <string_view>
#include <vector>

namespace scrc {

enum class ScoreTag { kMsp, kMargin, kEntropy, kEnergy };

std::string_view to_string(ScoreTag tag);
ScoreTag parse_score(std::string_view text);

struct ScoreKind {
  ScoreTag tag = ScoreTag::kMargin;
  double temperature = 1.0;

  void validate() const;
};

// softmax(logits / T), computed after subtracting the maximum logit.
std::vector<double> temperature_softmax(std::span<const double> logits, double temperature);

double msp(std::span<const double> probs);
double margin(std::span<const double> probs);
// 1 - H(p) / log K, with 0 log 0 = 0.
double entropy_confidence(std::span<const double> probs);

// -T log sum_k exp(logit_k / T).
double raw_energy(std::span<const double> logits, double temperature);

// Min-max rescaling of negated energy fitted on a calibration collection.
class EnergyNormalizer {
 public:
  EnergyNormalizer(std::span<const std::vector<double>> calib_logits, double temperature);

  double operator()(std::span<const double> logits) const;

  // All calibration energies coincide; every query then maps to 0.5.
  bool degenerate() const { return degenerate_; }

 private:
  double temperature_;
  double lo_ = 0.0;  // min of -E over the calibration collection
  double hi_ = 0.0;
  bool degenerate_ = false;
};

double energy_confidence(std::span<const double> logits, double temperature,
                         std::span<const std::vector<double>> calib_logits);

// Confidence from probabilities; kEnergy is rejected here since it needs
// logits and a fitted normalizer.
double probability_confidence(ScoreTag tag, std::span<const double> probs);

}  // namespace scrc
