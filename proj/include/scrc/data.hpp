#pragma once

// Synthetic logit generation and the CSV logits format:
//
//   logit_1,logit_2,...,logit_K,label
//   2.0,0.0,-1.0,1
//
// Labels are 1-based in the file and 0-based in memory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "scrc/core.hpp"

namespace scrc {

struct LabeledLogits {
  std::vector<double> logits;
  ClassIndex label = 0;

  friend bool operator==(const LabeledLogits&, const LabeledLogits&) = default;
};

struct SynthConfig {
  std::size_t n_classes = 10;
  std::size_t n_samples = 4000;
  double signal_strength = 2.5;  // true-class logit boost for easy examples
  double noise_scale = 1.0;      // per-coordinate Gaussian noise sd
  double hardness_mix = 0.3;     // fraction of examples with 0.2x signal
  std::uint64_t seed = 0;

  void validate() const;
};

// i.i.d. draws: y uniform, logits = s' e_y + N(0, sigma^2 I).
std::vector<LabeledLogits> generate(const SynthConfig& config);

std::vector<LabeledLogits> load_logits(const std::filesystem::path& path);
std::vector<LabeledLogits> read_logits(std::istream& in);
void write_logits(std::ostream& out, const std::vector<LabeledLogits>& records);
void save_logits(const std::filesystem::path& path, const std::vector<LabeledLogits>& records);

// Uniformly random disjoint calibration / test subsets of sizes
// floor(fraction * n). Throws Error{kEmptySplit} when either would be empty.
std::pair<std::vector<LabeledLogits>, std::vector<LabeledLogits>> split(
    const std::vector<LabeledLogits>& records, double cal_fraction, double test_fraction,
    std::uint64_t seed);

}  // namespace scrc
