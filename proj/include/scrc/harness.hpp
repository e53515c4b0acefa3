#pragma once

// Monte-Carlo experiment driver: repeated random trials over a sweep of xi,
// alpha, delta or the score function, with CSV/JSON emission.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scrc/core.hpp"
#include "scrc/data.hpp"
#include "scrc/kernels.hpp"
#include "scrc/pipeline.hpp"
#include "scrc/scores.hpp"
#include "scrc/sets.hpp"

namespace scrc {

enum class SweepVariable { kXi, kAlpha, kDelta, kScore };

std::string_view to_string(SweepVariable v);
SweepVariable parse_sweep_variable(std::string_view text);

struct FileSource {
  std::filesystem::path path;
  double cal_fraction = 0.5;
  double test_fraction = 0.5;
};

struct SweepConfig {
  SweepVariable variable = SweepVariable::kXi;
  // Sweep values as given by the user ("0.6", "margin", ...); echoed verbatim
  // into the sweep_value column.
  std::vector<std::string> values;
  RiskSpec fixed;
  ScoreKind score;
  LossKind loss;
  CalibrationOptions options;
  std::size_t n_trials = 100;
  std::vector<Method> methods = {Method::kScrcT, Method::kScrcI, Method::kCrcAll, Method::kRand};
  std::variant<SynthConfig, FileSource> source = SynthConfig{};
  std::size_t n_cal = 2000;   // synthetic source only
  std::size_t n_test = 2000;  // synthetic source only
  bool decouple_g = false;    // replace g by an independent uniform score
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct TrialRow {
  Method method = Method::kScrcT;
  std::string sweep_value;
  std::size_t trial = 0;
  TrialMetrics metrics;
  // Calibrated thresholds; SCRC-T reports the mean over its per-point pairs.
  std::optional<double> lambda1;
  std::optional<double> lambda2;
};

struct MeanSe {
  std::optional<double> mean;
  std::optional<double> se;  // sample sd / sqrt(count); absent when count < 2
  std::size_t count = 0;
};

struct AggregateRow {
  Method method = Method::kScrcT;
  std::string sweep_value;
  std::size_t n_trials = 0;
  std::size_t n_feasible = 0;
  MeanSe selective_coverage;
  MeanSe selective_risk;
  MeanSe set_size_selected;
  MeanSe set_size_rejected;
  MeanSe lambda1;
  MeanSe lambda2;
  MeanSe n_selected;

  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

bool operator==(const MeanSe& a, const MeanSe& b);

struct SweepResult {
  SweepVariable variable = SweepVariable::kXi;
  std::vector<TrialRow> rows;  // ordered by (sweep value, trial, method)
  std::vector<AggregateRow> aggregates;
};

// Reduces per-point outcomes in index order.
TrialMetrics summarize(std::span<const kernels::PointOutcome> outcomes);

// Metrics of fixed thresholds on a labeled test set. Not valid for RAND.
TrialMetrics evaluate(const ThresholdPair& thresholds, std::span<const ScoredExample> test,
                      const LossKind& loss);

// Scored calibration and test splits of one trial.
struct TrialData {
  std::vector<ScoredExample> cal;
  std::vector<ScoredExample> test;
};

TrialData prepare_trial(const SweepConfig& cfg, const ScoreKind& score, std::size_t trial,
                        const std::vector<LabeledLogits>* file_records);

// One row per method for a single (sweep value, trial).
std::vector<TrialRow> run_trial(const SweepConfig& cfg, std::size_t value_index, std::size_t trial,
                                const std::vector<LabeledLogits>* file_records);

std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& rows);

// Trials run in parallel; output order and bytes do not depend on the thread
// count.
SweepResult run_sweep(const SweepConfig& cfg);

enum class OutputFormat { kCsv, kJson };
OutputFormat parse_format(std::string_view text);

void write_trials_csv(std::ostream& out, const SweepResult& result);
void write_aggregates_csv(std::ostream& out, const SweepResult& result);
void write_trials_json(std::ostream& out, const SweepResult& result);
void write_aggregates_json(std::ostream& out, const SweepResult& result);

// Writes `path` and the aggregate file `<stem>_agg<ext>` beside it.
void emit(const SweepResult& result, OutputFormat format, const std::filesystem::path& path);

// Parses a trial-level CSV written by write_trials_csv.
SweepResult read_trials_csv(std::istream& in);

std::filesystem::path aggregate_path(const std::filesystem::path& path);

}  // namespace scrc
