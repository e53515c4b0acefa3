#include "scrc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "scrc/error.hpp"
#include "scrc/kernels.hpp"
#include "scrc/stage1.hpp"

namespace scrc {

std::string_view to_string(Objective o) {
  return o == Objective::kMinLambda2 ? "lambda2" : "set-size";
}

Objective parse_objective(std::string_view text) {
  if (text == "lambda2") return Objective::kMinLambda2;
  if (text == "set-size") return Objective::kMinSetSize;
  throw Error(ErrorCode::kInvalidArgument, "unknown objective '" + std::string(text) + "'");
}

CalibrationTable::CalibrationTable(std::span<const ScoredExample> cal)
    : sorted_(cal.begin(), cal.end()) {
  if (sorted_.empty()) throw Error(ErrorCode::kInvalidArgument, "calibration set is empty");
  num_classes_ = sorted_.front().num_classes();
  for (const auto& e : sorted_) {
    validate_example(e);
    if (e.num_classes() != num_classes_) {
      throw Error(ErrorCode::kInconsistentWidth, "calibration examples differ in class count");
    }
    if (!e.label) throw Error(ErrorCode::kInvalidArgument, "calibration example without label");
  }
  std::stable_sort(sorted_.begin(), sorted_.end(), [](const auto& a, const auto& b) {
    return a.confidence > b.confidence;
  });
  items_.reserve(sorted_.size());
  probs_desc_.reserve(sorted_.size());
  descending_g_.reserve(sorted_.size());
  for (const auto& e : sorted_) {
    items_.push_back({std::span<const double>(e.probs), *e.label});
    auto desc = e.probs;
    std::sort(desc.begin(), desc.end(), std::greater<>());
    probs_desc_.push_back(std::move(desc));
    descending_g_.push_back(e.confidence);
  }
  ascending_g_.assign(descending_g_.rbegin(), descending_g_.rend());
}

std::size_t CalibrationTable::selected_count(double lambda1) const {
  const double threshold = 1.0 - lambda1;
  // descending_g_ is partitioned by g >= threshold.
  auto it = std::partition_point(descending_g_.begin(), descending_g_.end(),
                                 [&](double g) { return g >= threshold; });
  return static_cast<std::size_t>(it - descending_g_.begin());
}

double CalibrationTable::mean_set_size(std::size_t m, double lambda2) const {
  if (m == 0) return 0.0;
  const double threshold = 1.0 - lambda2;
  std::size_t total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (double p : probs_desc_[i]) {
      if (p < threshold) break;
      ++total;
    }
  }
  return static_cast<double>(total) / static_cast<double>(m);
}

PrefixSolution solve_prefix(const CalibrationTable& table, std::size_t m, Method method,
                            const RiskSpec& spec, const LossKind& loss) {
  PrefixSolution s;
  long long budget = -1;
  if (method == Method::kScrcI) {
    const std::size_t n = table.size();
    const double xi_hat = static_cast<double>(m) / static_cast<double>(n);
    s.xi_lcb = xi_lower_bound(xi_hat, dkw_half_width(n, spec.confidence_delta));
    s.feasible = augmented_feasible(n, spec.risk_target, s.xi_lcb);
    budget = augmented_budget(n, spec.risk_target, s.xi_lcb);
  } else {
    budget = crc_budget(m, spec.risk_target);
    s.feasible = m > 0 && budget > 0;
  }
  if (s.feasible) {
    s.lambda2 = solve_lambda2(table.prefix(m), budget, loss);
    s.mean_set_size = table.mean_set_size(m, s.lambda2);
  }
  return s;
}

std::vector<double> lambda1_grid(double start, double eta) {
  if (!(eta > 0.0)) throw Error(ErrorCode::kOutOfRange, "grid step must be positive");
  std::vector<double> grid;
  for (std::size_t j = 0;; ++j) {
    const double v = start + static_cast<double>(j) * eta;
    if (v >= 1.0 - 1e-12) break;
    grid.push_back(v);
  }
  grid.push_back(1.0);
  return grid;
}

namespace {

template <class Solve>
std::optional<ThresholdPair> sweep(const CalibrationTable& table, double start, Method method,
                                   const RiskSpec& spec, CalibrationOptions options, Solve&& solve,
                                   std::vector<GridPoint>* trace) {
  const std::vector<double> grid =
      options.sweep ? lambda1_grid(start, spec.grid_step) : std::vector<double>{start};
  std::optional<ThresholdPair> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (double lambda1 : grid) {
    const std::size_t m = table.selected_count(lambda1);
    const PrefixSolution sol = solve(m);
    if (trace) {
      GridPoint gp{lambda1, m, std::nullopt, 0.0, sol.feasible};
      if (sol.feasible) {
        gp.lambda2 = sol.lambda2;
        gp.mean_set_size = sol.mean_set_size;
      }
      trace->push_back(gp);
    }
    if (!sol.feasible) continue;
    const double score =
        options.objective == Objective::kMinLambda2 ? sol.lambda2 : sol.mean_set_size;
    // Strict improvement keeps the smaller lambda1 on ties.
    if (!best || score < best_score) {
      best_score = score;
      ThresholdPair tp{lambda1, sol.lambda2, method, std::nullopt};
      if (method == Method::kScrcI) tp.xi_lcb = sol.xi_lcb;
      best = tp;
    }
  }
  return best;
}

std::vector<double> confidences(std::span<const ScoredExample> cal) {
  std::vector<double> g;
  g.reserve(cal.size());
  for (const auto& e : cal) g.push_back(e.confidence);
  return g;
}

[[noreturn]] void throw_no_feasible(const CalibrationTable& table, const RiskSpec& spec) {
  std::ostringstream msg;
  msg << "no lambda1 grid point selects enough calibration points (n=" << table.size()
      << ", need m >= " << min_feasible_count(spec.risk_target) << " at alpha=" << spec.risk_target
      << ")";
  throw Error(ErrorCode::kNoFeasibleGridPoint, msg.str());
}

}  // namespace

CalibrationOutcome scrc_t_calibrate(std::span<const ScoredExample> cal, double test_g,
                                    const RiskSpec& spec, const LossKind& loss,
                                    CalibrationOptions options) {
  spec.validate();
  const CalibrationTable table(cal);
  loss.validate(table.num_classes());
  const double start = transductive_lambda1(confidences(cal), test_g, spec.coverage_target);
  CalibrationOutcome out;
  out.objective = options.objective;
  auto best = sweep(
      table, start, Method::kScrcT, spec, options,
      [&](std::size_t m) { return solve_prefix(table, m, Method::kScrcT, spec, loss); },
      &out.grid_trace);
  if (!best) throw_no_feasible(table, spec);
  out.thresholds = *best;
  return out;
}

CalibrationOutcome scrc_i_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                    const LossKind& loss, CalibrationOptions options) {
  spec.validate();
  const CalibrationTable table(cal);
  loss.validate(table.num_classes());
  const double start = calibration_only_lambda1(confidences(cal), spec.coverage_target);
  CalibrationOutcome out;
  out.objective = options.objective;
  auto best = sweep(
      table, start, Method::kScrcI, spec, options,
      [&](std::size_t m) { return solve_prefix(table, m, Method::kScrcI, spec, loss); },
      &out.grid_trace);
  if (!best) {
    std::ostringstream msg;
    msg << "(n+1)*alpha*xi_lcb < 1 at every lambda1 (n=" << table.size()
        << ", alpha=" << spec.risk_target << ", delta=" << spec.confidence_delta
        << "); increase n, alpha or delta";
    throw Error(ErrorCode::kInfeasible, msg.str());
  }
  out.thresholds = *best;
  return out;
}

CalibrationOutcome crc_all_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                     const LossKind& loss) {
  spec.validate();
  const CalibrationTable table(cal);
  loss.validate(table.num_classes());
  const auto r = crc_lambda2(table.prefix(table.size()), spec.risk_target, loss);
  CalibrationOutcome out;
  out.objective = Objective::kMinLambda2;
  out.thresholds = {1.0, *r.lambda2_hat, Method::kCrcAll, std::nullopt};
  out.grid_trace.push_back(
      {1.0, table.size(), r.lambda2_hat, table.mean_set_size(table.size(), *r.lambda2_hat), true});
  return out;
}

CalibrationOutcome rand_calibrate(std::span<const ScoredExample> cal, const RiskSpec& spec,
                                  const LossKind& loss, std::uint64_t seed) {
  constexpr int kMaxDraws = 10;
  spec.validate();
  if (cal.empty()) throw Error(ErrorCode::kInvalidArgument, "calibration set is empty");
  for (const auto& e : cal) {
    validate_example(e);
    if (!e.label) throw Error(ErrorCode::kInvalidArgument, "calibration example without label");
  }
  loss.validate(cal.front().num_classes());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(spec.coverage_target);
  std::vector<LabeledProbs> subset;
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    subset.clear();
    for (const auto& e : cal) {
      if (coin(rng)) subset.push_back({std::span<const double>(e.probs), *e.label});
    }
    const auto r = try_crc_lambda2(subset, spec.risk_target, loss);
    if (!r.feasible) continue;
    CalibrationOutcome out;
    out.objective = Objective::kMinLambda2;
    out.thresholds = {spec.coverage_target, *r.lambda2_hat, Method::kRand, std::nullopt};
    double total = 0.0;
    for (const auto& item : subset) total += prediction_set(item.probs, *r.lambda2_hat).size();
    out.grid_trace.push_back({spec.coverage_target, subset.size(), r.lambda2_hat,
                              total / static_cast<double>(subset.size()), true});
    return out;
  }
  std::ostringstream msg;
  msg << "random subsets stayed below m=" << min_feasible_count(spec.risk_target) << " after "
      << kMaxDraws << " draws";
  throw Error(ErrorCode::kInfeasible, msg.str());
}

TransductiveCalibrator::TransductiveCalibrator(std::span<const ScoredExample> cal,
                                               const RiskSpec& spec, const LossKind& loss,
                                               CalibrationOptions options)
    : table_(cal), spec_(spec), loss_(loss), options_(options), cache_(table_.size() + 1) {
  spec_.validate();
  loss_.validate(table_.num_classes());
}

PrefixSolution TransductiveCalibrator::cached(std::size_t m) const {
  {
    std::lock_guard lock(mutex_);
    if (cache_[m]) return *cache_[m];
  }
  PrefixSolution sol = solve_prefix(table_, m, Method::kScrcT, spec_, loss_);
  std::lock_guard lock(mutex_);
  cache_[m] = sol;
  return sol;
}

CalibrationOutcome TransductiveCalibrator::calibrate(double test_g) const {
  const double start =
      transductive_lambda1_sorted(table_.confidences_ascending(), test_g, spec_.coverage_target);
  CalibrationOutcome out;
  out.objective = options_.objective;
  auto best = sweep(
      table_, start, Method::kScrcT, spec_, options_, [&](std::size_t m) { return cached(m); },
      &out.grid_trace);
  if (!best) throw_no_feasible(table_, spec_);
  out.thresholds = *best;
  return out;
}

std::vector<std::optional<ThresholdPair>> TransductiveCalibrator::thresholds(
    std::span<const double> test_g) const {
  const std::vector<double> starts =
      kernels::transductive_lambda1(table_.confidences_ascending(), test_g, spec_.coverage_target);

  std::vector<double> unique_starts = starts;
  std::sort(unique_starts.begin(), unique_starts.end());
  unique_starts.erase(std::unique(unique_starts.begin(), unique_starts.end()), unique_starts.end());

  // Fill the cache for every selected count any sweep will visit.
  std::vector<char> needed(table_.size() + 1, 0);
  for (double start : unique_starts) {
    const std::vector<double> grid =
        options_.sweep ? lambda1_grid(start, spec_.grid_step) : std::vector<double>{start};
    for (double lambda1 : grid) needed[table_.selected_count(lambda1)] = 1;
  }
  std::vector<std::size_t> missing;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t m = 0; m < needed.size(); ++m) {
      if (needed[m] && !cache_[m]) missing.push_back(m);
    }
  }
  const auto solved =
      kernels::solve_prefixes(table_, missing, Method::kScrcT, spec_, loss_);
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_[missing[i]] = solved[i];
  }

  std::vector<std::optional<ThresholdPair>> per_start(unique_starts.size());
  for (std::size_t u = 0; u < unique_starts.size(); ++u) {
    per_start[u] = sweep(
        table_, unique_starts[u], Method::kScrcT, spec_, options_,
        [&](std::size_t m) { return cached(m); }, nullptr);
  }

  std::vector<std::optional<ThresholdPair>> out(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto it = std::lower_bound(unique_starts.begin(), unique_starts.end(), starts[i]);
    out[i] = per_start[static_cast<std::size_t>(it - unique_starts.begin())];
  }
  return out;
}

SelectiveOutput apply(const ThresholdPair& thresholds, const ScoredExample& example) {
  if (thresholds.method == Method::kRand) {
    throw Error(ErrorCode::kInvalidArgument, "RAND thresholds need apply_random");
  }
  if (!select(example.confidence, thresholds.lambda1)) return SelectiveOutput::abstain();
  return SelectiveOutput::predict(prediction_set(example.probs, thresholds.lambda2));
}

SelectiveOutput apply_random(const ThresholdPair& thresholds, const ScoredExample& example,
                             std::mt19937_64& rng) {
  std::bernoulli_distribution coin(thresholds.lambda1);
  if (!coin(rng)) return SelectiveOutput::abstain();
  return SelectiveOutput::predict(prediction_set(example.probs, thresholds.lambda2));
}

}  // namespace scrc
