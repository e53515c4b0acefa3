#include "scrc/kernels.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "scrc/error.hpp"
#include "scrc/stage1.hpp"

namespace scrc::kernels {

namespace {

ScoredExample score_one(const LabeledLogits& r, const ScoreKind& kind,
                        const EnergyNormalizer* energy) {
  ScoredExample e;
  e.probs = temperature_softmax(r.logits, kind.temperature);
  e.confidence = kind.tag == ScoreTag::kEnergy ? (*energy)(r.logits)
                                               : probability_confidence(kind.tag, e.probs);
  e.label = r.label;
  e.logits = r.logits;
  return e;
}

PointOutcome outcome_one(const ScoredExample& e, const Decision& d, const LossKind& loss) {
  if (!e.label) throw Error(ErrorCode::kInvalidArgument, "test example without label");
  const ClassSet set = prediction_set(e.probs, d.lambda2);
  return {d.selected, loss(set, *e.label), set.size()};
}

void check_energy(const ScoreKind& kind, const EnergyNormalizer* energy) {
  if (kind.tag == ScoreTag::kEnergy && energy == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "energy score needs a fitted normalizer");
  }
}

// Runs body(i) for i in [0, n) across threads and rethrows the first exception
// on the calling thread.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr error;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(scrc_kernel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

std::vector<ScoredExample> score_records(std::span<const LabeledLogits> records,
                                         const ScoreKind& kind, const EnergyNormalizer* energy) {
  kind.validate();
  check_energy(kind, energy);
  std::vector<ScoredExample> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) { out[i] = score_one(records[i], kind, energy); });
  return out;
}

std::vector<double> transductive_lambda1(std::span<const double> sorted_cal_g,
                                         std::span<const double> test_g, double xi) {
  std::vector<double> out(test_g.size());
  parallel_for(test_g.size(), [&](std::size_t i) {
    out[i] = transductive_lambda1_sorted(sorted_cal_g, test_g[i], xi);
  });
  return out;
}

std::vector<PrefixSolution> solve_prefixes(const CalibrationTable& table,
                                           std::span<const std::size_t> ms, Method method,
                                           const RiskSpec& spec, const LossKind& loss) {
  std::vector<PrefixSolution> out(ms.size());
  parallel_for(ms.size(), [&](std::size_t i) {
    out[i] = solve_prefix(table, ms[i], method, spec, loss);
  });
  return out;
}

std::vector<PointOutcome> apply_decisions(std::span<const ScoredExample> test,
                                          std::span<const Decision> decisions,
                                          const LossKind& loss) {
  if (test.size() != decisions.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one decision per test example required");
  }
  std::vector<PointOutcome> out(test.size());
  parallel_for(test.size(), [&](std::size_t i) { out[i] = outcome_one(test[i], decisions[i], loss); });
  return out;
}

namespace serial {

std::vector<ScoredExample> score_records(std::span<const LabeledLogits> records,
                                         const ScoreKind& kind, const EnergyNormalizer* energy) {
  kind.validate();
  check_energy(kind, energy);
  std::vector<ScoredExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(score_one(r, kind, energy));
  return out;
}

std::vector<double> transductive_lambda1(std::span<const double> sorted_cal_g,
                                         std::span<const double> test_g, double xi) {
  std::vector<double> out;
  out.reserve(test_g.size());
  for (double g : test_g) out.push_back(transductive_lambda1_sorted(sorted_cal_g, g, xi));
  return out;
}

std::vector<PrefixSolution> solve_prefixes(const CalibrationTable& table,
                                           std::span<const std::size_t> ms, Method method,
                                           const RiskSpec& spec, const LossKind& loss) {
  std::vector<PrefixSolution> out;
  out.reserve(ms.size());
  for (std::size_t m : ms) out.push_back(solve_prefix(table, m, method, spec, loss));
  return out;
}

std::vector<PointOutcome> apply_decisions(std::span<const ScoredExample> test,
                                          std::span<const Decision> decisions,
                                          const LossKind& loss) {
  if (test.size() != decisions.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one decision per test example required");
  }
  std::vector<PointOutcome> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) out.push_back(outcome_one(test[i], decisions[i], loss));
  return out;
}

}  // namespace serial
}  // namespace scrc::kernels
