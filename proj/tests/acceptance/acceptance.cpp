// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Monte-Carlo criteria run the full 100-trial protocol on the
// coupled synthetic generator (K=10, n_cal=n_test=2000, margin score,
// miscoverage loss).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scrc/harness.hpp"
#include "scrc/stage1.hpp"
#include "scrc/stage2.hpp"
#include "test_util.hpp"

namespace {

using namespace scrc;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

SweepConfig protocol(SweepVariable variable, std::vector<std::string> values,
                     std::vector<Method> methods) {
  SweepConfig cfg;
  cfg.variable = variable;
  cfg.values = std::move(values);
  cfg.fixed.coverage_target = 0.7;
  cfg.fixed.risk_target = 0.1;
  cfg.fixed.confidence_delta = 0.05;
  cfg.score = {ScoreTag::kMargin, 1.0};
  cfg.loss = LossKind::miscoverage();
  cfg.n_trials = 100;
  cfg.methods = std::move(methods);
  SynthConfig synth;
  synth.n_classes = 10;
  cfg.source = synth;
  cfg.n_cal = 2000;
  cfg.n_test = 2000;
  cfg.base_seed = 20240;
  return cfg;
}

// Trial rows of one (value, method), ordered by trial.
std::vector<const TrialRow*> rows_of(const SweepResult& r, const std::string& value, Method m) {
  std::vector<const TrialRow*> out;
  for (const auto& row : r.rows) {
    if (row.sweep_value == value && row.method == m) out.push_back(&row);
  }
  return out;
}

struct Series {
  std::vector<double> risk, coverage, size_selected, size_rejected;
  std::size_t infeasible = 0;
};

Series series(const std::vector<const TrialRow*>& rows) {
  Series s;
  for (const auto* r : rows) {
    if (!r->metrics.feasible) {
      ++s.infeasible;
      continue;
    }
    s.coverage.push_back(r->metrics.selective_coverage);
    if (r->metrics.selective_risk) s.risk.push_back(*r->metrics.selective_risk);
    if (r->metrics.mean_set_size_selected) s.size_selected.push_back(*r->metrics.mean_set_size_selected);
    if (r->metrics.mean_set_size_rejected) s.size_rejected.push_back(*r->metrics.mean_set_size_rejected);
  }
  return s;
}

double mean_or_nan(const std::vector<double>& xs) { return xs.empty() ? NAN : testing::mean(xs); }

double value_of(const std::string& s) { return std::stod(s); }

const std::vector<std::string> kXis = {"0.6", "0.7", "0.8", "0.9"};
const std::vector<std::string> kAlphas = {"0.05", "0.1", "0.15", "0.2"};
const std::vector<Method> kAllMethods = {Method::kScrcT, Method::kScrcI, Method::kCrcAll,
                                         Method::kRand};

struct Sweeps {
  SweepResult xi;     // alpha = 0.1
  SweepResult alpha;  // xi = 0.7
  double seconds = 0.0;
};

void guarantee_suite(const Sweeps& s) {
  bool pass = true;
  std::ostringstream d;
  for (const auto& v : kXis) {
    const auto t = series(rows_of(s.xi, v, Method::kScrcT));
    const double cov = mean_or_nan(t.coverage), risk = mean_or_nan(t.risk);
    const bool ok = t.infeasible == 0 && cov >= value_of(v) - 0.02 && risk <= 0.1 + 0.02;
    pass = pass && ok;
    d << "xi=" << v << " cov=" << fixed(cov) << " risk=" << fixed(risk) << "; ";
  }
  for (const auto& v : kAlphas) {
    const auto t = series(rows_of(s.alpha, v, Method::kScrcT));
    const double risk = mean_or_nan(t.risk);
    const bool ok = t.infeasible == 0 && risk <= value_of(v) + 0.02;
    pass = pass && ok;
    d << "alpha=" << v << " risk=" << fixed(risk) << "; ";
  }
  d << "runtime " << fixed(s.seconds, 1) << "s (limit 300s)";
  report("guarantee-suite-scrc-t", pass && s.seconds < 300.0, d.str());
}

void scrc_i_guarantee(const Sweeps& s) {
  const double delta = 0.05;
  bool mean_ok = true;
  bool tail_ok = true;
  std::ostringstream d, tail;
  const auto check = [&](const SweepResult& r, const std::string& v, double alpha,
                         const std::string& label) {
    const auto rows = rows_of(r, v, Method::kScrcI);
    const auto t = series(rows);
    const double risk = mean_or_nan(t.risk);
    std::size_t exceed = 0;
    for (double x : t.risk) exceed += x > alpha ? 1 : 0;
    const double frac = static_cast<double>(exceed) / static_cast<double>(rows.size());
    mean_ok = mean_ok && t.infeasible == 0 && risk <= alpha + 0.02;
    tail_ok = tail_ok && frac <= delta + 0.05;
    d << label << " risk=" << fixed(risk) << "; ";
    tail << label << " " << exceed << "/" << rows.size() << "; ";
  };
  for (const auto& v : kXis) check(s.xi, v, 0.1, "xi=" + v);
  for (const auto& v : kAlphas) check(s.alpha, v, value_of(v), "alpha=" + v);
  report("scrc-i-mean-risk", mean_ok, d.str());
  report("scrc-i-per-trial-exceedance", tail_ok,
         "trials with risk > alpha: " + tail.str() + "limit delta+0.05 = 0.10 at every point");
}

void conservativeness(const Sweeps& s) {
  const auto t = series(rows_of(s.xi, "0.7", Method::kScrcT));
  const auto i = series(rows_of(s.xi, "0.7", Method::kScrcI));
  const double rt = mean_or_nan(t.risk), ri = mean_or_nan(i.risk);
  const double st = mean_or_nan(t.size_selected), si = mean_or_nan(i.size_selected);
  const bool pass = ri <= rt + 0.005 && si >= st - 0.01;
  report("conservativeness-ordering", pass,
         "risk I=" + fixed(ri) + " T=" + fixed(rt) + "; set size I=" + fixed(si) +
             " T=" + fixed(st));
}

double paired_se(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> diff(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) diff[k] = b[k] - a[k];
  return testing::standard_error(diff);
}

void delta_trend() {
  const auto start = Clock::now();
  const std::vector<std::string> deltas = {"0.01", "0.05", "0.10"};
  const auto r = run_sweep(protocol(SweepVariable::kDelta, deltas, {Method::kScrcI}));
  std::vector<Series> s;
  for (const auto& v : deltas) {
    s.push_back(series(rows_of(r, v, Method::kScrcI)));
    if (s.back().infeasible != 0 || s.back().risk.size() != 100) {
      report("delta-trend", false, "infeasible or empty trials at delta=" + v);
      return;
    }
  }
  bool pass = true;
  std::ostringstream d;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    d << "delta=" << deltas[k] << " risk=" << fixed(testing::mean(s[k].risk), 5)
      << " size=" << fixed(testing::mean(s[k].size_selected)) << "; ";
  }
  for (std::size_t k = 0; k + 1 < deltas.size(); ++k) {
    const double dr = testing::mean(s[k + 1].risk) - testing::mean(s[k].risk);
    const double ds = testing::mean(s[k + 1].size_selected) - testing::mean(s[k].size_selected);
    const double se_r = paired_se(s[k].risk, s[k + 1].risk);
    const double se_s = paired_se(s[k].size_selected, s[k + 1].size_selected);
    pass = pass && dr >= -se_r && ds <= se_s;
    d << deltas[k] << "->" << deltas[k + 1] << " drisk=" << fixed(dr, 5) << "(se " << fixed(se_r, 5)
      << ") dsize=" << fixed(ds) << "(se " << fixed(se_s) << "); ";
  }
  d << fixed(seconds_since(start), 1) << "s";
  report("delta-trend", pass, d.str());
}

void selected_vs_rejected(const Sweeps& s) {
  bool pass = true;
  std::size_t worst = 100;
  std::string worst_at;
  for (Method m : {Method::kScrcT, Method::kScrcI}) {
    for (const auto* sweep : {&s.xi, &s.alpha}) {
      const auto& values = sweep == &s.xi ? kXis : kAlphas;
      for (const auto& v : values) {
        std::size_t wins = 0;
        for (const auto* r : rows_of(*sweep, v, m)) {
          const auto& mt = r->metrics;
          if (mt.feasible && mt.mean_set_size_selected && mt.mean_set_size_rejected &&
              *mt.mean_set_size_selected < *mt.mean_set_size_rejected) {
            ++wins;
          }
        }
        pass = pass && wins >= 95;
        if (wins < worst) {
          worst = wins;
          worst_at = std::string(to_string(m)) + " " +
                     (sweep == &s.xi ? "xi=" : "alpha=") + v;
        }
      }
    }
  }
  report("selected-vs-rejected-set-size", pass,
         "minimum over methods and sweep points: " + std::to_string(worst) + "/100 trials (" +
             worst_at + ")");
}

void baselines(const Sweeps& s) {
  bool crc_ok = true;
  for (const auto* sweep : {&s.xi, &s.alpha}) {
    for (const auto& row : sweep->rows) {
      if (row.method == Method::kCrcAll) {
        crc_ok = crc_ok && row.metrics.feasible && row.metrics.selective_coverage == 1.0;
      }
    }
  }
  report("crc-all-full-coverage", crc_ok, "selective coverage == 1.0 in every trial");

  bool rand_ok = true;
  std::ostringstream d;
  std::vector<double> means, ses;
  for (const auto& v : kXis) {
    const double xi = value_of(v);
    const double band = 3.0 * std::sqrt(xi * (1.0 - xi) / 2000.0);
    const auto t = series(rows_of(s.xi, v, Method::kRand));
    std::size_t inside = 0;
    for (double c : t.coverage) inside += std::abs(c - xi) <= band ? 1 : 0;
    const double mc = mean_or_nan(t.coverage);
    rand_ok = rand_ok && t.infeasible == 0 && std::abs(mc - xi) <= band && inside >= 99;
    d << "xi=" << v << " mean=" << fixed(mc) << " in-band " << inside << "/100; ";
    means.push_back(testing::mean(t.size_selected));
    ses.push_back(testing::standard_error(t.size_selected));
  }
  report("rand-coverage-band", rand_ok, d.str() + "band = 3*sqrt(xi(1-xi)/n_test)");

  const double spread = *std::max_element(means.begin(), means.end()) -
                        *std::min_element(means.begin(), means.end());
  const double max_se = *std::max_element(ses.begin(), ses.end());
  std::ostringstream ds;
  for (std::size_t k = 0; k < means.size(); ++k) ds << "xi=" << kXis[k] << " size=" << fixed(means[k]) << "; ";
  ds << "spread=" << fixed(spread) << " vs 2*SE=" << fixed(2.0 * max_se);
  report("rand-set-size-flat", spread < 2.0 * max_se, ds.str());
}

void oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(8086);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tol = testing::kOracleStep + 1e-12;
  std::size_t bad1 = 0, bad2 = 0, aug_checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 50;
    const std::size_t k = 2 + rng() % 5;
    const auto g = testing::random_confidences(n, rng, i % 3 == 0);
    const double test_g = u(rng);
    const double xi = 0.01 + 0.99 * u(rng);
    auto pooled = g;
    pooled.push_back(test_g);
    bad1 += std::abs(transductive_lambda1(g, test_g, xi) - testing::oracle_stage1(pooled, xi)) > tol;
    bad1 += std::abs(calibration_only_lambda1(g, xi) - testing::oracle_stage1(g, xi)) > tol;

    std::vector<std::vector<double>> probs;
    std::vector<testing::OracleItem> items;
    std::vector<LabeledProbs> labeled;
    std::vector<FlaggedExample> flagged;
    std::vector<bool> mask;
    for (std::size_t j = 0; j < n; ++j) probs.push_back(testing::random_simplex(k, rng));
    for (std::size_t j = 0; j < n; ++j) {
      const ClassIndex y = rng() % k;
      const bool sel = rng() % 4 != 0;
      items.push_back({probs[j], y});
      labeled.push_back({probs[j], y});
      flagged.push_back({probs[j], y, sel});
      mask.push_back(sel);
    }
    const double alpha = 0.05 + 0.6 * u(rng);
    for (const auto& loss : {LossKind::miscoverage(), LossKind::weighted_ordinal(k)}) {
      const auto& w = loss.ordinal_weights;
      const auto crc = try_crc_lambda2(labeled, alpha, loss);
      if (crc.feasible) {
        bad2 += std::abs(*crc.lambda2_hat - testing::oracle_stage2(items, crc.budget, w)) > tol;
      }
      const long long budget = static_cast<long long>(rng() % (n + 1));
      bad2 += std::abs(solve_lambda2(labeled, budget, loss) -
                       testing::oracle_stage2(items, budget, w)) > tol;
      const double xi_lcb = 0.2 + 0.8 * u(rng);
      const auto aug = try_augmented_crc_lambda2(flagged, alpha, xi_lcb, loss);
      if (aug.feasible) {
        ++aug_checked;
        bad2 += std::abs(*aug.lambda2_hat - testing::oracle_stage2(items, aug.budget, w, mask)) > tol;
      }
    }
  }
  const double secs = seconds_since(start);
  report("oracle-equivalence", bad1 == 0 && bad2 == 0 && secs < 60.0,
         "1000 instances (n<=50, K<=6): stage-1 mismatches " + std::to_string(bad1) +
             ", stage-2 mismatches " + std::to_string(bad2) + " (" +
             std::to_string(aug_checked) + " calibration-only solves); " + fixed(secs, 1) + "s");
}

void structural_properties() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int cases = 1000;
  std::map<std::string, std::size_t> violations;

  for (int i = 0; i < cases; ++i) {
    const std::size_t k = 2 + rng() % 9;
    const auto p = testing::random_simplex(k, rng);
    const ClassIndex y = rng() % k;
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const auto sa = prediction_set(p, a), sb = prediction_set(p, b);
    if (!std::includes(sb.begin(), sb.end(), sa.begin(), sa.end())) ++violations["nestedness"];
    for (const auto& loss : {LossKind::miscoverage(), LossKind::weighted_ordinal(k)}) {
      if (loss(sa, y) < loss(sb, y)) ++violations["loss-monotonicity"];
    }
  }

  for (int i = 0; i < cases; ++i) {
    const std::size_t m = 1 + rng() % 40;
    const std::size_t k = 2 + rng() % 5;
    std::vector<std::vector<double>> probs;
    std::vector<LabeledProbs> items;
    for (std::size_t j = 0; j < m; ++j) probs.push_back(testing::random_simplex(k, rng));
    for (std::size_t j = 0; j < m; ++j) items.push_back({probs[j], rng() % k});
    const auto loss = i % 2 == 0 ? LossKind::miscoverage() : LossKind::weighted_ordinal(k);
    double prev = 1.0;
    for (long long budget = 0; budget <= static_cast<long long>(m); ++budget) {
      const double l = solve_lambda2(items, budget, loss);
      if (l > prev) ++violations["lambda2-budget-monotonicity"];
      prev = l;
    }
  }

  for (int i = 0; i < cases; ++i) {
    auto pooled = testing::random_confidences(2 + rng() % 40, rng, i % 3 == 0);
    const double xi = 0.01 + 0.99 * u(rng);
    const auto split_eval = [&](const std::vector<double>& v) {
      return transductive_lambda1(std::span(v).first(v.size() - 1), v.back(), xi);
    };
    const double ref = split_eval(pooled);
    for (int perm = 0; perm < 100; ++perm) {
      std::shuffle(pooled.begin(), pooled.end(), rng);
      if (split_eval(pooled) != ref) ++violations["permutation-symmetry"];
    }
  }

  for (int i = 0; i < cases; ++i) {
    const double alpha = i % 4 == 0 ? 1.0 / static_cast<double>(2 + rng() % 40) : 0.01 + 0.98 * u(rng);
    const std::size_t mm = m_min(alpha);
    const bool integral = std::abs(1.0 / alpha - std::round(1.0 / alpha)) < 1e-9;
    if (static_cast<long long>(mm) != static_cast<long long>(std::ceil(1.0 / alpha - 1e-9)) - 1) {
      ++violations["m_min-rule"];
    }
    for (std::size_t m = 0; m < mm + 4; ++m) {
      const bool feasible = crc_budget(m, alpha) > 0;
      const bool expected = m > mm || (m == mm && !integral);
      if (feasible != expected) ++violations["m_min-rule"];
    }
  }

  for (int i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 500;
    const double alpha = 0.01 + 0.98 * u(rng);
    double xi_lcb = i % 5 == 0 ? 1.0 / (static_cast<double>(n + 1) * alpha) : u(rng);
    xi_lcb = std::min(xi_lcb, 1.0);
    const double x = static_cast<double>(n + 1) * alpha * xi_lcb;
    const bool expected = std::abs(x - 1.0) <= 1e-9 || x >= 1.0;
    if (augmented_feasible(n, alpha, xi_lcb) != expected) ++violations["augmented-gate"];
  }

  bool pass = true;
  std::ostringstream d;
  for (const char* name : {"nestedness", "loss-monotonicity", "lambda2-budget-monotonicity",
                           "permutation-symmetry", "m_min-rule", "augmented-gate"}) {
    const auto v = violations[name];
    pass = pass && v == 0;
    d << name << "=" << v << " ";
  }
  report("structural-properties", pass, "violations over 1000 cases each: " + d.str());
}

void determinism() {
  auto cfg = protocol(SweepVariable::kXi, kXis, kAllMethods);
  cfg.n_trials = 10;
  const auto csv = [&](int threads) {
    kernels::set_threads(threads);
    std::ostringstream out;
    write_trials_csv(out, run_sweep(cfg));
    return out.str();
  };
  const int saved = kernels::max_threads();
  const auto a = csv(1);
  const auto b = csv(1);
  const auto c = csv(8);
  kernels::set_threads(saved);
  report("determinism", a == b && a == c,
         "trial CSV (" + std::to_string(a.size()) + " bytes) identical across two runs and threads {1,8}");
}

}  // namespace

int main() {
  oracle_equivalence();
  structural_properties();

  Sweeps sweeps;
  const auto start = Clock::now();
  sweeps.xi = run_sweep(protocol(SweepVariable::kXi, kXis, kAllMethods));
  sweeps.alpha = run_sweep(protocol(SweepVariable::kAlpha, kAlphas, kAllMethods));
  sweeps.seconds = seconds_since(start);

  guarantee_suite(sweeps);
  scrc_i_guarantee(sweeps);
  conservativeness(sweeps);
  delta_trend();
  selected_vs_rejected(sweeps);
  baselines(sweeps);
  determinism();

  std::printf("%d criterion check(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
