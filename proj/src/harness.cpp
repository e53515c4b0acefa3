#include "scrc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "scrc/error.hpp"
#include "scrc/stage1.hpp"

namespace scrc {

std::string_view to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::kXi: return "xi";
    case SweepVariable::kAlpha: return "alpha";
    case SweepVariable::kDelta: return "delta";
    case SweepVariable::kScore: return "score";
  }
  return "unknown";
}

SweepVariable parse_sweep_variable(std::string_view text) {
  for (auto v : {SweepVariable::kXi, SweepVariable::kAlpha, SweepVariable::kDelta,
                 SweepVariable::kScore}) {
    if (text == to_string(v)) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown sweep variable '" + std::string(text) + "'");
}

OutputFormat parse_format(std::string_view text) {
  if (text == "csv") return OutputFormat::kCsv;
  if (text == "json") return OutputFormat::kJson;
  throw Error(ErrorCode::kInvalidArgument, "unknown format '" + std::string(text) + "'");
}

namespace {

double parse_number(const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kParseError, "bad number '" + text + "'");
  }
  return v;
}

struct TrialSetting {
  RiskSpec spec;
  ScoreKind score;
};

TrialSetting setting_for(const SweepConfig& cfg, std::size_t value_index) {
  TrialSetting s{cfg.fixed, cfg.score};
  const std::string& value = cfg.values.at(value_index);
  switch (cfg.variable) {
    case SweepVariable::kXi: s.spec.coverage_target = parse_number(value); break;
    case SweepVariable::kAlpha: s.spec.risk_target = parse_number(value); break;
    case SweepVariable::kDelta: s.spec.confidence_delta = parse_number(value); break;
    case SweepVariable::kScore: s.score.tag = parse_score(value); break;
  }
  return s;
}

// Independent stream per (trial seed, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint32_t { kRandCalibration = 1, kRandCoin = 2, kDecoupledScore = 3 };

std::vector<kernels::Decision> threshold_decisions(const ThresholdPair& tp,
                                                   std::span<const ScoredExample> test) {
  std::vector<kernels::Decision> d(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    d[i] = {select(test[i].confidence, tp.lambda1), tp.lambda2};
  }
  return d;
}

TrialRow infeasible_row(Method method, const std::string& value, std::size_t trial,
                        std::size_t n_test) {
  TrialRow row{method, value, trial, {}, std::nullopt, std::nullopt};
  row.metrics.feasible = false;
  row.metrics.n_test = n_test;
  return row;
}

TrialRow run_method(Method method, const SweepConfig& cfg, const TrialSetting& setting,
                    const TrialData& data, const std::string& value, std::size_t trial,
                    std::uint64_t seed) {
  const auto& spec = setting.spec;
  const auto n_test = data.test.size();
  TrialRow row{method, value, trial, {}, std::nullopt, std::nullopt};
  try {
    std::vector<kernels::Decision> decisions;
    switch (method) {
      case Method::kScrcT: {
        const TransductiveCalibrator calibrator(data.cal, spec, cfg.loss, cfg.options);
        std::vector<double> test_g(n_test);
        for (std::size_t i = 0; i < n_test; ++i) test_g[i] = data.test[i].confidence;
        const auto pairs = calibrator.thresholds(test_g);
        decisions.resize(n_test);
        double sum1 = 0.0;
        double sum2 = 0.0;
        for (std::size_t i = 0; i < n_test; ++i) {
          if (!pairs[i]) return infeasible_row(method, value, trial, n_test);
          decisions[i] = {select(test_g[i], pairs[i]->lambda1), pairs[i]->lambda2};
          sum1 += pairs[i]->lambda1;
          sum2 += pairs[i]->lambda2;
        }
        row.lambda1 = sum1 / static_cast<double>(n_test);
        row.lambda2 = sum2 / static_cast<double>(n_test);
        break;
      }
      case Method::kScrcI:
      case Method::kCrcAll: {
        const auto outcome = method == Method::kScrcI
                                 ? scrc_i_calibrate(data.cal, spec, cfg.loss, cfg.options)
                                 : crc_all_calibrate(data.cal, spec, cfg.loss);
        decisions = threshold_decisions(outcome.thresholds, data.test);
        row.lambda1 = outcome.thresholds.lambda1;
        row.lambda2 = outcome.thresholds.lambda2;
        break;
      }
      case Method::kRand: {
        auto seeder = stream(seed, kRandCalibration);
        const auto outcome = rand_calibrate(data.cal, spec, cfg.loss, seeder());
        auto coin_rng = stream(seed, kRandCoin);
        std::bernoulli_distribution coin(outcome.thresholds.lambda1);
        decisions.resize(n_test);
        for (auto& d : decisions) d = {coin(coin_rng), outcome.thresholds.lambda2};
        row.lambda1 = outcome.thresholds.lambda1;
        row.lambda2 = outcome.thresholds.lambda2;
        break;
      }
    }
    row.metrics = summarize(kernels::apply_decisions(data.test, decisions, cfg.loss));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInfeasible && e.code() != ErrorCode::kNoFeasibleGridPoint) throw;
    return infeasible_row(method, value, trial, n_test);
  }
  return row;
}

void accumulate(MeanSe& stat, const std::vector<double>& xs) {
  stat.count = xs.size();
  if (xs.empty()) return;
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  stat.mean = mean;
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stat.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
              std::sqrt(static_cast<double>(xs.size()));
  }
}

}  // namespace

bool operator==(const MeanSe& a, const MeanSe& b) {
  return a.count == b.count && a.mean == b.mean && a.se == b.se;
}

void SweepConfig::validate() const {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one value");
  if (n_trials == 0) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one trial");
  if (methods.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one method");
  for (std::size_t v = 0; v < values.size(); ++v) {
    const auto s = setting_for(*this, v);
    s.spec.validate();
    s.score.validate();
  }
  if (const auto* synth = std::get_if<SynthConfig>(&source)) {
    synth->validate();
    if (n_cal == 0 || n_test == 0) throw Error(ErrorCode::kEmptySplit, "n_cal and n_test must be > 0");
    loss.validate(synth->n_classes);
  }
}

TrialMetrics summarize(std::span<const kernels::PointOutcome> outcomes) {
  TrialMetrics m;
  m.n_test = outcomes.size();
  double loss_sum = 0.0;
  std::size_t size_sel = 0;
  std::size_t size_rej = 0;
  for (const auto& o : outcomes) {
    if (o.selected) {
      ++m.n_selected;
      loss_sum += o.loss;
      size_sel += o.set_size;
    } else {
      size_rej += o.set_size;
    }
  }
  const std::size_t n_rejected = m.n_test - m.n_selected;
  m.selective_coverage =
      m.n_test == 0 ? 0.0 : static_cast<double>(m.n_selected) / static_cast<double>(m.n_test);
  if (m.n_selected > 0) {
    m.selective_risk = loss_sum / static_cast<double>(m.n_selected);
    m.mean_set_size_selected = static_cast<double>(size_sel) / static_cast<double>(m.n_selected);
  }
  if (n_rejected > 0) {
    m.mean_set_size_rejected = static_cast<double>(size_rej) / static_cast<double>(n_rejected);
  }
  return m;
}

TrialMetrics evaluate(const ThresholdPair& thresholds, std::span<const ScoredExample> test,
                      const LossKind& loss) {
  if (test.empty()) throw Error(ErrorCode::kInvalidArgument, "test set is empty");
  if (thresholds.method == Method::kRand) {
    throw Error(ErrorCode::kInvalidArgument, "RAND thresholds need a coin; use the harness");
  }
  return summarize(kernels::apply_decisions(test, threshold_decisions(thresholds, test), loss));
}

TrialData prepare_trial(const SweepConfig& cfg, const ScoreKind& score, std::size_t trial,
                        const std::vector<LabeledLogits>* file_records) {
  const std::uint64_t seed = cfg.base_seed + trial;
  std::vector<LabeledLogits> cal;
  std::vector<LabeledLogits> test;
  if (const auto* synth = std::get_if<SynthConfig>(&cfg.source)) {
    SynthConfig sc = *synth;
    sc.seed = seed;
    sc.n_samples = cfg.n_cal + cfg.n_test;
    auto records = generate(sc);
    test.assign(records.begin() + static_cast<std::ptrdiff_t>(cfg.n_cal), records.end());
    records.resize(cfg.n_cal);
    cal = std::move(records);
  } else {
    const auto& fs = std::get<FileSource>(cfg.source);
    if (!file_records) throw Error(ErrorCode::kInvalidArgument, "file source without records");
    std::tie(cal, test) = split(*file_records, fs.cal_fraction, fs.test_fraction, seed);
  }

  std::optional<EnergyNormalizer> energy;
  if (score.tag == ScoreTag::kEnergy) {
    std::vector<std::vector<double>> logits;
    logits.reserve(cal.size());
    for (const auto& r : cal) logits.push_back(r.logits);
    energy.emplace(logits, score.temperature);
  }
  const EnergyNormalizer* normalizer = energy ? &*energy : nullptr;
  TrialData data{kernels::score_records(cal, score, normalizer),
                 kernels::score_records(test, score, normalizer)};
  if (cfg.decouple_g) {
    auto rng = stream(seed, kDecoupledScore);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& e : data.cal) e.confidence = u(rng);
    for (auto& e : data.test) e.confidence = u(rng);
  }
  return data;
}

std::vector<TrialRow> run_trial(const SweepConfig& cfg, std::size_t value_index, std::size_t trial,
                                const std::vector<LabeledLogits>* file_records) {
  const TrialSetting setting = setting_for(cfg, value_index);
  const TrialData data = prepare_trial(cfg, setting.score, trial, file_records);
  std::vector<TrialRow> rows;
  rows.reserve(cfg.methods.size());
  for (Method m : cfg.methods) {
    rows.push_back(run_method(m, cfg, setting, data, cfg.values[value_index], trial,
                              cfg.base_seed + trial));
  }
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& rows) {
  std::vector<std::pair<std::string, Method>> keys;
  std::map<std::pair<std::string, Method>, std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.sweep_value, r.method);
    auto& bucket = groups[key];
    if (bucket.empty()) keys.push_back(key);
    bucket.push_back(&r);
  }
  std::vector<AggregateRow> out;
  out.reserve(keys.size());
  for (const auto& key : keys) {
    const auto& bucket = groups[key];
    AggregateRow agg;
    agg.sweep_value = key.first;
    agg.method = key.second;
    agg.n_trials = bucket.size();
    std::vector<double> cov, risk, sel, rej, l1, l2, nsel;
    for (const TrialRow* r : bucket) {
      if (!r->metrics.feasible) continue;
      ++agg.n_feasible;
      cov.push_back(r->metrics.selective_coverage);
      nsel.push_back(static_cast<double>(r->metrics.n_selected));
      if (r->metrics.selective_risk) risk.push_back(*r->metrics.selective_risk);
      if (r->metrics.mean_set_size_selected) sel.push_back(*r->metrics.mean_set_size_selected);
      if (r->metrics.mean_set_size_rejected) rej.push_back(*r->metrics.mean_set_size_rejected);
      if (r->lambda1) l1.push_back(*r->lambda1);
      if (r->lambda2) l2.push_back(*r->lambda2);
    }
    accumulate(agg.selective_coverage, cov);
    accumulate(agg.selective_risk, risk);
    accumulate(agg.set_size_selected, sel);
    accumulate(agg.set_size_rejected, rej);
    accumulate(agg.lambda1, l1);
    accumulate(agg.lambda2, l2);
    accumulate(agg.n_selected, nsel);
    out.push_back(std::move(agg));
  }
  return out;
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::optional<std::vector<LabeledLogits>> records;
  if (const auto* fs = std::get_if<FileSource>(&cfg.source)) records = load_logits(fs->path);
  const std::vector<LabeledLogits>* file_records = records ? &*records : nullptr;
  if (records) {
    if (records->empty()) throw Error(ErrorCode::kEmptySplit, "logits file has no records");
    cfg.loss.validate(records->front().logits.size());
  }

  const std::size_t n_tasks = cfg.values.size() * cfg.n_trials;
  std::vector<std::vector<TrialRow>> slots(n_tasks);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long long task = 0; task < static_cast<long long>(n_tasks); ++task) {
    const auto t = static_cast<std::size_t>(task);
    try {
      slots[t] = run_trial(cfg, t / cfg.n_trials, t % cfg.n_trials, file_records);
    } catch (...) {
#pragma omp critical(scrc_sweep_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  SweepResult result;
  result.variable = cfg.variable;
  result.rows.reserve(n_tasks * cfg.methods.size());
  for (auto& slot : slots) {
    for (auto& row : slot) result.rows.push_back(std::move(row));
  }
  result.aggregates = aggregate(result.rows);
  return result;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

nlohmann::json js(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

constexpr std::string_view kTrialHeader =
    "method,sweep_variable,sweep_value,trial,n_selected,selective_coverage,selective_risk,"
    "set_size_selected,set_size_rejected,lambda1,lambda2,feasible";

constexpr std::string_view kAggregateHeader =
    "method,sweep_variable,sweep_value,n_trials,n_feasible,"
    "selective_coverage_mean,selective_coverage_se,selective_risk_mean,selective_risk_se,"
    "set_size_selected_mean,set_size_selected_se,set_size_rejected_mean,set_size_rejected_se,"
    "lambda1_mean,lambda1_se,lambda2_mean,lambda2_se,n_selected_mean,n_selected_se";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s == "NA") return std::nullopt;
  return parse_number(s);
}

nlohmann::json stat_json(const MeanSe& s) {
  return {{"mean", js(s.mean)}, {"se", js(s.se)}, {"count", s.count}};
}

}  // namespace

void write_trials_csv(std::ostream& out, const SweepResult& result) {
  std::string buf(kTrialHeader);
  buf += '\n';
  const std::string variable(to_string(result.variable));
  for (const auto& r : result.rows) {
    const auto& m = r.metrics;
    buf += std::string(to_string(r.method)) + ',' + variable + ',' + csv_field(r.sweep_value) +
           ',' + std::to_string(r.trial) + ',';
    if (m.feasible) {
      buf += std::to_string(m.n_selected) + ',' + fmt(m.selective_coverage) + ',' +
             fmt(m.selective_risk) + ',' + fmt(m.mean_set_size_selected) + ',' +
             fmt(m.mean_set_size_rejected) + ',';
    } else {
      buf += "NA,NA,NA,NA,NA,";
    }
    buf += fmt(r.lambda1) + ',' + fmt(r.lambda2) + ',' + (m.feasible ? "true" : "false") + '\n';
  }
  out << buf;
}

void write_aggregates_csv(std::ostream& out, const SweepResult& result) {
  std::string buf(kAggregateHeader);
  buf += '\n';
  const std::string variable(to_string(result.variable));
  for (const auto& a : result.aggregates) {
    buf += std::string(to_string(a.method)) + ',' + variable + ',' + csv_field(a.sweep_value) +
           ',' + std::to_string(a.n_trials) + ',' + std::to_string(a.n_feasible);
    for (const MeanSe* s : {&a.selective_coverage, &a.selective_risk, &a.set_size_selected,
                            &a.set_size_rejected, &a.lambda1, &a.lambda2, &a.n_selected}) {
      buf += ',' + fmt(s->mean) + ',' + fmt(s->se);
    }
    buf += '\n';
  }
  out << buf;
}

void write_trials_json(std::ostream& out, const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    const auto& m = r.metrics;
    nlohmann::json row;
    row["method"] = std::string(to_string(r.method));
    row["sweep_variable"] = std::string(to_string(result.variable));
    row["sweep_value"] = r.sweep_value;
    row["trial"] = r.trial;
    row["n_selected"] = m.feasible ? nlohmann::json(m.n_selected) : nlohmann::json(nullptr);
    row["selective_coverage"] = m.feasible ? nlohmann::json(m.selective_coverage) : nlohmann::json(nullptr);
    row["selective_risk"] = m.feasible ? js(m.selective_risk) : nullptr;
    row["set_size_selected"] = m.feasible ? js(m.mean_set_size_selected) : nullptr;
    row["set_size_rejected"] = m.feasible ? js(m.mean_set_size_rejected) : nullptr;
    row["lambda1"] = js(r.lambda1);
    row["lambda2"] = js(r.lambda2);
    row["feasible"] = m.feasible;
    rows.push_back(std::move(row));
  }
  out << nlohmann::json{{"sweep_variable", std::string(to_string(result.variable))},
                        {"rows", rows}}
             .dump(2)
      << '\n';
}

void write_aggregates_json(std::ostream& out, const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& a : result.aggregates) {
    rows.push_back({{"method", std::string(to_string(a.method))},
                    {"sweep_variable", std::string(to_string(result.variable))},
                    {"sweep_value", a.sweep_value},
                    {"n_trials", a.n_trials},
                    {"n_feasible", a.n_feasible},
                    {"selective_coverage", stat_json(a.selective_coverage)},
                    {"selective_risk", stat_json(a.selective_risk)},
                    {"set_size_selected", stat_json(a.set_size_selected)},
                    {"set_size_rejected", stat_json(a.set_size_rejected)},
                    {"lambda1", stat_json(a.lambda1)},
                    {"lambda2", stat_json(a.lambda2)},
                    {"n_selected", stat_json(a.n_selected)}});
  }
  out << nlohmann::json{{"sweep_variable", std::string(to_string(result.variable))},
                        {"aggregates", rows}}
             .dump(2)
      << '\n';
}

std::filesystem::path aggregate_path(const std::filesystem::path& path) {
  auto out = path;
  out.replace_filename(path.stem().string() + "_agg" + path.extension().string());
  return out;
}

void emit(const SweepResult& result, OutputFormat format, const std::filesystem::path& path) {
  const auto write = [&](const std::filesystem::path& p, auto&& writer) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
    writer(out, result);
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + p.string());
  };
  if (format == OutputFormat::kCsv) {
    write(path, write_trials_csv);
    write(aggregate_path(path), write_aggregates_csv);
  } else {
    write(path, write_trials_json);
    write(aggregate_path(path), write_aggregates_json);
  }
}

SweepResult read_trials_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTrialHeader) {
    throw Error(ErrorCode::kParseError, "line 1: unexpected trial CSV header");
  }
  SweepResult result;
  std::size_t line_no = 1;
  bool have_variable = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 12) {
      throw Error(ErrorCode::kInconsistentWidth, "line " + std::to_string(line_no) +
                                                     ": expected 12 fields");
    }
    try {
      const auto variable = parse_sweep_variable(f[1]);
      if (have_variable && variable != result.variable) {
        throw Error(ErrorCode::kParseError, "mixed sweep variables");
      }
      result.variable = variable;
      have_variable = true;
      TrialRow r;
      r.method = parse_method(f[0]);
      r.sweep_value = f[2];
      r.trial = static_cast<std::size_t>(std::stoull(f[3]));
      r.metrics.feasible = f[11] == "true";
      if (r.metrics.feasible) {
        r.metrics.n_selected = static_cast<std::size_t>(std::stoull(f[4]));
        r.metrics.selective_coverage = parse_number(f[5]);
        r.metrics.selective_risk = parse_optional(f[6]);
        r.metrics.mean_set_size_selected = parse_optional(f[7]);
        r.metrics.mean_set_size_rejected = parse_optional(f[8]);
      }
      r.lambda1 = parse_optional(f[9]);
      r.lambda2 = parse_optional(f[10]);
      result.rows.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  result.aggregates = aggregate(result.rows);
  return result;
}

}  // namespace scrc
