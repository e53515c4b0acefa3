// scrc: command-line front end for selective conformal risk control.
//
//   scrc generate  --out logits.csv [--k 10 --n 4000 --seed 1]
//   scrc calibrate --cal cal.csv --method scrc-i [--xi 0.7 --alpha 0.1]
//   scrc evaluate  --cal cal.csv --test test.csv --method scrc-t
//   scrc sweep     --vary xi --values 0.6,0.7,0.8,0.9 --out results.csv
//
// Exit code 0 on success, 2 when nothing is feasible, 1 on error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scrc/data.hpp"
#include "scrc/error.hpp"
#include "scrc/harness.hpp"
#include "scrc/kernels.hpp"
#include "scrc/pipeline.hpp"
#include "scrc/scores.hpp"
#include "scrc/sets.hpp"
#include "scrc/stage1.hpp"

namespace {

constexpr int kExitInfeasible = 2;

struct CommonOptions {
  std::string method = "scrc-t";
  std::string objective = "set-size";
  std::string score = "margin";
  std::string loss = "miscoverage";
  std::string ordinal_weights;
  std::string format = "csv";
  std::string out;
  double xi = 0.7;
  double alpha = 0.1;
  double delta = 0.05;
  double eta = 0.01;
  double temperature = 1.0;
  bool no_sweep = false;
  bool decouple_g = false;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct SynthOptions {
  std::size_t k = 10;
  std::size_t n = 4000;
  double signal = 2.5;
  double noise = 1.0;
  double hard_mix = 0.3;
};

void add_risk_options(CLI::App* app, CommonOptions& o) {
  app->add_option("--xi", o.xi, "Target selective coverage")->capture_default_str();
  app->add_option("--alpha", o.alpha, "Target selective risk")->capture_default_str();
  app->add_option("--delta", o.delta, "DKW confidence for SCRC-I")->capture_default_str();
  app->add_option("--eta", o.eta, "lambda1 grid step")->capture_default_str();
  app->add_option("--objective", o.objective, "Sweep objective")
      ->check(CLI::IsMember({"lambda2", "set-size"}))
      ->capture_default_str();
  app->add_flag("--no-sweep", o.no_sweep, "Use the stage-one threshold without a lambda1 sweep");
  app->add_option("--score", o.score, "Selection score")
      ->check(CLI::IsMember({"msp", "margin", "entropy", "energy"}))
      ->capture_default_str();
  app->add_option("--temperature", o.temperature, "Softmax temperature")->capture_default_str();
  app->add_option("--loss", o.loss, "Second-stage loss")
      ->check(CLI::IsMember({"miscoverage", "ordinal"}))
      ->capture_default_str();
  app->add_option("--ordinal-weights", o.ordinal_weights,
                  "Comma-separated w(0..K-1) for the ordinal loss (default linear)");
  app->add_flag("--decouple-g", o.decouple_g, "Replace g by an independent uniform score");
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app->add_option("--threads", o.threads, "OpenMP threads (0 = runtime default)");
}

void add_synth_options(CLI::App* app, SynthOptions& s) {
  app->add_option("--k", s.k, "Number of classes")->capture_default_str();
  app->add_option("--signal", s.signal, "True-class logit boost")->capture_default_str();
  app->add_option("--noise", s.noise, "Logit noise sd")->capture_default_str();
  app->add_option("--hard-mix", s.hard_mix, "Fraction of low-signal examples")->capture_default_str();
}

scrc::RiskSpec risk_spec(const CommonOptions& o) {
  scrc::RiskSpec spec{o.xi, o.alpha, o.delta, o.eta};
  spec.validate();
  return spec;
}

scrc::CalibrationOptions calibration_options(const CommonOptions& o) {
  return {scrc::parse_objective(o.objective), !o.no_sweep};
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

scrc::LossKind loss_kind(const CommonOptions& o, std::size_t k) {
  if (scrc::parse_loss(o.loss) == scrc::LossTag::kMiscoverage) return scrc::LossKind::miscoverage();
  return scrc::LossKind::weighted_ordinal(k, o.ordinal_weights.empty()
                                                 ? std::vector<double>{}
                                                 : parse_doubles(o.ordinal_weights));
}

struct ScoredSplits {
  std::vector<scrc::ScoredExample> cal;
  std::vector<scrc::ScoredExample> test;
};

ScoredSplits score_files(const CommonOptions& o, const std::string& cal_path,
                         const std::string& test_path) {
  const auto cal = scrc::load_logits(cal_path);
  const auto test = test_path.empty() ? std::vector<scrc::LabeledLogits>{}
                                      : scrc::load_logits(test_path);
  if (cal.empty()) throw scrc::Error(scrc::ErrorCode::kEmptySplit, cal_path + " has no records");
  const scrc::ScoreKind kind{scrc::parse_score(o.score), o.temperature};
  std::optional<scrc::EnergyNormalizer> energy;
  if (kind.tag == scrc::ScoreTag::kEnergy) {
    std::vector<std::vector<double>> logits;
    for (const auto& r : cal) logits.push_back(r.logits);
    energy.emplace(logits, kind.temperature);
    if (energy->degenerate()) {
      std::cerr << "warning: all calibration energies are equal; energy confidence is 0.5\n";
    }
  }
  const auto* normalizer = energy ? &*energy : nullptr;
  ScoredSplits s{scrc::kernels::score_records(cal, kind, normalizer),
                 scrc::kernels::score_records(test, kind, normalizer)};
  if (o.decouple_g) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& e : s.cal) e.confidence = u(rng);
    for (auto& e : s.test) e.confidence = u(rng);
  }
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw scrc::Error(scrc::ErrorCode::kIo, "cannot write " + path);
  out << text;
}

std::string describe(const scrc::CalibrationOutcome& outcome, const std::string& format) {
  const auto& t = outcome.thresholds;
  if (format == "json") {
    nlohmann::json j{{"method", std::string(scrc::to_string(t.method))},
                     {"lambda1", t.lambda1},
                     {"lambda2", t.lambda2},
                     {"objective", std::string(scrc::to_string(outcome.objective))}};
    j["xi_lcb"] = t.xi_lcb ? nlohmann::json(*t.xi_lcb) : nlohmann::json(nullptr);
    auto trace = nlohmann::json::array();
    for (const auto& g : outcome.grid_trace) {
      trace.push_back({{"lambda1", g.lambda1},
                       {"m", g.m},
                       {"lambda2", g.lambda2 ? nlohmann::json(*g.lambda2) : nlohmann::json(nullptr)},
                       {"mean_set_size", g.mean_set_size},
                       {"feasible", g.feasible}});
    }
    j["grid_trace"] = trace;
    return j.dump(2) + "\n";
  }
  std::string s = "method=" + std::string(scrc::to_string(t.method)) + "\n";
  s += "lambda1=" + fmt(t.lambda1) + "\nlambda2=" + fmt(t.lambda2) + "\n";
  if (t.xi_lcb) s += "xi_lcb=" + fmt(*t.xi_lcb) + "\n";
  return s;
}

scrc::CalibrationOutcome calibrate_fixed(const CommonOptions& o,
                                         const std::vector<scrc::ScoredExample>& cal,
                                         const scrc::RiskSpec& spec, const scrc::LossKind& loss) {
  switch (scrc::parse_method(o.method)) {
    case scrc::Method::kScrcI: return scrc::scrc_i_calibrate(cal, spec, loss, calibration_options(o));
    case scrc::Method::kCrcAll: return scrc::crc_all_calibrate(cal, spec, loss);
    case scrc::Method::kRand: return scrc::rand_calibrate(cal, spec, loss, o.seed);
    case scrc::Method::kScrcT: break;
  }
  throw scrc::Error(scrc::ErrorCode::kInvalidArgument, "scrc-t needs test points");
}

// Per-test-point threshold pairs for any method.
std::vector<std::optional<scrc::ThresholdPair>> calibrate_for_tests(
    const CommonOptions& o, const ScoredSplits& data, const scrc::RiskSpec& spec,
    const scrc::LossKind& loss) {
  if (scrc::parse_method(o.method) == scrc::Method::kScrcT) {
    const scrc::TransductiveCalibrator calibrator(data.cal, spec, loss, calibration_options(o));
    std::vector<double> g;
    for (const auto& e : data.test) g.push_back(e.confidence);
    return calibrator.thresholds(g);
  }
  const auto outcome = calibrate_fixed(o, data.cal, spec, loss);
  return std::vector<std::optional<scrc::ThresholdPair>>(data.test.size(), outcome.thresholds);
}

int run_generate(const CommonOptions& o, const SynthOptions& s) {
  scrc::SynthConfig cfg{s.k, s.n, s.signal, s.noise, s.hard_mix, o.seed};
  scrc::save_logits(o.out, scrc::generate(cfg));
  return 0;
}

int run_calibrate(const CommonOptions& o, const std::string& cal_path, const std::string& test_path,
                  std::optional<double> test_g) {
  const auto spec = risk_spec(o);
  const auto data = score_files(o, cal_path, test_path);
  const auto loss = loss_kind(o, data.cal.front().num_classes());
  const auto method = scrc::parse_method(o.method);
  if (method != scrc::Method::kScrcT) {
    write_text(o.out, describe(calibrate_fixed(o, data.cal, spec, loss), o.format));
    return 0;
  }
  if (test_g) {
    write_text(o.out, describe(scrc::TransductiveCalibrator(data.cal, spec, loss,
                                                            calibration_options(o))
                                   .calibrate(*test_g),
                               o.format));
    return 0;
  }
  if (test_path.empty()) {
    throw scrc::Error(scrc::ErrorCode::kInvalidArgument, "scrc-t needs --test or --test-g");
  }
  const auto pairs = calibrate_for_tests(o, data, spec, loss);
  std::string text = "index,lambda1,lambda2\n";
  bool any = false;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    text += std::to_string(i) + ",";
    if (pairs[i]) {
      any = true;
      text += fmt(pairs[i]->lambda1) + "," + fmt(pairs[i]->lambda2) + "\n";
    } else {
      text += "NA,NA\n";
    }
  }
  write_text(o.out, text);
  return any ? 0 : kExitInfeasible;
}

int run_evaluate(const CommonOptions& o, const std::string& cal_path, const std::string& test_path,
                 const std::string& outputs_path) {
  const auto spec = risk_spec(o);
  const auto data = score_files(o, cal_path, test_path);
  if (data.test.empty()) throw scrc::Error(scrc::ErrorCode::kEmptySplit, "test set is empty");
  const auto loss = loss_kind(o, data.cal.front().num_classes());
  const auto pairs = calibrate_for_tests(o, data, spec, loss);

  std::mt19937_64 coin(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<scrc::kernels::Decision> decisions(data.test.size());
  std::string outputs = "index,label,output\n";
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (!pairs[i]) {
      throw scrc::Error(scrc::ErrorCode::kNoFeasibleGridPoint, "no feasible thresholds");
    }
    const auto out = pairs[i]->method == scrc::Method::kRand
                         ? scrc::apply_random(*pairs[i], data.test[i], coin)
                         : scrc::apply(*pairs[i], data.test[i]);
    decisions[i] = {!out.is_abstain(), pairs[i]->lambda2};
    outputs += std::to_string(i) + "," + std::to_string(*data.test[i].label + 1) + ",\"" +
               out.to_string() + "\"\n";
  }
  const auto m = scrc::summarize(scrc::kernels::apply_decisions(data.test, decisions, loss));
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  std::string text;
  if (o.format == "json") {
    auto js = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    text = nlohmann::json{{"n_test", m.n_test},
                          {"n_selected", m.n_selected},
                          {"selective_coverage", m.selective_coverage},
                          {"selective_risk", js(m.selective_risk)},
                          {"set_size_selected", js(m.mean_set_size_selected)},
                          {"set_size_rejected", js(m.mean_set_size_rejected)}}
               .dump(2) +
           "\n";
  } else {
    text = "n_test=" + std::to_string(m.n_test) + "\nn_selected=" + std::to_string(m.n_selected) +
           "\nselective_coverage=" + fmt(m.selective_coverage) +
           "\nselective_risk=" + opt(m.selective_risk) +
           "\nset_size_selected=" + opt(m.mean_set_size_selected) +
           "\nset_size_rejected=" + opt(m.mean_set_size_rejected) + "\n";
  }
  write_text(o.out, text);
  if (!outputs_path.empty()) write_text(outputs_path, outputs);
  return 0;
}

struct SweepOptions {
  std::string vary = "xi";
  std::string values = "0.6,0.7,0.8,0.9";
  std::string methods = "scrc-t,scrc-i,crc-all,rand";
  std::size_t trials = 100;
  std::size_t n_cal = 2000;
  std::size_t n_test = 2000;
  std::string data;
  double cal_fraction = 0.5;
  double test_fraction = 0.5;
};

int run_sweep_cmd(const CommonOptions& o, const SynthOptions& s, const SweepOptions& w) {
  scrc::SweepConfig cfg;
  cfg.variable = scrc::parse_sweep_variable(w.vary);
  cfg.values = parse_list(w.values);
  cfg.fixed = {o.xi, o.alpha, o.delta, o.eta};
  cfg.score = {scrc::parse_score(o.score), o.temperature};
  cfg.options = calibration_options(o);
  cfg.n_trials = w.trials;
  cfg.methods.clear();
  for (const auto& m : parse_list(w.methods)) cfg.methods.push_back(scrc::parse_method(m));
  cfg.n_cal = w.n_cal;
  cfg.n_test = w.n_test;
  cfg.decouple_g = o.decouple_g;
  cfg.base_seed = o.seed;
  std::size_t k = s.k;
  if (w.data.empty()) {
    cfg.source = scrc::SynthConfig{s.k, w.n_cal + w.n_test, s.signal, s.noise, s.hard_mix, o.seed};
  } else {
    cfg.source = scrc::FileSource{w.data, w.cal_fraction, w.test_fraction};
    std::ifstream in(w.data);
    std::string header;
    std::getline(in, header);
    k = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
  }
  cfg.loss = loss_kind(o, k);
  const auto result = scrc::run_sweep(cfg);
  const auto format = scrc::parse_format(o.format);
  if (o.out.empty()) {
    if (format == scrc::OutputFormat::kCsv) {
      scrc::write_aggregates_csv(std::cout, result);
    } else {
      scrc::write_aggregates_json(std::cout, result);
    }
  } else {
    scrc::emit(result, format, o.out);
  }
  const bool any = std::any_of(result.rows.begin(), result.rows.end(),
                               [](const auto& r) { return r.metrics.feasible; });
  return any ? 0 : kExitInfeasible;
}

// Appends `--key value` for every key=value line of the config file whose
// flag does not already appear on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (std::next(it) == args.end()) throw std::runtime_error("--config needs a path");
  const std::string path = *std::next(it);
  args.erase(it, it + 2);
  std::ifstream in(path);
  if (!in) throw scrc::Error(scrc::ErrorCode::kIo, "cannot open config " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw scrc::Error(scrc::ErrorCode::kParseError,
                        path + ": line " + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == key || a.rfind(key + "=", 0) == 0;
    });
    if (given) continue;
    if (value == "true") {
      args.push_back(key);
    } else if (value != "false") {
      args.push_back(key);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective conformal risk control"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonOptions common;
  SynthOptions synth;
  SweepOptions sweep;
  std::string cal_path, test_path, outputs_path;
  std::optional<double> test_g;

  auto* gen = app.add_subcommand("generate", "Write synthetic logits as CSV");
  add_synth_options(gen, synth);
  gen->add_option("--n", synth.n, "Number of records")->capture_default_str();
  gen->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", common.out, "Output CSV")->required();

  auto* cal = app.add_subcommand("calibrate", "Compute thresholds from a calibration file");
  add_risk_options(cal, common);
  cal->add_option("--method", common.method)->check(CLI::IsMember({"scrc-t", "scrc-i", "crc-all", "rand"}));
  cal->add_option("--cal", cal_path, "Calibration logits CSV")->required()->check(CLI::ExistingFile);
  cal->add_option("--test", test_path, "Test logits CSV (scrc-t: one pair per row)")->check(CLI::ExistingFile);
  cal->add_option("--test-g", test_g, "Single test confidence (scrc-t)");
  cal->add_option("--format", common.format)->check(CLI::IsMember({"csv", "json"}));
  cal->add_option("--out", common.out, "Output path (default stdout)");

  auto* eval = app.add_subcommand("evaluate", "Calibrate, apply to a test file and report metrics");
  add_risk_options(eval, common);
  eval->add_option("--method", common.method)->check(CLI::IsMember({"scrc-t", "scrc-i", "crc-all", "rand"}));
  eval->add_option("--cal", cal_path, "Calibration logits CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", test_path, "Test logits CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--outputs", outputs_path, "Per-example selective outputs CSV");
  eval->add_option("--format", common.format)->check(CLI::IsMember({"csv", "json"}));
  eval->add_option("--out", common.out, "Metrics output path (default stdout)");

  auto* sw = app.add_subcommand("sweep", "Monte-Carlo sweep over xi, alpha, delta or score");
  add_risk_options(sw, common);
  add_synth_options(sw, synth);
  sw->add_option("--vary", sweep.vary)->check(CLI::IsMember({"xi", "alpha", "delta", "score"}))->capture_default_str();
  sw->add_option("--values", sweep.values, "Comma-separated sweep values")->capture_default_str();
  sw->add_option("--methods", sweep.methods, "Comma-separated methods")->capture_default_str();
  sw->add_option("--trials", sweep.trials)->capture_default_str();
  sw->add_option("--n-cal", sweep.n_cal)->capture_default_str();
  sw->add_option("--n-test", sweep.n_test)->capture_default_str();
  sw->add_option("--data", sweep.data, "Logits CSV instead of synthetic data")->check(CLI::ExistingFile);
  sw->add_option("--cal-fraction", sweep.cal_fraction)->capture_default_str();
  sw->add_option("--test-fraction", sweep.test_fraction)->capture_default_str();
  sw->add_option("--format", common.format)->check(CLI::IsMember({"csv", "json"}));
  sw->add_option("--out", common.out, "Trial-level output; aggregates go to <stem>_agg<ext>");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (common.threads > 0) scrc::kernels::set_threads(common.threads);
    if (*gen) return run_generate(common, synth);
    if (*cal) return run_calibrate(common, cal_path, test_path, test_g);
    if (*eval) return run_evaluate(common, cal_path, test_path, outputs_path);
    if (*sw) return run_sweep_cmd(common, synth, sweep);
  } catch (const scrc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool infeasible = e.code() == scrc::ErrorCode::kInfeasible ||
                            e.code() == scrc::ErrorCode::kNoFeasibleGridPoint;
    return infeasible ? kExitInfeasible : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
