#include "scrc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <string_view>

#include "scrc/error.hpp"

namespace scrc {

void SynthConfig::validate() const {
  if (n_classes < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two classes");
  if (!(signal_strength >= 0.0)) throw Error(ErrorCode::kOutOfRange, "signal strength must be >= 0");
  if (!(noise_scale > 0.0)) throw Error(ErrorCode::kOutOfRange, "noise scale must be > 0");
  if (!(hardness_mix >= 0.0 && hardness_mix <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "hardness mix must lie in [0,1]");
  }
}

std::vector<LabeledLogits> generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> label_dist(0, config.n_classes - 1);
  std::bernoulli_distribution hard(config.hardness_mix);
  std::normal_distribution<double> noise(0.0, config.noise_scale);

  std::vector<LabeledLogits> out(config.n_samples);
  for (auto& r : out) {
    r.label = label_dist(rng);
    const double boost = hard(rng) ? 0.2 * config.signal_strength : config.signal_strength;
    r.logits.resize(config.n_classes);
    for (double& v : r.logits) v = noise(rng);
    r.logits[r.label] += boost;
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  while (true) {
    const auto comma = line.find(',');
    fields.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return fields;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no); }

double parse_double(std::string_view text, std::size_t line_no) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw Error(ErrorCode::kParseError,
                at_line(line_no) + ": bad number '" + std::string(text) + "'");
  }
  return v;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

std::vector<LabeledLogits> read_logits(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header.back() != "label") {
    throw Error(ErrorCode::kParseError, at_line(1) + ": header must be logit_1,...,logit_K,label");
  }
  const std::size_t k = header.size() - 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (header[i] != "logit_" + std::to_string(i + 1)) {
      throw Error(ErrorCode::kParseError,
                  at_line(1) + ": expected column logit_" + std::to_string(i + 1));
    }
  }

  std::vector<LabeledLogits> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != k + 1) {
      throw Error(ErrorCode::kInconsistentWidth, at_line(line_no) + ": expected " +
                                                     std::to_string(k + 1) + " fields, got " +
                                                     std::to_string(fields.size()));
    }
    LabeledLogits r;
    r.logits.reserve(k);
    for (std::size_t i = 0; i < k; ++i) r.logits.push_back(parse_double(fields[i], line_no));
    long long label = 0;
    const auto lab = fields[k];
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (ec != std::errc() || ptr != lab.data() + lab.size()) {
      throw Error(ErrorCode::kParseError,
                  at_line(line_no) + ": bad label '" + std::string(lab) + "'");
    }
    if (label < 1 || label > static_cast<long long>(k)) {
      throw Error(ErrorCode::kLabelOutOfRange, at_line(line_no) + ": label " +
                                                   std::to_string(label) + " outside 1.." +
                                                   std::to_string(k));
    }
    r.label = static_cast<ClassIndex>(label - 1);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledLogits> load_logits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return read_logits(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_logits(std::ostream& out, const std::vector<LabeledLogits>& records) {
  const std::size_t k = records.empty() ? 0 : records.front().logits.size();
  std::string buf;
  for (std::size_t i = 0; i < k; ++i) buf += "logit_" + std::to_string(i + 1) + ",";
  buf += "label\n";
  for (const auto& r : records) {
    if (r.logits.size() != k) {
      throw Error(ErrorCode::kInconsistentWidth, "records differ in class count");
    }
    for (double v : r.logits) {
      append_double(buf, v);
      buf += ',';
    }
    buf += std::to_string(r.label + 1);
    buf += '\n';
  }
  out << buf;
}

void save_logits(const std::filesystem::path& path, const std::vector<LabeledLogits>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_logits(out, records);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::pair<std::vector<LabeledLogits>, std::vector<LabeledLogits>> split(
    const std::vector<LabeledLogits>& records, double cal_fraction, double test_fraction,
    std::uint64_t seed) {
  if (!(cal_fraction >= 0.0 && test_fraction >= 0.0) || cal_fraction + test_fraction > 1.0 + 1e-12) {
    throw Error(ErrorCode::kInvalidArgument, "split fractions must be non-negative and sum to <= 1");
  }
  const auto n = records.size();
  const auto n_cal = static_cast<std::size_t>(snapped_floor(cal_fraction * static_cast<double>(n)));
  const auto n_test =
      static_cast<std::size_t>(snapped_floor(test_fraction * static_cast<double>(n)));
  if (n_cal == 0 || n_test == 0) {
    throw Error(ErrorCode::kEmptySplit, "split leaves the calibration or test set empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::pair<std::vector<LabeledLogits>, std::vector<LabeledLogits>> out;
  out.first.reserve(n_cal);
  out.second.reserve(n_test);
  for (std::size_t i = 0; i < n_cal; ++i) out.first.push_back(records[order[i]]);
  for (std::size_t i = n_cal; i < n_cal + n_test; ++i) out.second.push_back(records[order[i]]);
  return out;
}

}  // namespace scrc
