#include "affalign/train/config.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "affalign/common/error.hpp"
#include "affalign/io/binary.hpp"

namespace affalign::train {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw UsageError("config line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view v, std::size_t line, std::string_view key) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    bad_line(line, "invalid value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view v, std::size_t line, std::string_view key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_line(line, "invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("train config: ") + what);
  };
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(warmup_steps < total_steps, "warmup_steps must be < total_steps");
  require(peak_lr > final_lr && final_lr > 0.0, "need peak_lr > final_lr > 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0,1)");
  require(adam_eps > 0.0, "adam_eps must be > 0");
}

TrainConfig parse_config(std::string_view text, TrainConfig cfg) {
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad_line(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) bad_line(line_no, "missing value for " + std::string(key));
    if (!seen.insert(std::string(key)).second) bad_line(line_no, "repeated key " + std::string(key));
    if (key == "lambda") cfg.lambda = parse_number<double>(value, line_no, key);
    else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(value, line_no, key);
    else if (key == "total_steps") cfg.total_steps = parse_number<std::size_t>(value, line_no, key);
    else if (key == "warmup_steps") cfg.warmup_steps = parse_number<std::size_t>(value, line_no, key);
    else if (key == "peak_lr") cfg.peak_lr = parse_number<double>(value, line_no, key);
    else if (key == "final_lr") cfg.final_lr = parse_number<double>(value, line_no, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_number<double>(value, line_no, key);
    else if (key == "beta1") cfg.beta1 = parse_number<double>(value, line_no, key);
    else if (key == "beta2") cfg.beta2 = parse_number<double>(value, line_no, key);
    else if (key == "adam_eps") cfg.adam_eps = parse_number<double>(value, line_no, key);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, line_no, key);
    else if (key == "align_enabled") cfg.align_enabled = parse_bool(value, line_no, key);
    else bad_line(line_no, "unknown key '" + std::string(key) + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) { return parse_config(io::read_file(path)); }

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "lambda = " << fmt(c.lambda) << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "total_steps = " << c.total_steps << "\n"
     << "warmup_steps = " << c.warmup_steps << "\n"
     << "peak_lr = " << fmt(c.peak_lr) << "\n"
     << "final_lr = " << fmt(c.final_lr) << "\n"
     << "weight_decay = " << fmt(c.weight_decay) << "\n"
     << "beta1 = " << fmt(c.beta1) << "\n"
     << "beta2 = " << fmt(c.beta2) << "\n"
     << "adam_eps = " << fmt(c.adam_eps) << "\n"
     << "seed = " << c.seed << "\n"
     << "align_enabled = " << (c.align_enabled ? "true" : "false") << "\n";
  return os.str();
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw UsageError("lr_at: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.final_lr +
         (cfg.peak_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

}  // namespace affalign::train
