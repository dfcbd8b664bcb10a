#include "sgem/config.hpp"

#include "sgem/core.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace sgem {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error("config: '" + key + "' expects a real number, got '" + value + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error("config: '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("config: '" + key + "' expects true/false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

AdaptationConfig preset_ctc() { return AdaptationConfig{}; }

AdaptationConfig preset_conformer() {
  AdaptationConfig c;
  c.eta_i = 4e-5;
  c.eta_f = 2e-5;
  c.beam_width = 5;
  c.lambda_lm = 0.3;
  c.alpha = 1.25;
  c.lambda_ns = 2.0;
  c.trainable_groups = {"encoder"};
  return c;
}

AdaptationConfig preset_transducer() {
  AdaptationConfig c;
  c.eta_i = 4e-6;
  c.eta_f = 2e-6;
  c.beam_width = 3;
  c.lambda_lm = 0.0;
  c.alpha = 1.25;
  c.lambda_ns = 0.5;
  c.trainable_groups = {"encoder"};
  return c;
}

const AdaptationConfig& validate_config(const AdaptationConfig& c, bool allow_idle) {
  auto fail = [](const std::string& msg) { throw Error("invalid config: " + msg); };
  if (c.N < 0) fail("N must be non-negative");
  if (!(c.T > 0.0)) fail("T must be positive");
  if (!(c.tau_scale > 0.0)) fail("tau_scale must be positive");
  if (!(c.alpha > 0.0)) fail("alpha must be positive");
  if (c.alpha == 1.0) fail("alpha must differ from 1");
  if (!(c.lambda_ns >= 0.0)) fail("lambda_ns must be non-negative");
  if (!(c.lambda_lm >= 0.0)) fail("lambda_lm must be non-negative");
  if (c.beam_width < 1) fail("beam_width must be at least 1");
  if (!(c.eta_i > 0.0)) fail("eta_i must be positive");
  if (!(c.eta_f > 0.0)) fail("eta_f must be positive");
  if (c.eta_f > c.eta_i) fail("eta_f must not exceed eta_i");
  if (!(c.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (c.trainable_groups.empty()) fail("trainable_groups must not be empty");
  if (!allow_idle && c.N > 0 && !c.use_gem && !c.use_ns) {
    fail("at least one of use_gem/use_ns must be enabled when N > 0");
  }
  return c;
}

void set_config_field(AdaptationConfig& c, const std::string& key, const std::string& value) {
  if (key == "N") {
    c.N = parse_int<int>(key, value);
  } else if (key == "T") {
    c.T = parse_double(key, value);
  } else if (key == "tau_scale") {
    c.tau_scale = parse_double(key, value);
  } else if (key == "alpha") {
    c.alpha = parse_double(key, value);
  } else if (key == "lambda_ns") {
    c.lambda_ns = parse_double(key, value);
  } else if (key == "lambda_lm") {
    c.lambda_lm = parse_double(key, value);
  } else if (key == "beam_width" || key == "B") {
    c.beam_width = parse_int<int>(key, value);
  } else if (key == "eta_i") {
    c.eta_i = parse_double(key, value);
  } else if (key == "eta_f") {
    c.eta_f = parse_double(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double(key, value);
  } else if (key == "trainable_groups") {
    c.trainable_groups.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) c.trainable_groups.push_back(item);
    }
  } else if (key == "use_beam_search") {
    c.use_beam_search = parse_bool(key, value);
  } else if (key == "use_gem") {
    c.use_gem = parse_bool(key, value);
  } else if (key == "use_ns") {
    c.use_ns = parse_bool(key, value);
  } else if (key == "blank_mask_gem") {
    c.blank_mask_gem = parse_bool(key, value);
  } else if (key == "blank_mask_ns") {
    c.blank_mask_ns = parse_bool(key, value);
  } else if (key == "reacquire_every_step") {
    c.reacquire_every_step = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = parse_int<std::uint64_t>(key, value);
  } else {
    throw Error("config: unknown key '" + key + "'");
  }
}

AdaptationConfig parse_config(const std::string& text, AdaptationConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_field(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

AdaptationConfig load_config(const std::filesystem::path& path, AdaptationConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const AdaptationConfig& c) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "N = " << c.N << '\n'
      << "T = " << format_double(c.T) << '\n'
      << "tau_scale = " << format_double(c.tau_scale) << '\n'
      << "alpha = " << format_double(c.alpha) << '\n'
      << "lambda_ns = " << format_double(c.lambda_ns) << '\n'
      << "lambda_lm = " << format_double(c.lambda_lm) << '\n'
      << "beam_width = " << c.beam_width << '\n'
      << "eta_i = " << format_double(c.eta_i) << '\n'
      << "eta_f = " << format_double(c.eta_f) << '\n'
      << "weight_decay = " << format_double(c.weight_decay) << '\n'
      << "trainable_groups = ";
  for (std::size_t i = 0; i < c.trainable_groups.size(); ++i) {
    out << (i ? "," : "") << c.trainable_groups[i];
  }
  out << '\n'
      << "use_beam_search = " << b(c.use_beam_search) << '\n'
      << "use_gem = " << b(c.use_gem) << '\n'
      << "use_ns = " << b(c.use_ns) << '\n'
      << "blank_mask_gem = " << b(c.blank_mask_gem) << '\n'
      << "blank_mask_ns = " << b(c.blank_mask_ns) << '\n'
      << "reacquire_every_step = " << b(c.reacquire_every_step) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

}  // namespace sgem
