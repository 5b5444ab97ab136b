#include "clvqa/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw config_error("config: key '" + key + "' has non-boolean value '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' has non-numeric value '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' has non-integer value '" + value + "'");
  }
}

}  // namespace

const char* run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::continual: return "continual";
    case RunMode::joint: return "joint";
    case RunMode::vanilla: return "vanilla";
  }
  throw contract_error("run_mode_name: invalid mode");
}

RunMode run_mode_from_name(const std::string& name) {
  if (name == "continual") return RunMode::continual;
  if (name == "joint") return RunMode::joint;
  if (name == "vanilla") return RunMode::vanilla;
  throw config_error("config: unknown run.mode '" + name + "'");
}

void RunConfig::validate() const {
  if (data_dir.empty()) throw config_error("config: data.dir is required");
  if (epochs < 1) throw config_error("config: train.epochs must be at least 1");
  if (batch_size < 1) throw config_error("config: train.batch_size must be at least 1");
  if (!(lr > 0.0)) throw config_error("config: train.lr must be positive");
  if (weight_decay < 0.0) throw config_error("config: train.weight_decay must be non-negative");
  if (replay_period < 1) throw config_error("config: train.replay_period must be at least 1");
  if (memory_capacity < 0) throw config_error("config: memory.capacity must be non-negative");
  if (memory_k < 1) throw config_error("config: memory.k must be at least 1");
  if (d_proj < 1) throw config_error("config: pro.d_proj must be at least 1");
  if (model.d_e < 1 || model.d_h < 1) throw config_error("config: model dimensions must be positive");
  if (!(lambda_schedule.lambda0 > 0.0)) throw config_error("config: pro.lambda0 must be positive");
  distill.validate();
  if (kd && !er) throw config_error("config: ablation.kd requires ablation.er");
  if (mode != RunMode::continual && (er || kd || pro)) {
    throw config_error("config: ablation flags apply only to continual mode");
  }
}

std::string RunConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["run.mode"] = run_mode_name(mode);
  kv["run.seed"] = std::to_string(seed);
  kv["data.dir"] = data_dir;
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.lr"] = fmt_double(lr);
  kv["train.weight_decay"] = fmt_double(weight_decay);
  kv["train.replay_period"] = std::to_string(replay_period);
  kv["ablation.er"] = er ? "true" : "false";
  kv["ablation.kd"] = kd ? "true" : "false";
  kv["ablation.pro"] = pro ? "true" : "false";
  kv["memory.capacity"] = std::to_string(memory_capacity);
  kv["memory.k"] = std::to_string(memory_k);
  kv["distill.temperature"] = fmt_double(distill.temperature);
  kv["distill.tau"] = fmt_double(distill.tau);
  kv["distill.alpha_max"] = fmt_double(distill.alpha_max);
  kv["distill.replay_weight"] = fmt_double(distill.replay_weight);
  kv["pro.lambda0"] = fmt_double(lambda_schedule.lambda0);
  kv["pro.d_proj"] = std::to_string(d_proj);
  kv["model.d_e"] = std::to_string(model.d_e);
  kv["model.d_h"] = std::to_string(model.d_h);
  std::ostringstream os;
  for (const auto& [key, value] : kv) os << key << " = " << value << "\n";
  return os.str();
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  bool er_set = false, kd_set = false, pro_set = false;
  std::map<std::string, bool> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw config_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw config_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    if (seen[key]) throw config_error("config: duplicate key '" + key + "'");
    seen[key] = true;

    if (key == "run.mode") cfg.mode = run_mode_from_name(value);
    else if (key == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "data.dir") cfg.data_dir = value;
    else if (key == "train.epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "train.batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "train.lr") cfg.lr = parse_double(key, value);
    else if (key == "train.weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "train.replay_period") cfg.replay_period = static_cast<int>(parse_int(key, value));
    else if (key == "ablation.er") { cfg.er = parse_bool(key, value); er_set = true; }
    else if (key == "ablation.kd") { cfg.kd = parse_bool(key, value); kd_set = true; }
    else if (key == "ablation.pro") { cfg.pro = parse_bool(key, value); pro_set = true; }
    else if (key == "memory.capacity") cfg.memory_capacity = static_cast<int>(parse_int(key, value));
    else if (key == "memory.k") cfg.memory_k = static_cast<int>(parse_int(key, value));
    else if (key == "distill.temperature") cfg.distill.temperature = parse_double(key, value);
    else if (key == "distill.tau") cfg.distill.tau = parse_double(key, value);
    else if (key == "distill.alpha_max") cfg.distill.alpha_max = parse_double(key, value);
    else if (key == "distill.replay_weight") cfg.distill.replay_weight = parse_double(key, value);
    else if (key == "pro.lambda0") cfg.lambda_schedule.lambda0 = parse_double(key, value);
    else if (key == "pro.d_proj") cfg.d_proj = static_cast<int>(parse_int(key, value));
    else if (key == "model.d_e") cfg.model.d_e = static_cast<int>(parse_int(key, value));
    else if (key == "model.d_h") cfg.model.d_h = static_cast<int>(parse_int(key, value));
    else throw config_error("config: unknown key '" + key + "'");
  }

  // non-continual modes run without the continual mechanisms unless the user
  // explicitly asked for them (which validate() rejects)
  if (cfg.mode != RunMode::continual) {
    if (!er_set) cfg.er = false;
    if (!kd_set) cfg.kd = false;
    if (!pro_set) cfg.pro = false;
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

}  // namespace clvqa
