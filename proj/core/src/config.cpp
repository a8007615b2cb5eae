#include "csyn/config.hpp"

#include <fstream>
#include <sstream>

namespace csyn {

Config::Config() {
  // simulator harness
  reg("sim.c_dev", "1e-05", "device capacitance (F)");
  reg("sim.l_dev", "0.0001", "device inductance (H)");
  reg("sim.r_in", "0.1", "source series resistance (ohm)");
  reg("sim.r_load", "50", "load resistance (ohm)");
  reg("sim.c_out", "1e-05", "output capacitance (F)");
  reg("sim.v_in", "100", "source voltage (V)");
  reg("sim.f_sw", "1e6", "switching frequency (Hz)");
  reg("sim.r_on", "0.05", "switch on-resistance (ohm)");
  reg("sim.r_off", "1e6", "switch off-resistance (ohm)");
  reg("sim.g_min", "1e-09", "leak conductance to ground on every node (S)");
  reg("sim.steps_per_period", "100", "backward-Euler steps per switching period");
  reg("sim.max_periods", "4000", "hard cap on simulated periods");
  reg("sim.min_periods", "50", "periods before steady-state detection may stop");
  reg("sim.ss_tol", "0.0001", "relative period-average tolerance for steady state");
  // dataset generation
  reg("data.alpha", "1.5", "new-net weight of the random partition sampler");
  reg("data.split_train", "0.8", "train fraction");
  reg("data.split_val", "0.1", "validation fraction");
  reg("data.split_test", "0.1", "test fraction");
  reg("data.split_seed", "9", "seed of the deterministic split hash");
  // encoding
  reg("encoding", "nl", "netlist text form: nl (incident sentences) or array");
  // models
  reg("model.d_model", "64", "generator embedding width");
  reg("model.n_layers", "2", "generator transformer blocks");
  reg("model.n_heads", "4", "generator attention heads");
  reg("clf.d_model", "64", "classifier embedding width");
  reg("clf.hidden", "64", "classifier MLP hidden width");
  reg("clf.n_layers", "1", "classifier encoder blocks");
  reg("clf.n_heads", "4", "classifier attention heads");
  // training
  reg("train.lr", "0.0003", "learning rate (paper-scale preset: 0.95e-5)");
  reg("train.beta1", "0.9", "AdamW beta1");
  reg("train.beta2", "0.95", "AdamW beta2");
  reg("train.eps", "1e-08", "AdamW epsilon");
  reg("train.weight_decay", "0.01", "decoupled weight decay");
  reg("train.batch_size", "32", "examples per optimizer step");
  reg("train.epochs", "5", "training epochs");
  reg("train.seed", "42", "training seed");
  reg("train.grad_clip", "1.0", "global gradient-norm clip (0 disables)");
  reg("train.balance_classes", "true", "classifier batches draw half per label");
  // refinement
  reg("refine.steps", "300", "refinement optimizer steps");
  reg("refine.lr", "0.0001", "refinement learning rate");
  reg("refine.nll_batch", "8", "ground-truth sequences per step");
  reg("refine.rollout_batch", "8", "sampled rollouts per step");
  reg("refine.tau_mode", "fixed", "gumbel temperature schedule: fixed or exp");
  reg("refine.tau0", "1.0", "initial gumbel temperature");
  reg("refine.tau_min", "0.3", "final temperature of the exp schedule");
  // decoding
  reg("decode.temperature", "1.0", "sampling temperature");
  reg("decode.top_k", "40", "top-k filter");
  reg("decode.top_p", "0.95", "nucleus mass");
  reg("decode.max_len", "96", "maximum total sequence length");
  // evaluation
  reg("eval.n_unique", "200", "unique topologies per report (paper preset: 1000)");
  reg("eval.max_attempts_factor", "50", "attempt budget = factor * n_unique");
  reg("eval.threshold", "0.6", "classifier validity threshold");
  // misc
  reg("threads", "0", "worker threads (0 = hardware concurrency)");
  reg("metrics.path", "metrics.log", "training metrics log (appended)");
}

void Config::reg(const std::string& key, const std::string& def, const std::string& help) {
  entries_[key] = Entry{def, def, help};
}

const Config::Entry& Config::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.value = value;
}

void Config::load_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_number) +
                        ": expected key=value, got '" + line + "'");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (entries_.find(key) == entries_.end()) {
      throw ConfigError(source + ":" + std::to_string(line_number) + ": unknown config key '" +
                        key + "'");
    }
    entries_[key].value = value;
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path);
}

const std::string& Config::get_string(const std::string& key) const { return entry(key).value; }

double Config::get_double(const std::string& key) const {
  const Entry& e = entry(key);
  try {
    size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + e.value + "'");
  }
}

int Config::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config key '" + key + "' is not an integer");
  }
  return i;
}

uint64_t Config::get_u64(const std::string& key) const {
  const Entry& e = entry(key);
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: '" + e.value + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::string Config::documentation() const {
  std::string out;
  for (const auto& [key, e] : entries_) {
    out += key + "=" + e.default_value + "  # " + e.help + "\n";
  }
  return out;
}

}  // namespace csyn
