#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace csyn {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Plain-text `key=value` configuration with `#` comments and dotted section
// keys (sim.steps_per_period=100). Every key has a registered default;
// unknown keys are rejected naming the offending line.
class Config {
 public:
  Config();

  void load_file(const std::string& path);
  // Parses `key=value` lines from text; `source` labels error messages.
  void load_text(const std::string& text, const std::string& source = "<config>");
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // One `key=default  # help` line per registered key.
  std::string documentation() const;

 private:
  struct Entry {
    std::string value;
    std::string default_value;
    std::string help;
  };
  void reg(const std::string& key, const std::string& def, const std::string& help);
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

}  // namespace csyn
