#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>

#include "sd2e/dataio.hpp"
#include "sd2e/loop_runner.hpp"

namespace sd2e {

/// `key = value` lines with `#` comments. Every key must be consumed by a
/// typed getter before `check_all_used`, so typos surface as ConfigError.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void check_all_used() const;

 private:
  const std::string* lookup(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

LoopConfig loop_config_from(const KeyValueConfig& kv, LoopConfig base = {});
SynthConfig synth_config_from(const KeyValueConfig& kv, SynthConfig base = {});

}  // namespace sd2e
