#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lambert::cli {

// Flat key=value run configuration. Files use one `key = value` per line with
// '#' comments; command-line flags override file values. Unknown keys are
// rejected so typos fail loudly. The effective configuration is echoed into
// every run directory.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void merge_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  int64_t get_i64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;

  std::string echo() const;  // sorted key=value lines
  void write_echo(const std::string& dir) const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lambert::cli
