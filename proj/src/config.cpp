#include "lambert/config.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "lambert/io.hpp"

namespace lambert::cli {

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      // model
      {"n", "128"},
      {"layers", "4"},
      {"heads", "4"},
      {"ffn_dim", "0"},  // 0 = 4n
      {"max_len", "128"},
      {"layout", "none"},
      {"positional_mode", "trainable"},
      {"dropout_variant", "element"},
      {"suppress", "none"},
      {"drop_positional_term", "false"},
      // tokenizer
      {"vocab_size", "2048"},
      // training
      {"steps", "5000"},
      {"lr", "3e-4"},
      {"batch_size", "16"},
      {"seed", "1"},
      // fine-tuning
      {"ft_epochs", "12"},
      {"ft_patience", "3"},
      {"ft_lr", "3e-4"},
      {"ft_batch_size", "16"},
      {"dev_frac", "0.1"},
      // task
      {"task_keys", "income:amount,spending:amount,date:date"},
      // corpus generation
      {"doc_type", "kv_table"},
      {"count", "100"},
      {"page_w", "612"},
      {"page_h", "792"},
      {"min_rows", "11"},
      {"max_rows", "14"},
      {"noise", "0.1"},
      {"reading_order", "row_major"},
      // autoencoder layout
      {"ae_epochs", "3"},
      {"ae_lr", "1e-3"},
      {"ae_sample_docs", "50"},
      {"neighborhood_n", "22"},
      // graph layout
      {"knn_k", "5"},
      {"knn_p", "0.5"},
  };
  return kDefaults;
}

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void RunConfig::merge_file(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (strip(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw std::runtime_error("unknown config key: " + key);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("unknown config key: " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return std::stoi(get(key)); }
int64_t RunConfig::get_i64(const std::string& key) const { return std::stoll(get(key)); }
double RunConfig::get_double(const std::string& key) const { return std::stod(get(key)); }
uint64_t RunConfig::get_u64(const std::string& key) const { return std::stoull(get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config key " + key + " is not a boolean: " + v);
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

void RunConfig::write_echo(const std::string& dir) const {
  atomic_write_file(dir + "/config.echo", echo());
}

}  // namespace lambert::cli
