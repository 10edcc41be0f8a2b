#include "dnoc/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>

#include "dnoc/errors.hpp"

namespace dnoc {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config", source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config", source + ":" + std::to_string(lineno) + ": empty key");
    kv.entries_.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open config file " + path);
  return parse(in, path);
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->first == key) return it->second;
  return std::nullopt;
}

void KeyValueFile::set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

std::vector<std::pair<std::string, std::string>> KeyValueFile::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : entries_) {
    if (k.rfind(prefix, 0) != 0) continue;
    const std::string rest = k.substr(prefix.size());
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == rest; });
    if (it != out.end()) it->second = v;
    else out.emplace_back(rest, v);
  }
  return out;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

long KeyValueFile::get_int(const std::string& key, long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long out = std::stol(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config", "key '" + key + "' expects an integer, got '" + *v + "'");
  }
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config", "key '" + key + "' expects a number, got '" + *v + "'");
  }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config", "key '" + key + "' expects a boolean, got '" + *v + "'");
}

Addressing parse_addressing(const std::string& s) {
  if (s == "softmax") return Addressing::softmax;
  if (s == "raw-logit") return Addressing::raw_logit;
  throw ConfigError("config", "addressing must be 'softmax' or 'raw-logit', got '" + s + "'");
}

std::string to_string(Addressing a) { return a == Addressing::softmax ? "softmax" : "raw-logit"; }

void RunConfig::set(const std::string& key, const std::string& value) {
  KeyValueFile kv;
  kv.set(key, value);
  auto i = [&](int& field) { field = static_cast<int>(kv.get_int(key, field)); };
  auto d = [&](double& field) { field = kv.get_double(key, field); };
  auto b = [&](bool& field) { field = kv.get_bool(key, field); };

  if (key == "hidden") i(hidden);
  else if (key == "embed") i(embed);
  else if (key == "addressing") addressing = parse_addressing(value);
  else if (key == "key_projection") b(key_projection);
  else if (key == "cell_from_image") b(cell_from_image);
  else if (key == "n_det") i(n_det);
  else if (key == "max_steps") i(max_steps);
  else if (key == "lr") d(lr);
  else if (key == "weight_decay") d(weight_decay);
  else if (key == "beta1") d(beta1);
  else if (key == "beta2") d(beta2);
  else if (key == "eps") d(eps);
  else if (key == "clip_norm") d(clip_norm);
  else if (key == "epochs") i(epochs);
  else if (key == "batch_size") i(batch_size);
  else if (key == "query_bptt") b(query_bptt);
  else if (key == "seed") seed = static_cast<std::uint64_t>(kv.get_int(key, 0));
  else if (key == "mode") mode = value;
  else if (key == "eval_split") eval_split = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "dataset") dataset = value;
  else if (key == "vocab") vocab = value;
  else if (key == "split") split = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "report") report = value;
  else if (key == "train_log") train_log = value;
  else throw ConfigError("config", "unknown run configuration key '" + key + "'");
}

RunConfig RunConfig::from(const KeyValueFile& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv.entries()) cfg.set(k, v);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return from(KeyValueFile::load(path)); }

void RunConfig::validate() const {
  auto positive = [](long v, const char* name) {
    if (v < 1) throw ConfigError("config", std::string(name) + " must be >= 1");
  };
  positive(hidden, "hidden");
  positive(embed, "embed");
  positive(n_det, "n_det");
  positive(max_steps, "max_steps");
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  if (!(lr > 0.0)) throw ConfigError("config", "lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("config", "weight_decay must be >= 0");
  if (mode != "dnoc" && mode != "no-memory" && mode != "no-placeholder") {
    throw ConfigError("config", "mode must be dnoc, no-memory or no-placeholder, got '" + mode + "'");
  }
  if (eval_split != "test" && eval_split != "val") throw ConfigError("config", "eval_split must be test or val");
}

namespace {
std::string join_path(const std::string& dir, const std::string& file) {
  if (dir.empty()) return file;
  return dir.back() == '/' ? dir + file : dir + "/" + file;
}
}  // namespace

std::string RunConfig::dataset_path() const { return dataset.empty() ? join_path(data_dir, "dataset.jsonl") : dataset; }
std::string RunConfig::vocab_path() const { return vocab.empty() ? join_path(data_dir, "vocab.txt") : vocab; }
std::string RunConfig::split_path() const { return split.empty() ? join_path(data_dir, "split.json") : split; }

}  // namespace dnoc
