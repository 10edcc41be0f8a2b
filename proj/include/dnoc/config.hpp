#ifndef DNOC_CONFIG_HPP
#define DNOC_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnoc/smp.hpp"

namespace dnoc {

/// `key = value` lines; '#' starts a comment. Entries keep file order and a
/// later assignment of the same key wins.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source = "<stream>");
  static KeyValueFile parse_string(const std::string& text);
  static KeyValueFile load(const std::string& path);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::optional<std::string> get(const std::string& key) const;
  bool has(const std::string& key) const { return get(key).has_value(); }
  void set(const std::string& key, const std::string& value);
  /// Entries whose key starts with `prefix`, with the prefix stripped, in file order.
  std::vector<std::pair<std::string, std::string>> with_prefix(const std::string& prefix) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::vector<std::string> split_words(const std::string& s);
std::vector<std::string> split_on(const std::string& s, char sep);
std::string trim(const std::string& s);

Addressing parse_addressing(const std::string& s);
std::string to_string(Addressing a);

struct RunConfig {
  // Model
  int hidden = 64;
  int embed = 64;
  Addressing addressing = Addressing::softmax;
  bool key_projection = false;
  bool cell_from_image = false;
  // Captioning
  int n_det = 4;
  int max_steps = 15;
  // Optimization
  double lr = 1e-3;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  int epochs = 50;
  int batch_size = 16;
  bool query_bptt = true;
  std::uint64_t seed = 7;
  // Run
  std::string mode = "dnoc";
  std::string eval_split = "test";
  std::string data_dir;
  std::string dataset;
  std::string vocab;
  std::string split;
  std::string checkpoint = "dnoc.ckpt";
  std::string report;
  std::string train_log;

  static RunConfig from(const KeyValueFile& kv);
  static RunConfig load(const std::string& path);
  /// Applies one key; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  std::string dataset_path() const;
  std::string vocab_path() const;
  std::string split_path() const;
};

}  // namespace dnoc

#endif  // DNOC_CONFIG_HPP
