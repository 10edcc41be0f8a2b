#ifndef DNOC_VOCAB_HPP
#define DNOC_VOCAB_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dnoc {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

namespace tokens {
inline constexpr const char* kGo = "<GO>";
inline constexpr const char* kEos = "<EOS>";
inline constexpr const char* kPad = "<PAD>";
inline constexpr const char* kUnknown = "<UNKNOWN>";
inline constexpr const char* kPlaceholder = "<PL>";
}  // namespace tokens

/// Dense word <-> id map. Ordinary words come first (by descending corpus
/// frequency, then lexicographically), followed by the five special tokens.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, int min_count);
  /// Adopts an explicit id order; each special must appear exactly once.
  static Vocabulary from_words(std::vector<std::string> words);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(TokenId id) const;
  std::optional<TokenId> find(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  /// Unknown words map to <UNKNOWN>.
  TokenId id(const std::string& word) const;
  TokenSequence encode(const std::vector<std::string>& sentence) const;

  TokenId go() const { return go_; }
  TokenId eos() const { return eos_; }
  TokenId pad() const { return pad_; }
  TokenId unknown() const { return unknown_; }
  TokenId placeholder() const { return placeholder_; }
  bool is_special(TokenId id) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId go_ = -1, eos_ = -1, pad_ = -1, unknown_ = -1, placeholder_ = -1;
};

bool is_special_word(const std::string& word);

struct DetectionClass {
  std::string name;
  std::optional<TokenId> word;  // empty: novel, absent from the paired vocabulary
  bool novel() const { return !word.has_value(); }
};

/// Words shared by the caption vocabulary and the detector label set, plus the
/// mapping from detector class index to word.
struct DetectableSet {
  std::vector<TokenId> pd_ids;  // sorted
  std::vector<DetectionClass> classes;
  std::unordered_map<TokenId, int> word_to_class;
  TokenId placeholder = -1;

  bool contains(TokenId id) const { return word_to_class.count(id) != 0; }
  std::optional<int> class_of(TokenId id) const;
  int num_classes() const { return static_cast<int>(classes.size()); }
};

DetectableSet intersect_detectable(const Vocabulary& vocab, const std::vector<std::string>& detection_classes);

/// Detector-aware target: every detectable word becomes <PL>.
TokenSequence rewrite_targets(const TokenSequence& sentence, const DetectableSet& pd);

/// a_t = 1 where the original token is detectable.
std::vector<int> mask_weights(const TokenSequence& original, const DetectableSet& pd);

}  // namespace dnoc

#endif  // DNOC_VOCAB_HPP
