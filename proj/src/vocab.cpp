#include "dnoc/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "dnoc/errors.hpp"

namespace dnoc {

namespace {
const char* const kSpecials[] = {tokens::kGo, tokens::kEos, tokens::kPad, tokens::kUnknown,
                                 tokens::kPlaceholder};
}

bool is_special_word(const std::string& word) {
  return std::find(std::begin(kSpecials), std::end(kSpecials), word) != std::end(kSpecials);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences, int min_count) {
  if (sentences.empty()) throw DomainError("vocab", "cannot build a vocabulary from an empty corpus");
  std::map<std::string, long> counts;
  for (const auto& sentence : sentences)
    for (const auto& w : sentence)
      if (!is_special_word(w)) ++counts[w];

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [w, n] : counts)
    if (n >= min_count) kept.emplace_back(w, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words;
  words.reserve(kept.size() + 5);
  for (auto& [w, n] : kept) words.push_back(w);
  for (const char* s : kSpecials) words.emplace_back(s);
  return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words_ = std::move(words);
  for (TokenId i = 0; i < static_cast<TokenId>(v.words_.size()); ++i) {
    const auto& w = v.words_[i];
    if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
      throw SchemaError("vocab", "invalid vocabulary entry at id " + std::to_string(i));
    }
    if (!v.index_.emplace(w, i).second) throw SchemaError("vocab", "duplicate vocabulary word '" + w + "'");
  }
  auto special = [&v](const char* s) {
    auto it = v.index_.find(s);
    if (it == v.index_.end()) throw SchemaError("vocab", std::string("missing special token ") + s);
    return it->second;
  };
  v.go_ = special(tokens::kGo);
  v.eos_ = special(tokens::kEos);
  v.pad_ = special(tokens::kPad);
  v.unknown_ = special(tokens::kUnknown);
  v.placeholder_ = special(tokens::kPlaceholder);
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("vocab", "cannot open vocabulary file " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) words.push_back(line);
  return from_words(std::move(words));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("vocab", "cannot write vocabulary file " + path);
  for (const auto& w : words_) out << w << '\n';
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || id >= size()) throw IndexError("vocab", "token id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::optional<TokenId> Vocabulary::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(const std::string& word) const { return find(word).value_or(unknown_); }

TokenSequence Vocabulary::encode(const std::vector<std::string>& sentence) const {
  TokenSequence out;
  out.reserve(sentence.size());
  for (const auto& w : sentence) out.push_back(id(w));
  return out;
}

bool Vocabulary::is_special(TokenId id) const {
  return id == go_ || id == eos_ || id == pad_ || id == unknown_ || id == placeholder_;
}

std::optional<int> DetectableSet::class_of(TokenId id) const {
  auto it = word_to_class.find(id);
  if (it == word_to_class.end()) return std::nullopt;
  return it->second;
}

DetectableSet intersect_detectable(const Vocabulary& vocab, const std::vector<std::string>& detection_classes) {
  DetectableSet pd;
  pd.placeholder = vocab.placeholder();
  for (int c = 0; c < static_cast<int>(detection_classes.size()); ++c) {
    const auto& name = detection_classes[c];
    DetectionClass cls{name, std::nullopt};
    if (auto id = vocab.find(name); id && !vocab.is_special(*id)) {
      // A repeated class name keeps its first class index.
      if (pd.word_to_class.emplace(*id, c).second) pd.pd_ids.push_back(*id);
      cls.word = *id;
    }
    pd.classes.push_back(std::move(cls));
  }
  std::sort(pd.pd_ids.begin(), pd.pd_ids.end());
  return pd;
}

TokenSequence rewrite_targets(const TokenSequence& sentence, const DetectableSet& pd) {
  TokenSequence out(sentence);
  for (auto& id : out)
    if (pd.contains(id)) id = pd.placeholder;
  return out;
}

std::vector<int> mask_weights(const TokenSequence& original, const DetectableSet& pd) {
  std::vector<int> a(original.size(), 0);
  for (std::size_t t = 0; t < original.size(); ++t) a[t] = pd.contains(original[t]) ? 1 : 0;
  return a;
}

}  // namespace dnoc
