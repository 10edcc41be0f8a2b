#ifndef DNOC_CAPTION_HPP
#define DNOC_CAPTION_HPP

#include <string>
#include <vector>

namespace dnoc {

/// A generated sentence in surface form. Novel words appear as raw strings;
/// a literal "<PL>" survives only when the memory had nothing to offer.
struct Caption {
  std::vector<std::string> tokens;
  int placeholder_count_unfilled = 0;
  int memory_reads = 0;

  std::string text() const {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out += ' ';
      out += t;
    }
    return out;
  }

  bool mentions(const std::string& word) const {
    for (const auto& t : tokens)
      if (t == word) return true;
    return false;
  }
};

}  // namespace dnoc

#endif  // DNOC_CAPTION_HPP
