#ifndef DNOC_EVAL_HPP
#define DNOC_EVAL_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dnoc/caption.hpp"
#include "dnoc/data.hpp"

namespace dnoc {

struct ObjectStats {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const ObjectStats&, const ObjectStats&) = default;
};

struct F1Report {
  std::map<std::string, ObjectStats> per_object;
  double average_f1 = 0.0;
  double known_average_f1 = 0.0;
  std::vector<std::string> held_out_words;
  std::vector<std::string> known_words;
  double diagnostic_unigram_precision = 0.0;  // NOT-METEOR, a rough fluency signal only
  std::map<std::string, std::string> metadata;

  friend bool operator==(const F1Report&, const F1Report&) = default;
};

using CaptionMap = std::map<std::string, Caption>;
using ReferenceMap = std::map<std::string, std::vector<Sentence>>;
using Captioner = std::function<Caption(const DatasetRecord&)>;

/// Image-level counts: an image is actual-positive when any reference
/// mentions the word and predicted-positive when the caption does. Tokens
/// are compared exactly after lowercasing.
ObjectStats f1_for_object(const std::string& word, const CaptionMap& generated, const ReferenceMap& references);

/// Per-object F1 for the held-out and known words; averages are unweighted.
F1Report evaluate_captions(const CaptionMap& generated, const ReferenceMap& references,
                           const std::vector<std::string>& held_out_words,
                           const std::vector<std::string>& known_words);

F1Report evaluate_split(const std::vector<DatasetRecord>& records, const Captioner& captioner,
                        const std::vector<std::string>& held_out_words, const std::vector<std::string>& known_words);
F1Report evaluate_split(const HeldOutSplit& split, const Captioner& captioner,
                        const std::vector<std::string>& known_words);

/// Reference-clipped unigram precision, pooled over images. Diagnostic only.
double unigram_precision(const CaptionMap& generated, const ReferenceMap& references);

std::string report_to_json(const F1Report& report);
F1Report report_from_json(const std::string& text);
void write_report(const F1Report& report, const std::string& path);
F1Report read_report(const std::string& path);
void print_report_table(const F1Report& report, std::ostream& out);

}  // namespace dnoc

#endif  // DNOC_EVAL_HPP
