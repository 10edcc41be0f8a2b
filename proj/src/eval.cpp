#include "dnoc/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace dnoc {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool contains_word(const std::vector<std::string>& tokens, const std::string& word) {
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return lower(t) == word; });
}

void require_same_ids(const CaptionMap& generated, const ReferenceMap& references) {
  if (generated.size() != references.size()) {
    throw CoverageError("eval", std::to_string(generated.size()) + " captions against " +
                                    std::to_string(references.size()) + " referenced images");
  }
  for (const auto& [id, caption] : generated) {
    if (references.count(id) == 0) throw CoverageError("eval", "image '" + id + "' has no references");
  }
}

double mean_f1(const std::map<std::string, ObjectStats>& stats, const std::vector<std::string>& words) {
  if (words.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& w : words) sum += stats.at(w).f1;
  return sum / static_cast<double>(words.size());
}

}  // namespace

ObjectStats f1_for_object(const std::string& word, const CaptionMap& generated, const ReferenceMap& references) {
  require_same_ids(generated, references);
  const std::string target = lower(word);
  ObjectStats s;
  for (const auto& [id, caption] : generated) {
    const auto& refs = references.at(id);
    const bool actual = std::any_of(refs.begin(), refs.end(), [&](const Sentence& r) { return contains_word(r, target); });
    const bool predicted = contains_word(caption.tokens, target);
    if (actual && predicted) ++s.tp;
    if (!actual && predicted) ++s.fp;
    if (actual && !predicted) ++s.fn;
  }
  s.precision = s.tp + s.fp > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
  s.recall = s.tp + s.fn > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double unigram_precision(const CaptionMap& generated, const ReferenceMap& references) {
  require_same_ids(generated, references);
  long matched = 0, total = 0;
  for (const auto& [id, caption] : generated) {
    std::map<std::string, int> cand;
    for (const auto& t : caption.tokens) ++cand[lower(t)];
    std::map<std::string, int> clip;
    for (const auto& ref : references.at(id)) {
      std::map<std::string, int> counts;
      for (const auto& t : ref) ++counts[lower(t)];
      for (const auto& [w, n] : counts) clip[w] = std::max(clip[w], n);
    }
    for (const auto& [w, n] : cand) {
      total += n;
      auto it = clip.find(w);
      if (it != clip.end()) matched += std::min(n, it->second);
    }
  }
  return total > 0 ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
}

F1Report evaluate_captions(const CaptionMap& generated, const ReferenceMap& references,
                           const std::vector<std::string>& held_out_words,
                           const std::vector<std::string>& known_words) {
  F1Report report;
  report.held_out_words = held_out_words;
  report.known_words = known_words;
  for (const auto& w : held_out_words) report.per_object[w] = f1_for_object(w, generated, references);
  for (const auto& w : known_words) report.per_object[w] = f1_for_object(w, generated, references);
  report.average_f1 = mean_f1(report.per_object, held_out_words);
  report.known_average_f1 = mean_f1(report.per_object, known_words);
  report.diagnostic_unigram_precision = unigram_precision(generated, references);
  return report;
}

F1Report evaluate_split(const std::vector<DatasetRecord>& records, const Captioner& captioner,
                        const std::vector<std::string>& held_out_words, const std::vector<std::string>& known_words) {
  CaptionMap generated;
  ReferenceMap references;
  for (const auto& rec : records) {
    if (!references.emplace(rec.image_id, rec.references).second) {
      throw CoverageError("eval", "duplicate image id '" + rec.image_id + "'");
    }
    generated.emplace(rec.image_id, captioner(rec));
  }
  return evaluate_captions(generated, references, held_out_words, known_words);
}

F1Report evaluate_split(const HeldOutSplit& split, const Captioner& captioner,
                        const std::vector<std::string>& known_words) {
  return evaluate_split(split.test, captioner, split.held_out_words, known_words);
}

// ---------------------------------------------------------------------------

std::string report_to_json(const F1Report& report) {
  nlohmann::json j;
  auto& per = j["per_object"] = nlohmann::json::object();
  for (const auto& [w, s] : report.per_object) {
    per[w] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn},
              {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  }
  j["average_f1"] = report.average_f1;
  j["known_average_f1"] = report.known_average_f1;
  j["held_out_words"] = report.held_out_words;
  j["known_words"] = report.known_words;
  j["diagnostic_unigram_precision"] = report.diagnostic_unigram_precision;
  j["metadata"] = report.metadata;
  return j.dump(2) + "\n";
}

F1Report report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    F1Report r;
    for (const auto& [w, s] : j.at("per_object").items()) {
      ObjectStats o;
      s.at("tp").get_to(o.tp);
      s.at("fp").get_to(o.fp);
      s.at("fn").get_to(o.fn);
      s.at("precision").get_to(o.precision);
      s.at("recall").get_to(o.recall);
      s.at("f1").get_to(o.f1);
      r.per_object[w] = o;
    }
    j.at("average_f1").get_to(r.average_f1);
    j.at("known_average_f1").get_to(r.known_average_f1);
    j.at("held_out_words").get_to(r.held_out_words);
    j.at("known_words").get_to(r.known_words);
    j.at("diagnostic_unigram_precision").get_to(r.diagnostic_unigram_precision);
    if (j.contains("metadata")) j.at("metadata").get_to(r.metadata);
    return r;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("eval", std::string("malformed report: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("eval", std::string("report fields: ") + e.what());
  }
}

void write_report(const F1Report& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("eval", "cannot write report " + path);
  out << report_to_json(report);
}

F1Report read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("eval", "cannot open report " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return report_from_json(text.str());
}

void print_report_table(const F1Report& report, std::ostream& out) {
  auto row = [&](const std::string& group, const std::string& w) {
    const auto& s = report.per_object.at(w);
    out << group << '\t' << w << '\t' << s.tp << '\t' << s.fp << '\t' << s.fn << '\t' << std::fixed
        << std::setprecision(4) << s.precision << '\t' << s.recall << '\t' << s.f1 << '\n';
  };
  out << "group\tobject\ttp\tfp\tfn\tprecision\trecall\tf1\n";
  for (const auto& w : report.held_out_words) row("held_out", w);
  for (const auto& w : report.known_words) row("known", w);
  out << std::fixed << std::setprecision(4) << "average_f1\t" << report.average_f1 << '\n'
      << "known_average_f1\t" << report.known_average_f1 << '\n'
      << "diagnostic_unigram_precision (NOT-METEOR)\t" << report.diagnostic_unigram_precision << '\n';
  out.unsetf(std::ios::fixed);
}

}  // namespace dnoc
