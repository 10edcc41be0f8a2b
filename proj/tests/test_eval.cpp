#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "dnoc/eval.hpp"

using namespace dnoc;

namespace {

Caption caption(std::initializer_list<std::string> words) { return Caption{words, 0, 0}; }

// Images z1..z3 show a zebra; n1, n2 do not.
ReferenceMap zebra_refs() {
  return {{"z1", {{"a", "zebra"}, {"a", "wild", "zebra"}}},
          {"z2", {{"a", "zebra"}}},
          {"z3", {{"one", "horse"}, {"a", "zebra"}}},
          {"n1", {{"a", "dog"}}},
          {"n2", {{"a", "cat"}}}};
}

}  // namespace

TEST_CASE("hand-enumerated zebra case gives P = R = F1 = 2/3") {
  const CaptionMap gen = {{"z1", caption({"a", "zebra"})},
                          {"z2", caption({"a", "horse"})},
                          {"z3", caption({"a", "zebra"})},
                          {"n1", caption({"a", "zebra"})},
                          {"n2", caption({"a", "cat"})}};
  const auto s = f1_for_object("zebra", gen, zebra_refs());
  CHECK(s.tp == 2);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("never emitting the word scores zero, perfect mentions score one") {
  CaptionMap never, perfect;
  for (const auto& [id, refs] : zebra_refs()) {
    never[id] = caption({"a", "dog"});
    perfect[id] = id[0] == 'z' ? caption({"zebra"}) : caption({"a"});
  }
  CHECK(f1_for_object("zebra", never, zebra_refs()).f1 == 0.0);
  CHECK(f1_for_object("zebra", perfect, zebra_refs()).f1 == 1.0);
}

TEST_CASE("matching is exact after lowercasing") {
  const ReferenceMap refs = {{"a", {{"A", "Zebra"}}}};
  CHECK(f1_for_object("zebra", {{"a", caption({"ZEBRA"})}}, refs).f1 == 1.0);
  CHECK(f1_for_object("zebra", {{"a", caption({"zebras"})}}, refs).f1 == 0.0);
}

TEST_CASE("image id mismatch is a coverage error") {
  CaptionMap gen = {{"z1", caption({"zebra"})}};
  CHECK_THROWS_AS(f1_for_object("zebra", gen, zebra_refs()), CoverageError);
  gen = {{"q1", caption({})}, {"q2", caption({})}, {"q3", caption({})}, {"q4", caption({})}, {"q5", caption({})}};
  CHECK_THROWS_AS(f1_for_object("zebra", gen, zebra_refs()), CoverageError);
}

TEST_CASE("true negatives change nothing and image order does not matter") {
  CaptionMap gen = {{"z1", caption({"zebra"})}, {"z2", caption({})}, {"z3", caption({"zebra"})},
                    {"n1", caption({"zebra"})}, {"n2", caption({})}};
  auto refs = zebra_refs();
  const auto base = f1_for_object("zebra", gen, refs);
  gen["zz_extra"] = caption({"a", "cat"});
  refs["zz_extra"] = {{"a", "cat"}};
  CHECK(f1_for_object("zebra", gen, refs) == base);

  // Same content under different ids reorders the map.
  CaptionMap renamed;
  ReferenceMap renamed_refs;
  for (const auto& [id, c] : gen) {
    renamed["x" + std::string(1, static_cast<char>('z' - id[1] % 26)) + id] = c;
    renamed_refs["x" + std::string(1, static_cast<char>('z' - id[1] % 26)) + id] = refs.at(id);
  }
  CHECK(f1_for_object("zebra", renamed, renamed_refs) == base);
}

TEST_CASE("split evaluation: echo oracle scores one, empty captions score zero") {
  std::vector<DatasetRecord> recs;
  for (const auto& [id, refs] : zebra_refs()) recs.push_back({id, VectorXd::Zero(1), refs, {}});
  const std::vector<std::string> held = {"zebra"}, known = {"dog", "cat"};
  const auto echo = evaluate_split(recs, [](const DatasetRecord& r) { return Caption{r.references[0], 0, 0}; }, held, known);
  // z3's first reference does not mention the zebra, so the echo misses it.
  CHECK(echo.per_object.at("zebra").tp == 2);
  const auto all_refs = evaluate_split(recs, [](const DatasetRecord& r) {
    Caption c;
    for (const auto& ref : r.references) c.tokens.insert(c.tokens.end(), ref.begin(), ref.end());
    return c;
  }, held, known);
  CHECK(all_refs.average_f1 == 1.0);
  CHECK(all_refs.known_average_f1 == 1.0);
  CHECK(echo.diagnostic_unigram_precision == 1.0);
  const auto empty = evaluate_split(recs, [](const DatasetRecord&) { return Caption{}; }, held, known);
  CHECK(empty.average_f1 == 0.0);
  CHECK(empty.known_average_f1 == 0.0);
}

TEST_CASE("average is the unweighted mean over exactly the held-out words and lies within their range") {
  std::vector<DatasetRecord> recs;
  const std::vector<std::string> held = {"o1", "o2", "o3", "o4", "o5", "o6", "o7", "o8"};
  for (int i = 0; i < 16; ++i) recs.push_back({"img" + std::to_string(i), VectorXd::Zero(1), {{"a", held[i % 8]}}, {}});
  const auto report = evaluate_split(recs, [](const DatasetRecord& r) {
    const int i = std::stoi(r.image_id.substr(3));
    return i < 8 ? Caption{r.references[0], 0, 0} : Caption{};
  }, held, {});
  double sum = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& w : held) {
    const double f = report.per_object.at(w).f1;
    sum += f;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  CHECK(report.average_f1 == doctest::Approx(sum / 8.0));
  CHECK(report.average_f1 >= lo);
  CHECK(report.average_f1 <= hi);
  CHECK(report.average_f1 == doctest::Approx(2.0 / 3.0));  // P = 1, R = 1/2 for each word
}

TEST_CASE("unigram precision clips by the reference maximum") {
  const ReferenceMap refs = {{"a", {{"a", "dog"}, {"a", "a", "cat"}}}};
  // Candidate "a a a dog zebra": a clipped at 2, dog 1, zebra 0 -> 3 / 5.
  CHECK(unigram_precision({{"a", caption({"a", "a", "a", "dog", "zebra"})}}, refs) == doctest::Approx(0.6));
}

TEST_CASE("reports round trip through JSON and print as a table") {
  std::vector<DatasetRecord> recs;
  for (const auto& [id, refs] : zebra_refs()) recs.push_back({id, VectorXd::Zero(1), refs, {}});
  auto report = evaluate_split(recs, [](const DatasetRecord& r) { return Caption{r.references.back(), 0, 0}; },
                               {"zebra"}, {"dog", "cat"});
  report.metadata["mode"] = "dnoc";
  report.metadata["manifest_hash"] = "0123456789abcdef";
  write_report(report, "test_report.json");
  const auto back = read_report("test_report.json");
  CHECK(back == report);
  CHECK(report_to_json(back) == report_to_json(report));
  std::remove("test_report.json");
  std::ostringstream table;
  print_report_table(report, table);
  CHECK(table.str().find("held_out\tzebra") != std::string::npos);
  CHECK(table.str().find("NOT-METEOR") != std::string::npos);
  CHECK_THROWS_AS(report_from_json("{"), ParseError);
  CHECK_THROWS_AS(report_from_json("{}"), SchemaError);
}
