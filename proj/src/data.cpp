#include "dnoc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dnoc {

using ordered_json = nlohmann::ordered_json;

bool DatasetRecord::mentions(const std::string& word) const {
  for (const auto& ref : references)
    if (std::find(ref.begin(), ref.end(), word) != ref.end()) return true;
  return false;
}

std::vector<std::string> SyntheticWorld::object_names() const {
  std::vector<std::string> out;
  for (const auto& o : objects) out.push_back(o.name);
  return out;
}

int SyntheticWorld::object_index(const std::string& name) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string default_world_config() {
  return R"(# Synthetic captioning world: 20 objects in 5 categories.
seed = 7
dim = 32
noise_scale = 0.05
category_scale = 1.0
object_scale = 0.4
objects_min = 1
objects_max = 3
references = 3
false_detections = 1
train_images = 500
held_out = bottle bus couch microwave pizza racket suitcase zebra

category.animal = dog cat horse zebra
category.food = cake banana sandwich pizza
category.vehicle = car truck motorcycle bus
category.home = chair bed couch microwave
category.item = umbrella bottle suitcase racket

phrase.animal = a wild {} | a young {}
phrase.food = a tasty {} | a fresh {}
phrase.vehicle = a parked {} | a red {}
phrase.home = a large {} | a white {}
phrase.item = a small {} | a black {}

template.1 = {0} in the picture | there is {0} here
template.2 = {0} next to {1} | {0} and {1}
template.3 = {0} next to {1} and {2} | {0} with {1} and {2}
)";
}

WorldConfig WorldConfig::load(const std::string& path) { return {KeyValueFile::load(path)}; }
WorldConfig WorldConfig::parse_string(const std::string& text) { return {KeyValueFile::parse_string(text)}; }

ObjectRange WorldConfig::object_range() const {
  return {static_cast<int>(kv.get_int("objects_min", 1)), static_cast<int>(kv.get_int("objects_max", 3))};
}

std::vector<std::string> WorldConfig::held_out() const { return split_words(kv.get_string("held_out", "")); }

namespace {

VectorXd gaussian_vector(std::mt19937_64& rng, int dim, double stddev) {
  VectorXd v = VectorXd::Zero(dim);
  if (stddev <= 0.0) return v;
  std::normal_distribution<double> n(0.0, stddev);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v;
}

}  // namespace

SyntheticWorld make_world(const WorldConfig& cfg) {
  const auto& kv = cfg.kv;
  SyntheticWorld w;
  w.seed = static_cast<std::uint64_t>(kv.get_int("seed", 7));
  w.dim = static_cast<int>(kv.get_int("dim", 32));
  w.noise_scale = kv.get_double("noise_scale", 0.05);
  w.references = static_cast<int>(kv.get_int("references", 3));
  w.false_detections = static_cast<int>(kv.get_int("false_detections", 0));
  const double category_scale = kv.get_double("category_scale", 1.0);
  const double object_scale = kv.get_double("object_scale", 0.4);
  if (w.dim < 1 || w.references < 1 || w.noise_scale < 0.0 || w.false_detections < 0) {
    throw ConfigError("data", "world config needs dim >= 1, references >= 1, noise_scale >= 0");
  }

  std::mt19937_64 rng(w.seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(w.dim));
  std::set<std::string> seen;
  for (const auto& [category, members] : kv.with_prefix("category.")) {
    const int c = static_cast<int>(w.categories.size());
    w.categories.push_back(category);
    const VectorXd direction = gaussian_vector(rng, w.dim, unit * category_scale);
    for (const auto& name : split_words(members)) {
      if (!seen.insert(name).second) throw ConfigError("data", "object '" + name + "' listed twice");
      w.objects.push_back({name, c, direction + gaussian_vector(rng, w.dim, unit * object_scale)});
    }
    auto phrases = kv.get("phrase." + category);
    if (!phrases) throw ConfigError("data", "category '" + category + "' has no phrase." + category + " entry");
    w.phrases.push_back(split_on(*phrases, '|'));
    for (const auto& p : w.phrases.back())
      if (p.find("{}") == std::string::npos) throw ConfigError("data", "phrase '" + p + "' lacks a {} slot");
  }
  for (const auto& [arity, alternatives] : kv.with_prefix("template.")) {
    int k = 0;
    try {
      k = std::stoi(arity);
    } catch (const std::exception&) {
      throw ConfigError("data", "template key must be template.<count>, got template." + arity);
    }
    w.templates[k] = split_on(alternatives, '|');
  }
  for (std::size_t i = 0; i < w.objects.size(); ++i)
    for (std::size_t j = i + 1; j < w.objects.size(); ++j)
      if (w.objects[i].anchor == w.objects[j].anchor) throw DomainError("data", "anchor vectors must be distinct");
  if (w.objects.size() < 4) throw DomainError("data", "the object inventory needs at least 4 objects");
  return w;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

DatasetRecord generate_record(const SyntheticWorld& w, ObjectRange range, std::uint32_t attempt,
                              std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(w.seed), static_cast<std::uint32_t>(w.seed >> 32), attempt, index};
  std::mt19937_64 rng(seq);
  const int n_categories = static_cast<int>(w.categories.size());

  std::uniform_int_distribution<int> count_dist(range.min, range.max);
  const int k = count_dist(rng);
  std::vector<int> categories(n_categories);
  std::iota(categories.begin(), categories.end(), 0);
  std::shuffle(categories.begin(), categories.end(), rng);
  categories.resize(k);

  std::vector<int> objects;
  for (int c : categories) {
    std::vector<int> members;
    for (int i = 0; i < static_cast<int>(w.objects.size()); ++i)
      if (w.objects[i].category == c) members.push_back(i);
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    objects.push_back(members[pick(rng)]);
  }

  DatasetRecord rec;
  std::ostringstream id;
  id << "img_" << std::setw(5) << std::setfill('0') << index;
  rec.image_id = id.str();

  rec.feature = VectorXd::Zero(w.dim);
  for (int o : objects) rec.feature += w.objects[o].anchor;
  rec.feature += gaussian_vector(rng, w.dim, w.noise_scale);

  const auto& alternatives = w.templates.at(k);
  for (int r = 0; r < w.references; ++r) {
    std::vector<int> order = objects;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> pick_template(0, alternatives.size() - 1);
    std::string sentence = alternatives[pick_template(rng)];
    for (int slot = 0; slot < k; ++slot) {
      const auto& obj = w.objects[order[slot]];
      const auto& phrases = w.phrases[obj.category];
      std::uniform_int_distribution<std::size_t> pick_phrase(0, phrases.size() - 1);
      const std::string phrase = replace_all(phrases[pick_phrase(rng)], "{}", obj.name);
      sentence = replace_all(sentence, "{" + std::to_string(slot) + "}", phrase);
    }
    rec.references.push_back(split_words(sentence));
  }

  std::uniform_real_distribution<double> score(0.5, 1.0);
  for (int o : objects) {
    rec.detections.push_back({w.objects[o].anchor + gaussian_vector(rng, w.dim, w.noise_scale), o, score(rng)});
  }
  if (w.false_detections > 0) {
    std::vector<int> absent;
    for (int i = 0; i < static_cast<int>(w.objects.size()); ++i)
      if (std::find(categories.begin(), categories.end(), w.objects[i].category) == categories.end())
        absent.push_back(i);
    std::shuffle(absent.begin(), absent.end(), rng);
    absent.resize(std::min<std::size_t>(absent.size(), static_cast<std::size_t>(w.false_detections)));
    for (int o : absent) {
      rec.detections.push_back({w.objects[o].anchor + gaussian_vector(rng, w.dim, w.noise_scale), o, score(rng)});
    }
  }
  return rec;
}

void check_range(const SyntheticWorld& w, ObjectRange range) {
  if (range.min < 1 || range.max < range.min) throw DomainError("data", "objects per image must satisfy 1 <= min <= max");
  if (range.max > static_cast<int>(w.objects.size()) || range.max > static_cast<int>(w.categories.size())) {
    throw DomainError("data", "objects per image (" + std::to_string(range.max) +
                                  ") exceeds the inventory of " + std::to_string(w.objects.size()) + " objects in " +
                                  std::to_string(w.categories.size()) + " categories");
  }
  for (int k = range.min; k <= range.max; ++k)
    if (w.templates.count(k) == 0 || w.templates.at(k).empty())
      throw ConfigError("data", "no template for " + std::to_string(k) + " objects");
}

bool balanced(const SyntheticWorld& w, const std::vector<DatasetRecord>& records) {
  const auto freq = object_frequencies(records, w.object_names());
  std::vector<int> counts;
  for (const auto& [name, n] : freq) counts.push_back(n);
  std::sort(counts.begin(), counts.end());
  const double median = counts.size() % 2 == 1
                            ? counts[counts.size() / 2]
                            : 0.5 * (counts[counts.size() / 2 - 1] + counts[counts.size() / 2]);
  if (median <= 0.0) return true;
  return counts.back() <= 3.0 * median;
}

constexpr std::uint32_t kMaxAttempts = 100;

}  // namespace

std::vector<DatasetRecord> generate_synthetic(const SyntheticWorld& world, int n_images, ObjectRange range) {
  check_range(world, range);
  for (std::uint32_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<DatasetRecord> records;
    records.reserve(std::max(n_images, 0));
    for (int i = 0; i < n_images; ++i) records.push_back(generate_record(world, range, attempt, i));
    if (balanced(world, records)) return records;
  }
  throw DomainError("data", "could not generate a label-balanced dataset");
}

std::vector<DatasetRecord> generate_for_train_target(const SyntheticWorld& world, ObjectRange range,
                                                     const std::vector<std::string>& held_out_words,
                                                     int train_images, const SplitRatios& ratios) {
  check_range(world, range);
  const double total = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0.0) || !(total > 0.0)) throw DomainError("data", "train ratio must be positive");
  long clean_target = 0;
  while (std::llround(clean_target * ratios.train / total) < train_images) ++clean_target;

  for (std::uint32_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<DatasetRecord> records;
    std::set<std::string> uncovered(held_out_words.begin(), held_out_words.end());
    long clean = 0;
    // Past the clean target only held-out records are kept, until every held-out word is covered.
    for (std::uint32_t i = 0; clean < clean_target || !uncovered.empty(); ++i) {
      if (i > 1000u * static_cast<std::uint32_t>(clean_target + 1)) {
        throw DomainError("data", "cannot reach the training target while covering every held-out word");
      }
      auto rec = generate_record(world, range, attempt, i);
      bool held = false;
      for (const auto& w : held_out_words) {
        if (!rec.mentions(w)) continue;
        held = true;
        uncovered.erase(w);
      }
      if (!held && clean >= clean_target) continue;
      if (!held) ++clean;
      records.push_back(std::move(rec));
    }
    if (balanced(world, records)) return records;
  }
  throw DomainError("data", "could not generate a label-balanced dataset");
}

std::map<std::string, int> object_frequencies(const std::vector<DatasetRecord>& records,
                                              const std::vector<std::string>& objects) {
  std::map<std::string, int> out;
  for (const auto& name : objects) out[name] = 0;
  for (const auto& rec : records)
    for (const auto& name : objects)
      if (rec.mentions(name)) ++out[name];
  return out;
}

// ---------------------------------------------------------------------------

HeldOutSplit build_heldout_split(const std::vector<DatasetRecord>& records,
                                 const std::vector<std::string>& held_out_words, const SplitRatios& ratios) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (!(total > 0.0) || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw DomainError("data", "split ratios must be non-negative with a positive sum");
  }
  for (const auto& word : held_out_words) {
    if (std::none_of(records.begin(), records.end(), [&](const DatasetRecord& r) { return r.mentions(word); })) {
      throw CoverageError("data", "held-out word '" + word + "' appears in no record");
    }
  }
  auto mentions_held_out = [&](const DatasetRecord& r) {
    return std::any_of(held_out_words.begin(), held_out_words.end(),
                       [&](const std::string& w) { return r.mentions(w); });
  };

  std::vector<std::size_t> clean, pool;
  for (std::size_t i = 0; i < records.size(); ++i) (mentions_held_out(records[i]) ? pool : clean).push_back(i);
  std::mt19937_64 rng(ratios.seed);
  std::shuffle(clean.begin(), clean.end(), rng);
  std::shuffle(pool.begin(), pool.end(), rng);

  const auto n = static_cast<long>(clean.size());
  long n_train = std::min(n, static_cast<long>(std::llround(n * ratios.train / total)));
  long n_val = std::min(n - n_train, static_cast<long>(std::llround(n * ratios.val / total)));
  std::vector<std::size_t> train(clean.begin(), clean.begin() + n_train);
  std::vector<std::size_t> val(clean.begin() + n_train, clean.begin() + n_train + n_val);
  std::vector<std::size_t> test(clean.begin() + n_train + n_val, clean.end());

  const double eval_total = ratios.val + ratios.test;
  const auto m = static_cast<long>(pool.size());
  const long m_val = eval_total > 0.0 ? std::min(m, static_cast<long>(std::llround(m * ratios.val / eval_total))) : 0;
  std::vector<std::size_t> pool_val(pool.begin(), pool.begin() + m_val);
  test.insert(test.end(), pool.begin() + m_val, pool.end());

  // Every held-out word must be testable.
  for (const auto& word : held_out_words) {
    auto in_test = std::any_of(test.begin(), test.end(), [&](std::size_t i) { return records[i].mentions(word); });
    if (in_test) continue;
    auto it = std::find_if(pool_val.begin(), pool_val.end(), [&](std::size_t i) { return records[i].mentions(word); });
    if (it != pool_val.end()) {
      test.push_back(*it);
      pool_val.erase(it);
    }
  }
  val.insert(val.end(), pool_val.begin(), pool_val.end());

  HeldOutSplit split;
  split.held_out_words = held_out_words;
  auto materialize = [&records](std::vector<std::size_t> idx, std::vector<DatasetRecord>& out) {
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.push_back(records[i]);
  };
  materialize(train, split.train);
  materialize(val, split.val);
  materialize(test, split.test);
  return split;
}

std::string SplitManifest::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0xffu;
    h *= 1099511628211ull;
  };
  auto feed_list = [&](const char* tag, const std::vector<std::string>& items) {
    feed(tag);
    for (const auto& s : items) feed(s);
  };
  feed_list("held_out", held_out_words);
  feed_list("known", known_words);
  feed_list("classes", detection_classes);
  feed_list("train", train_ids);
  feed_list("val", val_ids);
  feed_list("test", test_ids);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

SplitManifest SplitManifest::from_split(const HeldOutSplit& split, const std::vector<std::string>& detection_classes) {
  SplitManifest m;
  m.held_out_words = split.held_out_words;
  m.detection_classes = detection_classes;
  for (const auto& c : detection_classes)
    if (std::find(m.held_out_words.begin(), m.held_out_words.end(), c) == m.held_out_words.end())
      m.known_words.push_back(c);
  for (const auto& r : split.train) m.train_ids.push_back(r.image_id);
  for (const auto& r : split.val) m.val_ids.push_back(r.image_id);
  for (const auto& r : split.test) m.test_ids.push_back(r.image_id);
  return m;
}

void SplitManifest::save(const std::string& path) const {
  ordered_json j;
  j["held_out_words"] = held_out_words;
  j["known_words"] = known_words;
  j["detection_classes"] = detection_classes;
  j["train"] = train_ids;
  j["val"] = val_ids;
  j["test"] = test_ids;
  j["hash"] = hash();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("data", "cannot write split manifest " + path);
  out << j.dump(1) << '\n';
}

SplitManifest SplitManifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("data", "cannot open split manifest " + path);
  try {
    const auto j = ordered_json::parse(in);
    SplitManifest m;
    j.at("held_out_words").get_to(m.held_out_words);
    j.at("known_words").get_to(m.known_words);
    j.at("detection_classes").get_to(m.detection_classes);
    j.at("train").get_to(m.train_ids);
    j.at("val").get_to(m.val_ids);
    j.at("test").get_to(m.test_ids);
    if (j.contains("hash") && j.at("hash").get<std::string>() != m.hash()) {
      throw SchemaError("data", "split manifest hash mismatch in " + path);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("data", "malformed split manifest " + path + ": " + e.what());
  }
}

HeldOutSplit apply_manifest(const std::vector<DatasetRecord>& records, const SplitManifest& manifest) {
  std::map<std::string, const DatasetRecord*> by_id;
  for (const auto& r : records) by_id[r.image_id] = &r;
  auto collect = [&](const std::vector<std::string>& ids, std::vector<DatasetRecord>& out) {
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw SchemaError("data", "split manifest names unknown image '" + id + "'");
      out.push_back(*it->second);
    }
  };
  HeldOutSplit split;
  split.held_out_words = manifest.held_out_words;
  collect(manifest.train_ids, split.train);
  collect(manifest.val_ids, split.val);
  collect(manifest.test_ids, split.test);
  return split;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd number_array(const ordered_json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError("data", where + ": expected a number array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError("data", where + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  if (!v.allFinite()) throw SchemaError("data", where + ": non-finite entry");
  return v;
}

}  // namespace

std::string record_to_json_line(const DatasetRecord& record) {
  ordered_json j;
  j["image_id"] = record.image_id;
  j["feature"] = to_std(record.feature);
  j["references"] = record.references;
  auto dets = ordered_json::array();
  for (const auto& d : record.detections) {
    ordered_json dj;
    dj["feature"] = to_std(d.feature);
    dj["label"] = d.label;
    dj["score"] = d.score;
    dets.push_back(std::move(dj));
  }
  j["detections"] = std::move(dets);
  return j.dump();
}

DatasetRecord record_from_json_line(const std::string& line, int lineno) {
  const std::string where = "line " + std::to_string(lineno);
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("data", where + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("data", where + ": expected a JSON object");
  for (const char* key : {"image_id", "feature", "references", "detections"}) {
    if (!j.contains(key)) throw SchemaError("data", where + ": missing field '" + key + "'");
  }
  DatasetRecord rec;
  if (!j["image_id"].is_string()) throw SchemaError("data", where + ": image_id must be a string");
  rec.image_id = j["image_id"].get<std::string>();
  rec.feature = number_array(j["feature"], where + " feature");

  const auto& refs = j["references"];
  if (!refs.is_array() || refs.empty()) throw SchemaError("data", where + ": record has empty references");
  for (const auto& ref : refs) {
    if (!ref.is_array() || ref.empty()) throw SchemaError("data", where + ": empty reference sentence");
    Sentence s;
    for (const auto& tok : ref) {
      if (!tok.is_string()) throw SchemaError("data", where + ": reference tokens must be strings");
      s.push_back(tok.get<std::string>());
    }
    rec.references.push_back(std::move(s));
  }

  const auto& dets = j["detections"];
  if (!dets.is_array()) throw SchemaError("data", where + ": detections must be an array");
  for (const auto& dj : dets) {
    if (!dj.is_object() || !dj.contains("feature") || !dj.contains("label") || !dj.contains("score")) {
      throw SchemaError("data", where + ": detection needs feature, label and score");
    }
    DetectionResult<double> d;
    d.feature = number_array(dj["feature"], where + " detection feature");
    if (!dj["label"].is_number_integer() || dj["label"].get<long>() < 0) {
      throw SchemaError("data", where + ": detection label must be a non-negative integer");
    }
    d.label = dj["label"].get<int>();
    if (!dj["score"].is_number()) throw SchemaError("data", where + ": detection score must be a number");
    d.score = dj["score"].get<double>();
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw SchemaError("data", where + ": detection score outside [0, 1]");
    rec.detections.push_back(std::move(d));
  }
  return rec;
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("data", "cannot write dataset " + path);
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("data", "cannot open dataset " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  int lineno = 0;
  Eigen::Index feature_dim = -1, detection_dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto rec = record_from_json_line(line, lineno);
    if (feature_dim < 0) feature_dim = rec.feature.size();
    if (rec.feature.size() != feature_dim) {
      throw SchemaError("data", "line " + std::to_string(lineno) + ": feature length " +
                                    std::to_string(rec.feature.size()) + " differs from " +
                                    std::to_string(feature_dim));
    }
    for (const auto& d : rec.detections) {
      if (detection_dim < 0) detection_dim = d.feature.size();
      if (d.feature.size() != detection_dim) {
        throw SchemaError("data", "line " + std::to_string(lineno) + ": inconsistent detection feature length");
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace dnoc
