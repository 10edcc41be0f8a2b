#ifndef DNOC_DATA_HPP
#define DNOC_DATA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dnoc/config.hpp"
#include "dnoc/numerics.hpp"
#include "dnoc/objmem.hpp"

namespace dnoc {

using Sentence = std::vector<std::string>;

struct DatasetRecord {
  std::string image_id;
  VectorXd feature;
  std::vector<Sentence> references;
  std::vector<DetectionResult<double>> detections;

  bool mentions(const std::string& word) const;
  friend bool operator==(const DatasetRecord& a, const DatasetRecord& b) {
    return a.image_id == b.image_id && a.feature.size() == b.feature.size() && a.feature == b.feature &&
           a.references == b.references && a.detections == b.detections;
  }
};

// ---------------------------------------------------------------------------
// Synthetic world

struct ObjectSpec {
  std::string name;
  int category = 0;
  VectorXd anchor;
};

struct ObjectRange {
  int min = 1;
  int max = 3;
};

/// Desk-scale stand-in for images, a CNN encoder and an object detector.
/// Each object's anchor is its category direction plus an object-specific
/// part; an image feature is the sum of its objects' anchors plus noise.
struct SyntheticWorld {
  std::vector<std::string> categories;
  std::vector<ObjectSpec> objects;                   // class index = position
  std::vector<std::vector<std::string>> phrases;     // per category, "{}" marks the object word
  std::map<int, std::vector<std::string>> templates; // arity -> alternatives using {0}, {1}, ...
  int dim = 32;
  double noise_scale = 0.05;
  int references = 3;
  int false_detections = 0;  // spurious detections per image, from categories not in the image
  std::uint64_t seed = 7;

  std::vector<std::string> object_names() const;
  int object_index(const std::string& name) const;  // -1 when absent
};

/// Parsed world-config file. Recognized keys: seed, dim, noise_scale,
/// category_scale, object_scale, objects_min, objects_max, references,
/// false_detections, n_images, train_images, held_out, category.<name>,
/// phrase.<name>, template.<arity>.
struct WorldConfig {
  KeyValueFile kv;

  static WorldConfig load(const std::string& path);
  static WorldConfig parse_string(const std::string& text);
  ObjectRange object_range() const;
  std::vector<std::string> held_out() const;
};

/// The built-in world: 20 objects in 5 categories.
std::string default_world_config();

SyntheticWorld make_world(const WorldConfig& cfg);

/// Fully seeded; record i depends only on (seed, i), so shorter runs are
/// prefixes of longer ones. Rejects (and reseeds) datasets in which an object
/// is more than 3x as frequent as the median object.
std::vector<DatasetRecord> generate_synthetic(const SyntheticWorld& world, int n_images, ObjectRange range);

// ---------------------------------------------------------------------------
// Held-out split

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 7;
};

struct HeldOutSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> val;
  std::vector<DatasetRecord> test;
  std::vector<std::string> held_out_words;
};

/// Records that mention any held-out word never reach train; they are divided
/// between val and test. The rest is split by ratio. Detections are untouched.
HeldOutSplit build_heldout_split(const std::vector<DatasetRecord>& records,
                                 const std::vector<std::string>& held_out_words, const SplitRatios& ratios);

/// Generates records until the split would hold exactly `train_images` training records.
std::vector<DatasetRecord> generate_for_train_target(const SyntheticWorld& world, ObjectRange range,
                                                     const std::vector<std::string>& held_out_words,
                                                     int train_images, const SplitRatios& ratios);

struct SplitManifest {
  std::vector<std::string> held_out_words;
  std::vector<std::string> known_words;
  std::vector<std::string> detection_classes;
  std::vector<std::string> train_ids, val_ids, test_ids;

  /// FNV-1a over the canonical manifest contents, as 16 hex digits.
  std::string hash() const;
  static SplitManifest from_split(const HeldOutSplit& split, const std::vector<std::string>& detection_classes);
  void save(const std::string& path) const;
  static SplitManifest load(const std::string& path);
};

HeldOutSplit apply_manifest(const std::vector<DatasetRecord>& records, const SplitManifest& manifest);

// ---------------------------------------------------------------------------
// Dataset files: one JSON object per line with image_id, feature,
// references, detections [{feature, label, score}].

std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(const std::string& line, int lineno = 0);
void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path);
std::vector<DatasetRecord> load_dataset(const std::string& path);

/// Image-level count of each object word across reference captions.
std::map<std::string, int> object_frequencies(const std::vector<DatasetRecord>& records,
                                              const std::vector<std::string>& objects);

}  // namespace dnoc

#endif  // DNOC_DATA_HPP
