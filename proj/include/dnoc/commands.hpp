#ifndef DNOC_COMMANDS_HPP
#define DNOC_COMMANDS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnoc/checkpoint.hpp"
#include "dnoc/config.hpp"
#include "dnoc/data.hpp"
#include "dnoc/eval.hpp"
#include "dnoc/pipeline.hpp"

namespace dnoc {

/// Dataset, vocabulary and split manifest of one generated data directory.
struct Workspace {
  std::vector<DatasetRecord> records;
  Vocabulary vocab;
  SplitManifest manifest;
  HeldOutSplit split;

  static Workspace load(const RunConfig& cfg);
  DetectableSet detectable() const;  // W_pd for the placeholder variant
  const std::vector<DatasetRecord>& eval_records(const std::string& which) const;
};

/// One example per (image, reference); tokens end in <EOS>.
std::vector<TrainExample> make_examples(const std::vector<DatasetRecord>& records, const Vocabulary& vocab);

struct GenDataOptions {
  std::string world_config;  // empty: built-in world
  std::string out_dir = "data";
  std::optional<std::uint64_t> seed;
};

/// Writes dataset.jsonl, vocab.txt, split.json and world.cfg into out_dir.
SplitManifest cmd_gen_data(const GenDataOptions& opts, std::ostream& out);

/// "dnoc" and "no-memory" share the placeholder variant; "no-placeholder" trains the plain decoder.
bool is_plain_mode(const std::string& mode);

TrainingResult cmd_train(const RunConfig& cfg, std::ostream& out);

Caption cmd_caption(const RunConfig& cfg, const std::string& image_id, std::ostream& out);

F1Report cmd_eval(const RunConfig& cfg, std::ostream& out);

std::vector<std::pair<int, double>> cmd_sweep_ndet(const RunConfig& cfg, const std::vector<int>& values,
                                                   std::ostream& out);

}  // namespace dnoc

#endif  // DNOC_COMMANDS_HPP
