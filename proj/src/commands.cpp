#include "dnoc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace dnoc {

namespace {

std::string join_words(const std::vector<std::string>& words, char sep) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += sep;
    out += w;
  }
  return out;
}

std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

ModelOptions model_options(const RunConfig& cfg) { return {cfg.addressing, cfg.key_projection, cfg.cell_from_image}; }

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions t;
  t.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  t.clip_norm = cfg.clip_norm;
  t.n_det = cfg.n_det;
  t.max_steps = cfg.max_steps;
  t.query_bptt = cfg.query_bptt;
  return t;
}

ModelDims model_dims(const RunConfig& cfg, const Workspace& ws) {
  ModelDims d;
  d.vocab = ws.vocab.size();
  d.embed = cfg.embed;
  d.hidden = cfg.hidden;
  if (ws.records.empty()) throw SchemaError("data", "dataset is empty");
  d.image = static_cast<int>(ws.records.front().feature.size());
  d.feature = -1;
  for (const auto& r : ws.records)
    if (!r.detections.empty()) {
      d.feature = static_cast<int>(r.detections.front().feature.size());
      break;
    }
  if (d.feature < 0) throw SchemaError("data", "dataset has no detections");
  return d;
}

DetectableSet detectable_for(const Workspace& ws, bool plain) {
  return plain ? empty_detectable(ws.vocab, ws.manifest.detection_classes) : ws.detectable();
}

Captioner make_captioner(const Model& model, const Workspace& ws, const DetectableSet& pd, const std::string& mode,
                         int n_det, int max_steps, std::uint64_t seed) {
  if (mode == "no-placeholder") {
    return [&model, &ws, max_steps](const DatasetRecord& r) { return plain_caption(r.feature, model, ws.vocab, max_steps); };
  }
  if (mode == "no-memory") {
    return [&model, &ws, &pd, n_det, max_steps, seed](const DatasetRecord& r) {
      return ablation_no_memory_caption(r.feature, r.detections, model, ws.vocab, pd, n_det, max_steps,
                                        image_seed(seed, r.image_id));
    };
  }
  return [&model, &ws, &pd, n_det, max_steps](const DatasetRecord& r) {
    return caption_image(r.feature, r.detections, model, ws.vocab, pd, n_det, max_steps);
  };
}

/// Checkpoint compatibility with the workspace and the requested mode.
Checkpoint load_compatible(const RunConfig& cfg, const Workspace& ws) {
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  const std::string want = is_plain_mode(cfg.mode) ? "plain" : "placeholder";
  if (ck.metadata["variant"] != want) {
    throw CheckpointError("checkpoint", cfg.checkpoint + " holds the '" + ck.metadata["variant"] +
                                            "' variant but mode " + cfg.mode + " needs '" + want + "'");
  }
  if (ck.metadata.count("vocab") && ck.metadata["vocab"] != join_words(ws.vocab.words(), '\n')) {
    throw CheckpointError("checkpoint", cfg.checkpoint + " was trained with a different vocabulary");
  }
  const ModelDims have = ck.model.dims();
  const ModelDims need = model_dims(cfg, ws);
  if (have.vocab != need.vocab || have.image != need.image || have.feature != need.feature) {
    throw CheckpointError("checkpoint", "dimension mismatch: checkpoint (vocab " + std::to_string(have.vocab) +
                                            ", image " + std::to_string(have.image) + ", feature " +
                                            std::to_string(have.feature) + ") against data (vocab " +
                                            std::to_string(need.vocab) + ", image " + std::to_string(need.image) +
                                            ", feature " + std::to_string(need.feature) + ")");
  }
  return ck;
}

F1Report evaluate_checkpoint(const RunConfig& cfg, const Workspace& ws, const Model& model) {
  const auto pd = detectable_for(ws, is_plain_mode(cfg.mode));
  const auto captioner = make_captioner(model, ws, pd, cfg.mode, cfg.n_det, cfg.max_steps, cfg.seed);
  F1Report report = evaluate_split(ws.eval_records(cfg.eval_split), captioner, ws.manifest.held_out_words,
                                   ws.manifest.known_words);
  report.metadata["mode"] = cfg.mode;
  report.metadata["n_det"] = std::to_string(cfg.n_det);
  report.metadata["split"] = cfg.eval_split;
  report.metadata["manifest_hash"] = ws.manifest.hash();
  return report;
}

}  // namespace

// ---------------------------------------------------------------------------

Workspace Workspace::load(const RunConfig& cfg) {
  Workspace ws;
  ws.records = load_dataset(cfg.dataset_path());
  ws.vocab = Vocabulary::load(cfg.vocab_path());
  ws.manifest = SplitManifest::load(cfg.split_path());
  ws.split = apply_manifest(ws.records, ws.manifest);
  return ws;
}

DetectableSet Workspace::detectable() const { return intersect_detectable(vocab, manifest.detection_classes); }

const std::vector<DatasetRecord>& Workspace::eval_records(const std::string& which) const {
  if (which == "test") return split.test;
  if (which == "val") return split.val;
  if (which == "train") return split.train;
  throw ConfigError("cli", "eval_split must be train, val or test, got '" + which + "'");
}

std::vector<TrainExample> make_examples(const std::vector<DatasetRecord>& records, const Vocabulary& vocab) {
  std::vector<TrainExample> out;
  for (const auto& r : records) {
    for (const auto& ref : r.references) {
      TrainExample ex;
      ex.feature = r.feature;
      ex.tokens = vocab.encode(ref);
      ex.tokens.push_back(vocab.eos());
      ex.detections = r.detections;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

bool is_plain_mode(const std::string& mode) { return mode == "no-placeholder"; }

SplitManifest cmd_gen_data(const GenDataOptions& opts, std::ostream& out) {
  WorldConfig wc = opts.world_config.empty() ? WorldConfig::parse_string(default_world_config())
                                             : WorldConfig::load(opts.world_config);
  if (opts.seed) wc.kv.set("seed", std::to_string(*opts.seed));
  const SyntheticWorld world = make_world(wc);
  const auto held_out = wc.held_out();
  for (const auto& w : held_out) {
    if (world.object_index(w) < 0) throw CoverageError("data", "held-out word '" + w + "' is not in the object inventory");
  }
  const ObjectRange range = wc.object_range();
  SplitRatios ratios;
  ratios.train = wc.kv.get_double("split_train", ratios.train);
  ratios.val = wc.kv.get_double("split_val", ratios.val);
  ratios.test = wc.kv.get_double("split_test", ratios.test);
  ratios.seed = world.seed;

  std::vector<DatasetRecord> records;
  if (wc.kv.has("n_images")) {
    records = generate_synthetic(world, static_cast<int>(wc.kv.get_int("n_images", 0)), range);
  } else {
    records = generate_for_train_target(world, range, held_out,
                                        static_cast<int>(wc.kv.get_int("train_images", 500)), ratios);
  }
  const HeldOutSplit split = build_heldout_split(records, held_out, ratios);
  std::vector<Sentence> train_sentences;
  for (const auto& r : split.train) train_sentences.insert(train_sentences.end(), r.references.begin(), r.references.end());
  const Vocabulary vocab = Vocabulary::build(train_sentences, 1);
  const SplitManifest manifest = SplitManifest::from_split(split, world.object_names());

  std::error_code ec;
  std::filesystem::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cli", "cannot create " + opts.out_dir + ": " + ec.message());
  const std::filesystem::path dir(opts.out_dir);
  save_dataset(records, (dir / "dataset.jsonl").string());
  vocab.save((dir / "vocab.txt").string());
  manifest.save((dir / "split.json").string());
  {
    std::ofstream cfg_out(dir / "world.cfg", std::ios::binary | std::ios::trunc);
    if (!cfg_out) throw IoError("cli", "cannot write world.cfg");
    for (const auto& [k, v] : wc.kv.entries()) cfg_out << k << " = " << v << '\n';
  }

  out << "images\t" << records.size() << "\ttrain\t" << split.train.size() << "\tval\t" << split.val.size()
      << "\ttest\t" << split.test.size() << "\tvocab\t" << vocab.size() << '\n';
  out << "object\tcategory\timages\theld_out\n";
  const auto freq = object_frequencies(records, world.object_names());
  for (const auto& obj : world.objects) {
    const bool held = std::find(held_out.begin(), held_out.end(), obj.name) != held_out.end();
    out << obj.name << '\t' << world.categories[obj.category] << '\t' << freq.at(obj.name) << '\t'
        << (held ? "yes" : "no") << '\n';
  }
  out << "manifest_hash\t" << manifest.hash() << '\n';
  return manifest;
}

TrainingResult cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Workspace ws = Workspace::load(cfg);
  const bool plain = is_plain_mode(cfg.mode);
  const auto pd = detectable_for(ws, plain);
  const auto examples = make_examples(ws.split.train, ws.vocab);
  if (examples.empty()) throw DomainError("cli", "training split is empty");

  TrainLoopOptions loop;
  loop.step = train_options(cfg);
  loop.epochs = cfg.epochs;
  loop.batch_size = cfg.batch_size;
  loop.seed = cfg.seed;
  const Model init = Model::random(model_dims(cfg, ws), model_options(cfg), cfg.seed);

  // The plain decoder can never name a held-out object, so it is selected on known objects.
  const std::string val_mode = plain ? "no-placeholder" : "dnoc";
  auto validate = [&](const Model& m) {
    if (ws.split.val.empty()) return 0.0;
    const auto captioner = make_captioner(m, ws, pd, val_mode, cfg.n_det, cfg.max_steps, cfg.seed);
    const auto report = evaluate_split(ws.split.val, captioner, ws.manifest.held_out_words, ws.manifest.known_words);
    return plain ? report.known_average_f1 : report.average_f1;
  };

  std::ofstream log_file;
  if (!cfg.train_log.empty()) {
    log_file.open(cfg.train_log, std::ios::binary | std::ios::trunc);
    if (!log_file) throw IoError("cli", "cannot write training log " + cfg.train_log);
  }
  const std::string header =
      "initial_total\t" + format_double(mean_loss(examples, init, ws.vocab, pd, loop.step, loop.batch_size)) +
      "\nepoch\tloss_smp\tloss_mem\ttotal\tval_f1\n";
  out << header;
  if (log_file) log_file << header;
  auto on_epoch = [&](const EpochLog& e) {
    const std::string line = std::to_string(e.epoch) + '\t' + format_double(e.loss_smp) + '\t' +
                             format_double(e.loss_mem) + '\t' + format_double(e.total) + '\t' +
                             format_double(e.val_f1) + '\n';
    out << line << std::flush;
    if (log_file) log_file << line << std::flush;
  };

  TrainingResult result = train_model(init, examples, ws.vocab, pd, loop, validate, on_epoch);
  std::map<std::string, std::string> meta;
  meta["variant"] = plain ? "plain" : "placeholder";
  meta["vocab"] = join_words(ws.vocab.words(), '\n');
  meta["manifest_hash"] = ws.manifest.hash();
  meta["best_epoch"] = std::to_string(result.best_epoch);
  meta["best_val_f1"] = format_double(result.best_val, "%.17g");
  save_checkpoint(cfg.checkpoint, result.best, meta);
  out << "best_epoch\t" << result.best_epoch << "\tval_f1\t" << format_double(result.best_val) << "\tcheckpoint\t"
      << cfg.checkpoint << '\n';
  return result;
}

Caption cmd_caption(const RunConfig& cfg, const std::string& image_id, std::ostream& out) {
  cfg.validate();
  const Workspace ws = Workspace::load(cfg);
  const Checkpoint ck = load_compatible(cfg, ws);
  const auto pd = detectable_for(ws, is_plain_mode(cfg.mode));
  auto it = std::find_if(ws.records.begin(), ws.records.end(),
                         [&](const DatasetRecord& r) { return r.image_id == image_id; });
  if (it == ws.records.end()) throw IndexError("cli", "no record with image id '" + image_id + "'");
  const Caption c = make_captioner(ck.model, ws, pd, cfg.mode, cfg.n_det, cfg.max_steps, cfg.seed)(*it);
  out << c.text() << '\n';
  return c;
}

F1Report cmd_eval(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Workspace ws = Workspace::load(cfg);
  const Checkpoint ck = load_compatible(cfg, ws);
  F1Report report = evaluate_checkpoint(cfg, ws, ck.model);
  print_report_table(report, out);
  if (!cfg.report.empty()) write_report(report, cfg.report);
  return report;
}

std::vector<std::pair<int, double>> cmd_sweep_ndet(const RunConfig& cfg, const std::vector<int>& values,
                                                   std::ostream& out) {
  cfg.validate();
  if (is_plain_mode(cfg.mode)) throw ConfigError("cli", "sweep-ndet needs a placeholder mode");
  for (int v : values)
    if (v < 1) throw DomainError("cli", "n_det values must be >= 1, got " + std::to_string(v));
  const Workspace ws = Workspace::load(cfg);
  const Checkpoint ck = load_compatible(cfg, ws);
  std::vector<std::pair<int, double>> table;
  out << "n_det\taverage_f1\n";
  for (int v : values) {
    RunConfig c = cfg;
    c.n_det = v;
    const double f1 = evaluate_checkpoint(c, ws, ck.model).average_f1;
    table.emplace_back(v, f1);
    out << v << '\t' << format_double(f1) << '\n';
  }
  return table;
}

}  // namespace dnoc
