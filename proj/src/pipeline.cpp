#include "dnoc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dnoc {

TrainBatch make_batch(const std::vector<const TrainExample*>& examples, TokenId pad) {
  TrainBatch batch;
  std::size_t longest = 0;
  for (const auto* ex : examples) longest = std::max(longest, ex->tokens.size());
  for (const auto* ex : examples) {
    if (!batch.features.empty() && ex->feature.size() != batch.features.front().size()) {
      throw ShapeError("pipeline", "batch features differ in dimension");
    }
    batch.features.push_back(ex->feature);
    TokenSequence seq = ex->tokens;
    seq.resize(longest, pad);
    batch.sequences.push_back(std::move(seq));
    batch.detections.push_back(ex->detections);
  }
  return batch;
}

TrainBatch make_batch(const std::vector<TrainExample>& examples, TokenId pad) {
  std::vector<const TrainExample*> ptrs;
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return make_batch(ptrs, pad);
}

StepLosses compute_gradients(const TrainBatch& batch, const Model& model, const Vocabulary& vocab,
                             const DetectableSet& pd, const TrainOptions& opts, Model* grads) {
  StepLosses out;
  if (batch.size() == 0) return out;
  if (grads) *grads = model.zeros_like();
  const double scale = 1.0 / batch.size();

  for (int b = 0; b < batch.size(); ++b) {
    TokenSequence original;
    for (TokenId id : batch.sequences[b]) {
      if (id == vocab.pad()) break;
      original.push_back(id);
    }
    const TokenSequence targets = rewrite_targets(original, pd);
    const auto pass = forward_teacher_forced(targets, batch.features[b], model, vocab, opts.max_steps);
    if (pass.truncated) {
      ++out.truncated;
      original.resize(pass.steps());
    }
    const auto smp_loss = loss_smp(pass.logits, pass.targets, vocab.pad());
    out.loss_smp += scale * smp_loss.loss;

    const std::vector<int> a = mask_weights(original, pd);
    MemoryLoss<double> mem_loss;
    const bool any_masked = std::any_of(a.begin(), a.end(), [](int v) { return v != 0; });
    if (any_masked && pd.num_classes() > 0) {
      const auto memory = build_memory(batch.detections[b], opts.n_det, pd.num_classes());
      std::vector<VectorXd> hiddens;
      hiddens.reserve(pass.steps());
      for (int s = 0; s < pass.steps(); ++s) hiddens.push_back(pass.states[s].h);
      mem_loss = loss_memory(hiddens, original, a, pd, memory, model.query_w, model.options.addressing,
                             model.key_w);
      out.loss_mem += scale * mem_loss.loss;
      out.memory_reads += mem_loss.reads;
      out.skipped_reads += mem_loss.skipped;
    } else if (any_masked) {
      out.skipped_reads += static_cast<int>(std::count(a.begin(), a.end(), 1));
    }

    if (grads) {
      static const std::vector<VectorXd> kNoExtra;
      const auto& extra = (opts.query_bptt && mem_loss.reads > 0) ? mem_loss.dhidden : kNoExtra;
      smp_backward(model, pass, smp_loss.dlogits, extra, *grads, scale);
      if (mem_loss.reads > 0) {
        grads->query_w += scale * mem_loss.dquery_w;
        if (grads->key_w.size() != 0 && mem_loss.dkey_w.size() != 0) grads->key_w += scale * mem_loss.dkey_w;
      }
    }
  }
  out.total = out.loss_smp + out.loss_mem;
  return out;
}

double clip_global_norm(Model& grads, double max_norm) {
  double sq = 0.0;
  for_each_param([&sq](const char*, const auto& g) { sq += g.squaredNorm(); }, grads);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for_each_param([k](const char*, auto& g) { g *= k; }, grads);
  }
  return norm;
}

void Optimizer::step(Model& model, const Model& grads) {
  ++step_;
  for_each_param(
      [this](const char*, auto& p, const auto& g, auto& m, auto& v) {
        if (p.size() != 0) adam_update(p, g, m, v, step_, cfg_);
      },
      model, grads, m_, v_);
}

StepLosses train_step(const TrainBatch& batch, Model& model, const Vocabulary& vocab, const DetectableSet& pd,
                      Optimizer& optimizer, const TrainOptions& opts) {
  Model grads;
  StepLosses losses = compute_gradients(batch, model, vocab, pd, opts, &grads);
  if (!std::isfinite(losses.total)) throw NumericError("pipeline", "non-finite training loss");
  clip_global_norm(grads, opts.clip_norm);
  optimizer.step(model, grads);
  return losses;
}

namespace {

// Pointer and length of a named parameter group.
std::pair<double*, Eigen::Index> group_span(Model& model, const std::string& name) {
  std::pair<double*, Eigen::Index> out{nullptr, 0};
  for_each_param(
      [&](const char* n, auto& p) {
        if (name == n) out = {p.data(), p.size()};
      },
      model);
  return out;
}

}  // namespace

std::vector<GroupCheck> check_gradients(const TrainBatch& batch, const Model& model, const Vocabulary& vocab,
                                        const DetectableSet& pd, const TrainOptions& opts, double h) {
  Model analytic;
  compute_gradients(batch, model, vocab, pd, opts, &analytic);

  std::vector<std::string> names;
  for_each_param([&names](const char* n, const auto& p) { if (p.size() != 0) names.emplace_back(n); }, model);

  std::vector<GroupCheck> out;
  for (const auto& name : names) {
    Model probe = model;
    auto [probe_data, n] = group_span(probe, name);
    auto [grad_data, gn] = group_span(analytic, name);
    const VectorXd base = Eigen::Map<const VectorXd>(probe_data, n);
    const VectorXd grad = Eigen::Map<const VectorXd>(grad_data, gn);
    auto loss_fn = [&, data = probe_data, n = n](const VectorXd& v) {
      Eigen::Map<VectorXd>(data, n) = v;
      return compute_gradients(batch, probe, vocab, pd, opts, nullptr).total;
    };
    out.push_back({name, n, finite_diff_check(loss_fn, base, grad, h)});
  }
  return out;
}

DetectableSet empty_detectable(const Vocabulary& vocab, const std::vector<std::string>& detection_classes) {
  DetectableSet pd;
  pd.placeholder = vocab.placeholder();
  for (const auto& name : detection_classes) pd.classes.push_back({name, std::nullopt});
  return pd;
}

std::uint64_t image_seed(std::uint64_t seed, const std::string& image_id) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char ch : image_id) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace {

template <typename FillFn>
Caption render_trace(const DecodeTrace<double>& trace, const Vocabulary& vocab, FillFn&& fill) {
  Caption caption;
  for (std::size_t t = 0; t < trace.ids.size(); ++t) {
    const TokenId id = trace.ids[t];
    if (id == vocab.eos()) break;
    if (id == vocab.go() || id == vocab.pad()) continue;
    if (id == vocab.placeholder()) {
      caption.tokens.push_back(fill(t, caption));
    } else {
      caption.tokens.push_back(vocab.word(id));
    }
  }
  return caption;
}

}  // namespace

Caption fill_placeholders(const DecodeTrace<double>& trace, const KeyValueObjectMemory<double>& memory,
                          const Model& model, const Vocabulary& vocab, const DetectableSet& pd) {
  return render_trace(trace, vocab, [&](std::size_t t, Caption& caption) -> std::string {
    if (memory.empty()) {
      ++caption.placeholder_count_unfilled;
      return tokens::kPlaceholder;
    }
    const VectorXd q = make_query(trace.hiddens[t], model.query_w);
    auto result = memory_read(q, memory, model.options.addressing, model.key_w);
    ++caption.memory_reads;
    return describe(result, pd).argmax_word;
  });
}

Caption caption_image(const VectorXd& feature, const std::vector<Detection>& detections, const Model& model,
                      const Vocabulary& vocab, const DetectableSet& pd, int n_det, int max_steps) {
  const auto trace = decode_greedy(feature, model, vocab, max_steps);
  const auto memory = build_memory(detections, n_det, std::max(pd.num_classes(), 1));
  return fill_placeholders(trace, memory, model, vocab, pd);
}

Caption ablation_no_memory_caption(const VectorXd& feature, const std::vector<Detection>& detections,
                                   const Model& model, const Vocabulary& vocab, const DetectableSet& pd, int n_det,
                                   int max_steps, std::uint64_t seed) {
  const auto trace = decode_greedy(feature, model, vocab, max_steps);
  std::vector<int> labels;
  for (const auto& det : select_top_detections(detections, n_det)) labels.push_back(det.label);
  std::mt19937_64 rng(seed);
  return render_trace(trace, vocab, [&](std::size_t, Caption& caption) -> std::string {
    if (labels.empty()) {
      ++caption.placeholder_count_unfilled;
      return tokens::kPlaceholder;
    }
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    return pd.classes.at(labels[pick(rng)]).name;
  });
}

Caption plain_caption(const VectorXd& feature, const Model& model, const Vocabulary& vocab, int max_steps) {
  const auto trace = decode_greedy(feature, model, vocab, max_steps);
  return render_trace(trace, vocab, [&](std::size_t, Caption& caption) -> std::string {
    ++caption.placeholder_count_unfilled;
    return tokens::kPlaceholder;
  });
}

// ---------------------------------------------------------------------------

double mean_loss(const std::vector<TrainExample>& examples, const Model& model, const Vocabulary& vocab,
                 const DetectableSet& pd, const TrainOptions& opts, int batch_size) {
  if (examples.empty()) return 0.0;
  double sum = 0.0;
  const std::size_t step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t begin = 0; begin < examples.size(); begin += step) {
    std::vector<const TrainExample*> ptrs;
    for (std::size_t i = begin; i < std::min(examples.size(), begin + step); ++i) ptrs.push_back(&examples[i]);
    const auto losses = compute_gradients(make_batch(ptrs, vocab.pad()), model, vocab, pd, opts, nullptr);
    sum += losses.total * static_cast<double>(ptrs.size());
  }
  return sum / static_cast<double>(examples.size());
}

TrainingResult train_model(Model model, const std::vector<TrainExample>& examples, const Vocabulary& vocab,
                           const DetectableSet& pd, const TrainLoopOptions& opts,
                           const std::function<double(const Model&)>& validate,
                           const std::function<void(const EpochLog&)>& on_epoch) {
  if (examples.empty()) throw DomainError("pipeline", "no training examples");
  TrainingResult result;
  result.initial_total = mean_loss(examples, model, vocab, pd, opts.step, opts.batch_size);
  result.best = model;

  Optimizer optimizer(model, opts.step.adam);
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(std::max(opts.batch_size, 1));

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      std::vector<const TrainExample*> ptrs;
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch_size); ++i)
        ptrs.push_back(&examples[order[i]]);
      const auto losses = train_step(make_batch(ptrs, vocab.pad()), model, vocab, pd, optimizer, opts.step);
      log.loss_smp += losses.loss_smp;
      log.loss_mem += losses.loss_mem;
      log.total += losses.total;
      ++batches;
    }
    log.loss_smp /= batches;
    log.loss_mem /= batches;
    log.total /= batches;
    log.val_f1 = validate ? validate(model) : 0.0;
    if (epoch == 1 || log.val_f1 > result.best_val) {
      result.best = model;
      result.best_val = log.val_f1;
      result.best_epoch = epoch;
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (opts.epochs <= 0 && validate) result.best_val = validate(model);
  return result;
}

}  // namespace dnoc
