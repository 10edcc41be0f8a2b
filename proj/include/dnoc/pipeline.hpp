#ifndef DNOC_PIPELINE_HPP
#define DNOC_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dnoc/caption.hpp"
#include "dnoc/numerics.hpp"
#include "dnoc/objmem.hpp"
#include "dnoc/smp.hpp"
#include "dnoc/vocab.hpp"

namespace dnoc {

using Model = SmpModel<double>;
using Detection = DetectionResult<double>;

/// One (image, reference) training pair. `tokens` is the original encoded
/// reference ending in <EOS>; rewriting happens inside the training step.
struct TrainExample {
  VectorXd feature;
  TokenSequence tokens;
  std::vector<Detection> detections;
};

/// Sequences padded to a common length with <PAD>.
struct TrainBatch {
  std::vector<VectorXd> features;
  std::vector<TokenSequence> sequences;
  std::vector<std::vector<Detection>> detections;

  int size() const { return static_cast<int>(sequences.size()); }
};

TrainBatch make_batch(const std::vector<const TrainExample*>& examples, TokenId pad);
TrainBatch make_batch(const std::vector<TrainExample>& examples, TokenId pad);

struct TrainOptions {
  AdamConfig adam{};
  double clip_norm = 5.0;  // <= 0 disables clipping
  int n_det = 4;
  int max_steps = 15;
  bool query_bptt = true;  // memory-loss gradient flows into the decoder through h_{t-1}
};

struct StepLosses {
  double loss_smp = 0.0;
  double loss_mem = 0.0;
  double total = 0.0;
  int memory_reads = 0;
  int skipped_reads = 0;
  int truncated = 0;
};

/// Batch-mean of L_SM-P + L_M_obj. When `grads` is non-null it is overwritten
/// with the gradient of the total.
StepLosses compute_gradients(const TrainBatch& batch, const Model& model, const Vocabulary& vocab,
                             const DetectableSet& pd, const TrainOptions& opts, Model* grads);

/// Scales `grads` so its global L2 norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(Model& grads, double max_norm);

/// Adam over every parameter group of a model, one shared step counter.
class Optimizer {
 public:
  Optimizer(const Model& like, AdamConfig cfg) : m_(like.zeros_like()), v_(like.zeros_like()), cfg_(cfg) {}

  void step(Model& model, const Model& grads);
  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  Model m_, v_;
  std::int64_t step_ = 0;
  AdamConfig cfg_;
};

StepLosses train_step(const TrainBatch& batch, Model& model, const Vocabulary& vocab, const DetectableSet& pd,
                      Optimizer& optimizer, const TrainOptions& opts);

struct GroupCheck {
  std::string name;
  Eigen::Index entries = 0;
  double max_rel_error = 0.0;
};

/// Central-difference check of compute_gradients for every non-empty parameter group.
std::vector<GroupCheck> check_gradients(const TrainBatch& batch, const Model& model, const Vocabulary& vocab,
                                        const DetectableSet& pd, const TrainOptions& opts, double h = 1e-5);

/// A detectable set with no members, for training the plain decoder.
DetectableSet empty_detectable(const Vocabulary& vocab, const std::vector<std::string>& detection_classes = {});

// ---------------------------------------------------------------------------
// Captioning

/// Replaces each <PL> in `trace` with the READ result for its h_{t-1}.
Caption fill_placeholders(const DecodeTrace<double>& trace, const KeyValueObjectMemory<double>& memory,
                          const Model& model, const Vocabulary& vocab, const DetectableSet& pd);

/// Decode with placeholders, build the memory from the top-n_det detections,
/// fill the placeholders.
Caption caption_image(const VectorXd& feature, const std::vector<Detection>& detections, const Model& model,
                      const Vocabulary& vocab, const DetectableSet& pd, int n_det, int max_steps);

/// Placeholders filled by a seeded uniform draw among the top-n_det detection labels.
Caption ablation_no_memory_caption(const VectorXd& feature, const std::vector<Detection>& detections,
                                   const Model& model, const Vocabulary& vocab, const DetectableSet& pd, int n_det,
                                   int max_steps, std::uint64_t seed);

/// Per-image seed for the random-fill ablation, independent of evaluation order.
std::uint64_t image_seed(std::uint64_t seed, const std::string& image_id);

/// Plain decoding, no placeholder handling.
Caption plain_caption(const VectorXd& feature, const Model& model, const Vocabulary& vocab, int max_steps);

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int epoch = 0;
  double loss_smp = 0.0;
  double loss_mem = 0.0;
  double total = 0.0;
  double val_f1 = 0.0;
};

struct TrainLoopOptions {
  TrainOptions step{};
  int epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 7;
};

struct TrainingResult {
  Model best;
  int best_epoch = 0;
  double best_val = 0.0;
  double initial_total = 0.0;  // mean total loss over the training set before any update
  std::vector<EpochLog> epochs;
};

TrainingResult train_model(Model model, const std::vector<TrainExample>& examples, const Vocabulary& vocab,
                           const DetectableSet& pd, const TrainLoopOptions& opts,
                           const std::function<double(const Model&)>& validate,
                           const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean total loss over `examples`, evaluated in batches without updates.
double mean_loss(const std::vector<TrainExample>& examples, const Model& model, const Vocabulary& vocab,
                 const DetectableSet& pd, const TrainOptions& opts, int batch_size);

}  // namespace dnoc

#endif  // DNOC_PIPELINE_HPP
