#ifndef DNOC_OBJMEM_HPP
#define DNOC_OBJMEM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dnoc/numerics.hpp"
#include "dnoc/smp.hpp"
#include "dnoc/vocab.hpp"

namespace dnoc {

/// One detector output: appearance feature (key), class index (value, one-hot
/// on demand) and confidence.
template <typename Scalar>
struct DetectionResult {
  Vector<Scalar> feature;
  int label = 0;
  double score = 0.0;

  friend bool operator==(const DetectionResult& a, const DetectionResult& b) {
    return a.label == b.label && a.score == b.score && a.feature.size() == b.feature.size() &&
           a.feature == b.feature;
  }
};

/// Per-image slot store. Keys are stacked detection features (n x N_f) and
/// values stacked one-hot class labels (n x N_D), in insertion order.
template <typename Scalar>
class KeyValueObjectMemory {
 public:
  KeyValueObjectMemory(int capacity, int num_classes) : capacity_(capacity), num_classes_(num_classes) {
    if (capacity < 0 || num_classes <= 0) {
      throw DomainError("objmem", "memory needs capacity >= 0 and at least one class");
    }
  }

  void write(const DetectionResult<Scalar>& det) {
    if (size() >= capacity_) {
      throw CapacityError("objmem", "memory full: capacity " + std::to_string(capacity_));
    }
    if (det.label < 0 || det.label >= num_classes_) {
      throw IndexError("objmem", "detection label " + std::to_string(det.label) + " outside " +
                                     std::to_string(num_classes_) + " classes");
    }
    if (size() > 0 && det.feature.size() != keys_.cols()) {
      throw ShapeError("objmem", "detection feature " + shape_string(det.feature) + " against keys " +
                                     shape_string(keys_));
    }
    require_finite(det.feature, "objmem", "detection feature");
    const Eigen::Index n = size();
    keys_.conservativeResize(n + 1, det.feature.size());
    keys_.row(n) = det.feature.transpose();
    values_.conservativeResize(n + 1, num_classes_);
    values_.row(n).setZero();
    values_(n, det.label) = Scalar(1);
    labels_.push_back(det.label);
  }

  int size() const { return static_cast<int>(labels_.size()); }
  bool empty() const { return labels_.empty(); }
  int capacity() const { return capacity_; }
  int num_classes() const { return num_classes_; }
  bool has_class(int label) const { return std::find(labels_.begin(), labels_.end(), label) != labels_.end(); }
  const Matrix<Scalar>& keys() const { return keys_; }
  const Matrix<Scalar>& values() const { return values_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  int capacity_;
  int num_classes_;
  Matrix<Scalar> keys_;
  Matrix<Scalar> values_;
  std::vector<int> labels_;
};

template <typename Scalar>
KeyValueObjectMemory<Scalar> memory_write(KeyValueObjectMemory<Scalar> mem, const DetectionResult<Scalar>& det) {
  mem.write(det);
  return mem;
}

/// Indices of the n highest-scoring detections; equal scores keep input order.
template <typename Scalar>
std::vector<int> top_detection_indices(const std::vector<DetectionResult<Scalar>>& dets, int n_det) {
  std::vector<int> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return dets[a].score > dets[b].score; });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(n_det, 0))));
  return idx;
}

template <typename Scalar>
std::vector<DetectionResult<Scalar>> select_top_detections(const std::vector<DetectionResult<Scalar>>& dets,
                                                           int n_det) {
  std::vector<DetectionResult<Scalar>> out;
  for (int i : top_detection_indices(dets, n_det)) out.push_back(dets[i]);
  return out;
}

template <typename Scalar>
KeyValueObjectMemory<Scalar> build_memory(const std::vector<DetectionResult<Scalar>>& dets, int n_det,
                                          int num_classes) {
  KeyValueObjectMemory<Scalar> mem(std::max(n_det, 0), num_classes);
  for (const auto& det : select_top_detections(dets, n_det)) mem.write(det);
  return mem;
}

/// q = W_query h_prev
template <typename Scalar>
Vector<Scalar> make_query(const Vector<Scalar>& h_prev, const Matrix<Scalar>& query_w) {
  if (query_w.cols() != h_prev.size()) {
    throw ShapeError("objmem", "make_query: transform " + shape_string(query_w) + " against hidden " +
                                   shape_string(h_prev));
  }
  return query_w * h_prev;
}

template <typename Scalar>
struct QueryResult {
  Vector<Scalar> similarities;  // q K^T, one per slot
  Vector<Scalar> weights;       // addressing weights over slots
  Vector<Scalar> logits;        // (q K^T) V over classes
  Vector<Scalar> distribution;  // over classes, sums to 1
  int argmax_class = 0;
  std::string argmax_word;      // filled by describe()
};

/// Effective keys: raw features, or features mapped through the key projection.
template <typename Scalar>
Matrix<Scalar> effective_keys(const KeyValueObjectMemory<Scalar>& mem, const Matrix<Scalar>& key_w) {
  if (key_w.size() == 0) return mem.keys();
  return mem.keys() * key_w.transpose();
}

/// Content-based READ. In softmax addressing the slot weights are
/// softmax(q K^T) and the class distribution is their value-weighted sum; in
/// raw-logit addressing (q K^T) V is treated as class logits.
template <typename Scalar>
QueryResult<Scalar> memory_read(const Vector<Scalar>& q, const KeyValueObjectMemory<Scalar>& mem,
                                Addressing addressing = Addressing::softmax,
                                const Matrix<Scalar>& key_w = Matrix<Scalar>()) {
  if (mem.empty()) throw EmptyMemoryError("objmem", "READ on an empty memory");
  const Matrix<Scalar> keys = effective_keys(mem, key_w);
  if (keys.cols() != q.size()) {
    throw ShapeError("objmem", "query " + shape_string(q) + " against keys " + shape_string(keys));
  }
  QueryResult<Scalar> r;
  r.similarities = keys * q;
  r.logits = mem.values().transpose() * r.similarities;
  if (addressing == Addressing::softmax) {
    r.weights = softmax(r.similarities);
    r.distribution = mem.values().transpose() * r.weights;
  } else {
    r.weights = r.similarities;
    r.distribution = softmax(r.logits);
  }
  r.argmax_class = static_cast<int>(argmax(r.distribution));
  return r;
}

template <typename Scalar>
QueryResult<Scalar>& describe(QueryResult<Scalar>& r, const DetectableSet& pd) {
  if (r.argmax_class < pd.num_classes()) r.argmax_word = pd.classes[r.argmax_class].name;
  return r;
}

template <typename Scalar>
struct ReadLoss {
  Scalar loss = 0;
  Vector<Scalar> dq;
  Matrix<Scalar> dkey_w;  // empty unless the key projection is on
};

/// Cross-entropy of a single READ against `target_class`, with gradients for
/// the query and the key projection. The class must be present in memory.
template <typename Scalar>
ReadLoss<Scalar> read_loss(const Vector<Scalar>& q, const KeyValueObjectMemory<Scalar>& mem, int target_class,
                           Addressing addressing, const Matrix<Scalar>& key_w = Matrix<Scalar>()) {
  if (mem.empty()) throw EmptyMemoryError("objmem", "READ on an empty memory");
  if (!mem.has_class(target_class)) {
    throw DomainError("objmem", "target class " + std::to_string(target_class) + " is not in memory");
  }
  const Matrix<Scalar> keys = effective_keys(mem, key_w);
  const Vector<Scalar> s = keys * q;
  const auto& V = mem.values();
  ReadLoss<Scalar> out;
  Vector<Scalar> ds(s.size());

  if (addressing == Addressing::softmax) {
    // -log sum_{i in c} softmax(s)_i, evaluated in log space.
    const Scalar shift = s.maxCoeff();
    const Scalar lse_all = shift + std::log((s.array() - shift).exp().sum());
    Scalar shift_c = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (V(i, target_class) > 0) shift_c = std::max(shift_c, s(i));
    Scalar sum_c = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (V(i, target_class) > 0) sum_c += std::exp(s(i) - shift_c);
    const Scalar lse_c = shift_c + std::log(sum_c);
    out.loss = lse_all - lse_c;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const Scalar alpha = std::exp(s(i) - lse_all);
      const Scalar posterior = V(i, target_class) > 0 ? std::exp(s(i) - lse_c) : Scalar(0);
      ds(i) = alpha - posterior;
    }
  } else {
    auto ce = cross_entropy(Vector<Scalar>(V.transpose() * s), target_class);
    out.loss = ce.loss;
    ds = V * ce.grad;
  }
  out.dq = keys.transpose() * ds;
  if (key_w.size() != 0) out.dkey_w = (ds * q.transpose()).transpose() * mem.keys();
  return out;
}

template <typename Scalar>
struct MemoryLoss {
  Scalar loss = 0;
  std::vector<Vector<Scalar>> dhidden;  // per step s: d loss / d h_{t-1}; empty when unused
  Matrix<Scalar> dquery_w;
  Matrix<Scalar> dkey_w;
  int reads = 0;
  int skipped = 0;  // masked steps whose class is unknown to the detector or absent from memory
};

/// sum_t a_t CE(READ(W_query h_{t-1}), class(w_t)) over a sentence.
/// `hiddens[t]` is the state entering step t; `original` is the un-rewritten
/// target sequence aligned with `a`.
template <typename Scalar>
MemoryLoss<Scalar> loss_memory(const std::vector<Vector<Scalar>>& hiddens, const TokenSequence& original,
                               const std::vector<int>& a, const DetectableSet& pd,
                               const KeyValueObjectMemory<Scalar>& mem, const Matrix<Scalar>& query_w,
                               Addressing addressing, const Matrix<Scalar>& key_w = Matrix<Scalar>()) {
  if (a.size() != original.size()) {
    throw ShapeError("objmem", "mask of length " + std::to_string(a.size()) + " for a sentence of " +
                                   std::to_string(original.size()));
  }
  MemoryLoss<Scalar> out;
  out.dquery_w = Matrix<Scalar>::Zero(query_w.rows(), query_w.cols());
  if (key_w.size() != 0) out.dkey_w = Matrix<Scalar>::Zero(key_w.rows(), key_w.cols());
  out.dhidden.resize(hiddens.size());
  const std::size_t steps = std::min(a.size(), hiddens.size());
  for (std::size_t t = 0; t < steps; ++t) {
    if (a[t] == 0) continue;
    const auto cls = pd.class_of(original[t]);
    if (!cls || mem.empty() || !mem.has_class(*cls)) {
      ++out.skipped;
      continue;
    }
    const Vector<Scalar> q = make_query(hiddens[t], query_w);
    auto r = read_loss(q, mem, *cls, addressing, key_w);
    out.loss += r.loss;
    out.dquery_w.noalias() += r.dq * hiddens[t].transpose();
    out.dhidden[t] = query_w.transpose() * r.dq;
    if (key_w.size() != 0) out.dkey_w += r.dkey_w;
    ++out.reads;
  }
  return out;
}

}  // namespace dnoc

#endif  // DNOC_OBJMEM_HPP
