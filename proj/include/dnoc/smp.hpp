#ifndef DNOC_SMP_HPP
#define DNOC_SMP_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dnoc/numerics.hpp"
#include "dnoc/vocab.hpp"

namespace dnoc {

enum class Addressing { softmax, raw_logit };

struct ModelOptions {
  Addressing addressing = Addressing::softmax;
  bool key_projection = false;   // learned N_f x N_f transform on detection features
  bool cell_from_image = false;  // also seed c0 from the image projection
};

struct ModelDims {
  int vocab = 0;    // N_t, including the special tokens
  int embed = 64;   // D_w
  int hidden = 64;  // N_h
  int image = 32;   // D_img
  int feature = 32; // N_f
};

/// Gate blocks of the stacked LSTM weights, in storage order.
enum class Gate : int { input = 0, forget = 1, output = 2, candidate = 3 };

template <typename Scalar>
struct LstmParams {
  Matrix<Scalar> weights;  // (4 N_h) x (D_w + N_h), acting on [x; h_prev]
  Vector<Scalar> bias;     // 4 N_h

  int hidden() const { return static_cast<int>(bias.size() / 4); }
  int input_size() const { return static_cast<int>(weights.cols()) - hidden(); }
  auto gate_weights(Gate g) { return weights.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto gate_weights(Gate g) const { return weights.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto gate_bias(Gate g) { return bias.segment(static_cast<int>(g) * hidden(), hidden()); }
  auto gate_bias(Gate g) const { return bias.segment(static_cast<int>(g) * hidden(), hidden()); }
};

/// All trainable parameters of the placeholder-aware decoder, including the
/// memory query transform (and the optional key projection).
template <typename Scalar>
struct SmpModel {
  Matrix<Scalar> embed;    // D_w x N_t, one column per token
  LstmParams<Scalar> lstm;
  Matrix<Scalar> out_w;    // N_t x N_h
  Vector<Scalar> out_b;    // N_t
  Matrix<Scalar> img_w;    // N_h x D_img
  Vector<Scalar> img_b;    // N_h
  Matrix<Scalar> query_w;  // N_f x N_h
  Matrix<Scalar> key_w;    // N_f x N_f, or 0 x 0 when the key projection is off
  ModelOptions options;

  ModelDims dims() const {
    return {static_cast<int>(embed.cols()), static_cast<int>(embed.rows()), lstm.hidden(),
            static_cast<int>(img_w.cols()), static_cast<int>(query_w.rows())};
  }

  static SmpModel zeros(const ModelDims& d, const ModelOptions& opts = {}) {
    SmpModel m;
    m.options = opts;
    m.embed = Matrix<Scalar>::Zero(d.embed, d.vocab);
    m.lstm.weights = Matrix<Scalar>::Zero(4 * d.hidden, d.embed + d.hidden);
    m.lstm.bias = Vector<Scalar>::Zero(4 * d.hidden);
    m.out_w = Matrix<Scalar>::Zero(d.vocab, d.hidden);
    m.out_b = Vector<Scalar>::Zero(d.vocab);
    m.img_w = Matrix<Scalar>::Zero(d.hidden, d.image);
    m.img_b = Vector<Scalar>::Zero(d.hidden);
    m.query_w = Matrix<Scalar>::Zero(d.feature, d.hidden);
    m.key_w = opts.key_projection ? Matrix<Scalar>::Zero(d.feature, d.feature) : Matrix<Scalar>();
    return m;
  }

  /// Weights uniform in [-scale, scale], zero biases except the forget gate
  /// (1.0); the key projection starts at identity.
  static SmpModel random(const ModelDims& d, const ModelOptions& opts, std::uint64_t seed,
                         double scale = 0.08) {
    SmpModel m = zeros(d, opts);
    std::mt19937_64 rng(seed);
    uniform_init(m.embed, rng, scale);
    uniform_init(m.lstm.weights, rng, scale);
    uniform_init(m.out_w, rng, scale);
    uniform_init(m.img_w, rng, scale);
    uniform_init(m.query_w, rng, scale);
    m.lstm.gate_bias(Gate::forget).setConstant(Scalar(1));
    if (opts.key_projection) m.key_w.setIdentity();
    return m;
  }

  SmpModel zeros_like() const { return zeros(dims(), options); }
};

/// Calls f(name, p_0, p_1, ...) for each parameter group across models of
/// identical shape.
template <typename F, typename... Models>
void for_each_param(F&& f, Models&... models) {
  f("embed", models.embed...);
  f("lstm.weights", models.lstm.weights...);
  f("lstm.bias", models.lstm.bias...);
  f("out.weights", models.out_w...);
  f("out.bias", models.out_b...);
  f("image.weights", models.img_w...);
  f("image.bias", models.img_b...);
  f("query.weights", models.query_w...);
  f("key.weights", models.key_w...);
}

template <typename Scalar>
Eigen::Index parameter_count(const SmpModel<Scalar>& model) {
  Eigen::Index n = 0;
  for_each_param([&n](const char*, const auto& p) { n += p.size(); }, model);
  return n;
}

template <typename Scalar>
Vector<Scalar> flatten(const SmpModel<Scalar>& model) {
  Vector<Scalar> out(parameter_count(model));
  Eigen::Index at = 0;
  for_each_param(
      [&](const char*, const auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) out(at++) = p.data()[i];
      },
      model);
  return out;
}

template <typename Scalar>
void unflatten(const Vector<Scalar>& flat, SmpModel<Scalar>& model) {
  if (flat.size() != parameter_count(model)) {
    throw ShapeError("smp", "unflatten: vector of " + std::to_string(flat.size()) + " entries for a model with " +
                                std::to_string(parameter_count(model)));
  }
  Eigen::Index at = 0;
  for_each_param(
      [&](const char*, auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = flat(at++);
      },
      model);
}

template <typename Scalar>
struct LstmState {
  Vector<Scalar> h;
  Vector<Scalar> c;
};

/// Post-activation gate values kept for backpropagation.
template <typename Scalar>
struct LstmGates {
  Vector<Scalar> input, forget, output, candidate;
  Vector<Scalar> cell_tanh;
};

template <typename Scalar>
struct LstmStep {
  LstmState<Scalar> state;
  LstmGates<Scalar> gates;
};

template <typename Scalar>
LstmStep<Scalar> lstm_step(const Vector<Scalar>& x, const LstmState<Scalar>& prev, const LstmParams<Scalar>& p) {
  const int H = p.hidden();
  if (x.size() != p.input_size() || prev.h.size() != H || prev.c.size() != H) {
    throw ShapeError("smp", "lstm_step: input " + shape_string(x) + ", h " + shape_string(prev.h) + ", c " +
                                shape_string(prev.c) + " against weights " + shape_string(p.weights));
  }
  Vector<Scalar> xh(x.size() + H);
  xh << x, prev.h;
  const Vector<Scalar> z = p.weights * xh + p.bias;

  LstmStep<Scalar> out;
  auto& g = out.gates;
  g.input = sigmoid(z.segment(0, H));
  g.forget = sigmoid(z.segment(H, H));
  g.output = sigmoid(z.segment(2 * H, H));
  g.candidate = z.segment(3 * H, H).array().tanh().matrix();
  out.state.c = g.forget.cwiseProduct(prev.c) + g.input.cwiseProduct(g.candidate);
  g.cell_tanh = out.state.c.array().tanh().matrix();
  out.state.h = g.output.cwiseProduct(g.cell_tanh);
  require_finite(out.state.c, "smp", "LSTM cell state");
  return out;
}

/// h0 = tanh(W_img f + b_img); c0 = 0, or c0 = h0 when the cell is image-conditioned.
template <typename Scalar>
LstmState<Scalar> init_state(const Vector<Scalar>& image_feature, const SmpModel<Scalar>& model) {
  if (image_feature.size() != model.img_w.cols()) {
    throw ShapeError("smp", "image feature " + shape_string(image_feature) + " against image projection " +
                                shape_string(model.img_w));
  }
  LstmState<Scalar> s;
  s.h = (model.img_w * image_feature + model.img_b).array().tanh().matrix();
  s.c = model.options.cell_from_image ? s.h : Vector<Scalar>::Zero(model.lstm.hidden());
  return s;
}

/// Teacher-forced unroll. Step s consumes input_ids[s] (<GO> first, then the
/// previous target) and states[s], producing states[s + 1] and logits[s],
/// which scores targets[s]. states[s].h is the h_{t-1} used by a memory query
/// for the token emitted at step s.
template <typename Scalar>
struct TeacherForcedPass {
  Vector<Scalar> image_feature;
  std::vector<TokenId> input_ids;
  std::vector<TokenId> targets;
  std::vector<LstmState<Scalar>> states;  // size steps() + 1
  std::vector<LstmGates<Scalar>> gates;
  std::vector<Vector<Scalar>> logits;
  bool truncated = false;

  int steps() const { return static_cast<int>(logits.size()); }
};

/// `targets` must already be rewritten; unrolling stops at the first <PAD>.
template <typename Scalar>
TeacherForcedPass<Scalar> forward_teacher_forced(const TokenSequence& targets, const Vector<Scalar>& image_feature,
                                                 const SmpModel<Scalar>& model, const Vocabulary& vocab,
                                                 int max_steps) {
  TeacherForcedPass<Scalar> pass;
  pass.image_feature = image_feature;
  for (TokenId id : targets) {
    if (id == vocab.pad()) break;
    if (id < 0 || id >= model.embed.cols()) throw IndexError("smp", "target id " + std::to_string(id) + " out of range");
    pass.targets.push_back(id);
  }
  if (static_cast<int>(pass.targets.size()) > max_steps) {
    pass.targets.resize(max_steps);
    pass.truncated = true;
  }
  pass.states.push_back(init_state(image_feature, model));
  TokenId prev = vocab.go();
  for (TokenId target : pass.targets) {
    pass.input_ids.push_back(prev);
    auto step = lstm_step<Scalar>(model.embed.col(prev), pass.states.back(), model.lstm);
    pass.logits.push_back(model.out_w * step.state.h + model.out_b);
    pass.states.push_back(std::move(step.state));
    pass.gates.push_back(std::move(step.gates));
    prev = target;
  }
  return pass;
}

template <typename Scalar>
struct SequenceLoss {
  Scalar loss = 0;
  std::vector<Vector<Scalar>> dlogits;
};

/// Sum over steps of the token cross-entropy; <PAD> targets contribute nothing.
template <typename Scalar>
SequenceLoss<Scalar> loss_smp(const std::vector<Vector<Scalar>>& logits, const TokenSequence& targets,
                              TokenId pad) {
  if (logits.size() > targets.size()) {
    throw ShapeError("smp", "loss_smp: " + std::to_string(logits.size()) + " logit vectors for " +
                                std::to_string(targets.size()) + " targets");
  }
  SequenceLoss<Scalar> out;
  out.dlogits.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (targets[t] == pad) {
      out.dlogits.push_back(Vector<Scalar>::Zero(logits[t].size()));
      continue;
    }
    auto ce = cross_entropy(logits[t], targets[t]);
    out.loss += ce.loss;
    out.dlogits.push_back(std::move(ce.grad));
  }
  return out;
}

/// Backpropagation through time. Accumulates into `grads`.
/// `dh_extra[s]`, when present, is an additional gradient on states[s].h
/// (memory queries read those states).
template <typename Scalar>
void smp_backward(const SmpModel<Scalar>& model, const TeacherForcedPass<Scalar>& pass,
                  const std::vector<Vector<Scalar>>& dlogits, const std::vector<Vector<Scalar>>& dh_extra,
                  SmpModel<Scalar>& grads, Scalar scale = Scalar(1)) {
  const int H = model.lstm.hidden();
  const int Dw = model.lstm.input_size();
  const int T = pass.steps();
  auto extra = [&](int s) -> bool { return s < static_cast<int>(dh_extra.size()) && dh_extra[s].size() == H; };

  Vector<Scalar> dh_next = Vector<Scalar>::Zero(H);
  Vector<Scalar> dc_next = Vector<Scalar>::Zero(H);
  Vector<Scalar> dz(4 * H);
  Vector<Scalar> xh(Dw + H);

  for (int s = T - 1; s >= 0; --s) {
    const auto& g = pass.gates[s];
    const auto& prev = pass.states[s];
    const Vector<Scalar> dlog = scale * dlogits[s];

    grads.out_w.noalias() += dlog * pass.states[s + 1].h.transpose();
    grads.out_b += dlog;
    Vector<Scalar> dh = model.out_w.transpose() * dlog + dh_next;
    if (extra(s + 1)) dh += scale * dh_extra[s + 1];

    const Vector<Scalar> d_out = dh.cwiseProduct(g.cell_tanh);
    const Vector<Scalar> dc =
        dh.cwiseProduct(g.output).cwiseProduct((Scalar(1) - g.cell_tanh.array().square()).matrix()) + dc_next;
    const Vector<Scalar> d_in = dc.cwiseProduct(g.candidate);
    const Vector<Scalar> d_cand = dc.cwiseProduct(g.input);
    const Vector<Scalar> d_forget = dc.cwiseProduct(prev.c);
    dc_next = dc.cwiseProduct(g.forget);

    dz.segment(0, H) = d_in.array() * g.input.array() * (Scalar(1) - g.input.array());
    dz.segment(H, H) = d_forget.array() * g.forget.array() * (Scalar(1) - g.forget.array());
    dz.segment(2 * H, H) = d_out.array() * g.output.array() * (Scalar(1) - g.output.array());
    dz.segment(3 * H, H) = d_cand.array() * (Scalar(1) - g.candidate.array().square());

    xh << model.embed.col(pass.input_ids[s]), prev.h;
    grads.lstm.weights.noalias() += dz * xh.transpose();
    grads.lstm.bias += dz;
    const Vector<Scalar> dxh = model.lstm.weights.transpose() * dz;
    grads.embed.col(pass.input_ids[s]) += dxh.head(Dw);
    dh_next = dxh.tail(H);
  }

  // Initial state.
  if (extra(0)) dh_next += scale * dh_extra[0];
  const Vector<Scalar>& h0 = pass.states[0].h;
  Vector<Scalar> dh0 = dh_next;
  if (model.options.cell_from_image) dh0 += dc_next;
  const Vector<Scalar> dpre = dh0.cwiseProduct((Scalar(1) - h0.array().square()).matrix());
  grads.img_w.noalias() += dpre * pass.image_feature.transpose();
  grads.img_b += dpre;
}

template <typename Scalar>
struct DecodeTrace {
  std::vector<TokenId> ids;
  std::vector<Vector<Scalar>> hiddens;  // h_{t-1} for every emitted token
  std::vector<int> placeholder_positions;
};

/// Greedy decoding from <GO>; emitted tokens (including <PL>) are fed back.
/// Stops after emitting <EOS> or after max_steps tokens.
template <typename Scalar>
DecodeTrace<Scalar> decode_greedy(const Vector<Scalar>& image_feature, const SmpModel<Scalar>& model,
                                  const Vocabulary& vocab, int max_steps) {
  DecodeTrace<Scalar> trace;
  if (max_steps <= 0) return trace;
  LstmState<Scalar> state = init_state(image_feature, model);
  TokenId prev = vocab.go();
  for (int t = 0; t < max_steps; ++t) {
    trace.hiddens.push_back(state.h);
    auto step = lstm_step<Scalar>(model.embed.col(prev), state, model.lstm);
    state = std::move(step.state);
    const Vector<Scalar> logits = model.out_w * state.h + model.out_b;
    const auto id = static_cast<TokenId>(argmax(logits));
    trace.ids.push_back(id);
    if (id == vocab.placeholder()) trace.placeholder_positions.push_back(t);
    if (id == vocab.eos()) break;
    prev = id;
  }
  return trace;
}

}  // namespace dnoc

#endif  // DNOC_SMP_HPP
