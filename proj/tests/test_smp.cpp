#include <cmath>

#include "doctest.h"
#include "dnoc/pipeline.hpp"
#include "test_util.hpp"

using namespace dnoc;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("scalar LSTM step matches a hand computation") {
  LstmParams<double> p;
  p.weights.resize(4, 2);
  // Rows: input, forget, output, candidate; columns: x, h_prev.
  p.weights << 0.5, -0.25, 0.1, 0.2, -0.3, 0.4, 0.7, 0.05;
  p.bias.resize(4);
  p.bias << 0.0, 1.0, 0.1, -0.2;
  LstmState<double> prev{VectorXd::Constant(1, 0.3), VectorXd::Constant(1, -0.6)};
  const double x = 0.8, h = 0.3, c = -0.6;
  const double i = sig(0.5 * x - 0.25 * h), f = sig(0.1 * x + 0.2 * h + 1.0);
  const double o = sig(-0.3 * x + 0.4 * h + 0.1), g = std::tanh(0.7 * x + 0.05 * h - 0.2);
  const double c_new = f * c + i * g;
  const double h_new = o * std::tanh(c_new);

  const auto step = lstm_step<double>(VectorXd::Constant(1, x), prev, p);
  CHECK(step.state.c(0) == doctest::Approx(c_new).epsilon(1e-14));
  CHECK(step.state.h(0) == doctest::Approx(h_new).epsilon(1e-14));
  CHECK(step.gates.forget(0) == doctest::Approx(f).epsilon(1e-14));
}

TEST_CASE("lstm_step rejects mismatched shapes") {
  const auto m = Model::random({9, 5, 6, 4, 6}, {}, 1);
  LstmState<double> prev{VectorXd::Zero(6), VectorXd::Zero(6)};
  CHECK_THROWS_AS(lstm_step<double>(VectorXd::Zero(4), prev, m.lstm), ShapeError);
  LstmState<double> bad{VectorXd::Zero(5), VectorXd::Zero(6)};
  CHECK_THROWS_AS(lstm_step<double>(VectorXd::Zero(5), bad, m.lstm), ShapeError);
}

TEST_CASE("random init: forget bias one, other biases zero, weights within scale") {
  const auto m = Model::random({9, 5, 6, 4, 6}, {Addressing::softmax, true, false}, 3);
  CHECK(m.lstm.gate_bias(Gate::forget).isOnes());
  CHECK(m.lstm.gate_bias(Gate::input).isZero());
  CHECK(m.out_b.isZero());
  CHECK(m.lstm.weights.cwiseAbs().maxCoeff() <= 0.08);
  CHECK(m.key_w.isIdentity());
  CHECK(Model::random({9, 5, 6, 4, 6}, {}, 3).key_w.size() == 0);
  CHECK(flatten(m) == flatten(Model::random({9, 5, 6, 4, 6}, {Addressing::softmax, true, false}, 3)));
}

TEST_CASE("flatten and unflatten are inverse") {
  const auto m = Model::random({9, 5, 6, 4, 6}, {}, 5);
  auto z = m.zeros_like();
  unflatten(flatten(m), z);
  CHECK(flatten(z) == flatten(m));
  CHECK(parameter_count(m) == flatten(m).size());
}

TEST_CASE("initial state comes from the image projection") {
  auto m = Model::random({9, 5, 6, 4, 6}, {}, 2);
  const VectorXd f = VectorXd::LinSpaced(4, -1.0, 1.0);
  const auto s = init_state(f, m);
  CHECK((s.h - (m.img_w * f + m.img_b).array().tanh().matrix()).norm() < 1e-15);
  CHECK(s.c.isZero());
  m.options.cell_from_image = true;
  CHECK(init_state(f, m).c == s.h);
  CHECK_THROWS_AS(init_state(VectorXd(VectorXd::Zero(3)), m), ShapeError);
}

TEST_CASE("teacher forcing feeds GO then the previous target and stops at PAD") {
  const auto v = testing::tiny_vocab();
  const auto m = Model::random({v.size(), 5, 6, 4, 6}, {}, 2);
  TokenSequence targets = v.encode({"a", "dog"});
  targets.push_back(v.eos());
  targets.push_back(v.pad());
  targets.push_back(v.pad());
  const auto pass = forward_teacher_forced<double>(targets, VectorXd::Ones(4), m, v, 15);
  CHECK(pass.steps() == 3);
  CHECK(pass.input_ids == TokenSequence{v.go(), *v.find("a"), *v.find("dog")});
  CHECK(pass.states.size() == 4);
  CHECK_FALSE(pass.truncated);

  const auto cut = forward_teacher_forced<double>(targets, VectorXd::Ones(4), m, v, 2);
  CHECK(cut.steps() == 2);
  CHECK(cut.truncated);
}

TEST_CASE("PAD targets contribute no loss") {
  const auto v = testing::tiny_vocab();
  std::vector<VectorXd> logits(3, VectorXd::LinSpaced(v.size(), 0.0, 1.0));
  const auto with_pad = loss_smp(logits, TokenSequence{0, 1, v.pad()}, v.pad());
  const auto without = loss_smp(std::vector<VectorXd>(logits.begin(), logits.begin() + 2), TokenSequence{0, 1}, v.pad());
  CHECK(with_pad.loss == doctest::Approx(without.loss).epsilon(1e-15));
  CHECK(with_pad.dlogits[2].isZero());
}

TEST_CASE("BPTT gradient matches finite differences for a single sequence") {
  const auto v = testing::tiny_vocab();
  for (bool cell_from_image : {false, true}) {
    const auto m = Model::random({v.size(), 5, 6, 4, 6}, {Addressing::softmax, false, cell_from_image}, 9, 0.5);
    TokenSequence targets = v.encode({"a", "cat", "a"});
    targets.push_back(v.eos());
    const VectorXd f = VectorXd::LinSpaced(4, -0.5, 0.7);
    auto loss_of = [&](const Model& model) {
      const auto pass = forward_teacher_forced(targets, f, model, v, 15);
      return loss_smp(pass.logits, pass.targets, v.pad()).loss;
    };
    const auto pass = forward_teacher_forced(targets, f, m, v, 15);
    const auto loss = loss_smp(pass.logits, pass.targets, v.pad());
    auto grads = m.zeros_like();
    smp_backward(m, pass, loss.dlogits, {}, grads);
    const auto flat = flatten(m);
    auto probe = m;
    const double err = finite_diff_check(
        [&](const VectorXd& p) {
          unflatten(p, probe);
          return loss_of(probe);
        },
        flat, flatten(grads), 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("greedy decoding stops after EOS and records the entering state") {
  const auto v = testing::tiny_vocab();
  auto m = Model::zeros({v.size(), 5, 6, 4, 6});
  m.out_b(*v.find("cat")) = 1.0;
  auto trace = decode_greedy<double>(VectorXd::Zero(4), m, v, 3);
  CHECK(trace.ids == TokenSequence{*v.find("cat"), *v.find("cat"), *v.find("cat")});
  CHECK(trace.hiddens.size() == 3);

  m.out_b(v.eos()) = 2.0;
  trace = decode_greedy<double>(VectorXd::Zero(4), m, v, 15);
  CHECK(trace.ids == TokenSequence{v.eos()});
  CHECK(trace.hiddens.size() == 1);
  CHECK(trace.hiddens[0].isZero());

  m.out_b.setZero();
  m.out_b(v.placeholder()) = 1.0;
  trace = decode_greedy<double>(VectorXd::Zero(4), m, v, 2);
  CHECK(trace.placeholder_positions == std::vector<int>{0, 1});
}

TEST_CASE("greedy ties resolve to the lowest token id") {
  const auto v = testing::tiny_vocab();
  const auto m = Model::zeros({v.size(), 5, 6, 4, 6});
  const auto trace = decode_greedy<double>(VectorXd::Zero(4), m, v, 1);
  CHECK(trace.ids == TokenSequence{0});
}
