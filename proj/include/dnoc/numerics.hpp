#ifndef DNOC_NUMERICS_HPP
#define DNOC_NUMERICS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "dnoc/errors.hpp"

namespace dnoc {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream out;
  out << "(" << m.rows() << "x" << m.cols() << ")";
  return out.str();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* module, const std::string& what) {
  if (!m.derived().allFinite()) throw NumericError(module, what + " contains non-finite values");
}

/// Matrix product with an explicit shape check; Eigen only asserts in debug builds.
template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("numerics", "matmul shape mismatch: " + shape_string(a) + " x " + shape_string(b));
  }
  Matrix<Scalar> out = a * b;
  return out;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

/// Numerically stable softmax (max-subtracted).
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) throw DomainError("numerics", "softmax of an empty vector");
  const Scalar shift = x.maxCoeff();
  Vector<Scalar> e = (x.array() - shift).exp().matrix();
  return e / e.sum();
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::MatrixBase<Derived>& x) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < x.size(); ++i) {
    if (x(i) > x(best)) best = i;
  }
  return best;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar loss;
  Vector<Scalar> grad;  // d loss / d logits
};

/// -log softmax(logits)[target], and softmax(logits) - one_hot(target).
template <typename Derived>
CrossEntropy<typename Derived::Scalar> cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                     Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  if (target < 0 || target >= logits.size()) {
    throw IndexError("numerics", "cross_entropy target " + std::to_string(target) +
                                     " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const Scalar shift = logits.maxCoeff();
  const Scalar log_z = shift + std::log((logits.array() - shift).exp().sum());
  CrossEntropy<Scalar> out{log_z - logits(target), softmax(logits)};
  out.grad(target) -= Scalar(1);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // classic L2: added to the gradient before the moments
};

/// One Adam update for `param` given moment buffers and the (already
/// incremented, 1-based) step count.
template <typename DP, typename DG, typename DM, typename DV>
void adam_update(Eigen::MatrixBase<DP>& param, const Eigen::MatrixBase<DG>& grad,
                 Eigen::MatrixBase<DM>& m, Eigen::MatrixBase<DV>& v, std::int64_t step,
                 const AdamConfig& cfg) {
  using Scalar = typename DP::Scalar;
  const Scalar wd = static_cast<Scalar>(cfg.weight_decay);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar bc1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(step));
  const Scalar bc2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(step));
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar eps = static_cast<Scalar>(cfg.eps);

  auto g = (grad.array() + wd * param.array()).eval();
  m.array() = b1 * m.array() + (Scalar(1) - b1) * g;
  v.array() = b2 * v.array() + (Scalar(1) - b2) * g.square();
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

template <typename Param>
struct AdamState {
  Param m;
  Param v;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const Param& like, AdamConfig cfg)
      : m(Param::Zero(like.rows(), like.cols())),
        v(Param::Zero(like.rows(), like.cols())),
        config(cfg) {}
};

template <typename Param, typename DG>
void adam_step(Param& param, const Eigen::MatrixBase<DG>& grad, AdamState<Param>& state) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      state.m.rows() != param.rows() || state.m.cols() != param.cols()) {
    throw ShapeError("numerics", "adam_step shape mismatch: param " + shape_string(param) +
                                     ", grad " + shape_string(grad) + ", state " +
                                     shape_string(state.m));
  }
  ++state.step;
  adam_update(param, grad, state.m, state.v, state.step, state.config);
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Largest per-entry relative error between `analytic` and central-difference
/// gradients of `loss_fn` at `params`. `loss_fn` receives the perturbed vector.
template <typename LossFn>
double finite_diff_check(LossFn&& loss_fn, const VectorXd& params, const VectorXd& analytic,
                         double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("numerics", "finite_diff_check step must be positive");
  if (params.size() != analytic.size()) {
    throw ShapeError("numerics", "finite_diff_check: params " + shape_string(params) +
                                     " vs gradient " + shape_string(analytic));
  }
  VectorXd probe = params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe(i) = params(i) + h;
    const double up = loss_fn(probe);
    probe(i) = params(i) - h;
    const double down = loss_fn(probe);
    probe(i) = params(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("numerics", "finite_diff_check: non-finite loss at entry " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(analytic(i)) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Initialization

template <typename Derived, typename Rng>
void uniform_init(Eigen::MatrixBase<Derived>& m, Rng& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      m(r, c) = static_cast<typename Derived::Scalar>(dist(rng));
}

}  // namespace dnoc

#endif  // DNOC_NUMERICS_HPP
