#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "vulnhound/error.hpp"
#include "vulnhound/evalkit.hpp"
#include "vulnhound/random.hpp"

// Single-layer LSTM, inverted dropout on the final hidden state, and one
// sigmoid output unit. Sequences are processed in batches laid out column-wise:
// step t of sample k lives in column t * batch_size + k.
namespace vulnhound::rnn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

// Gate blocks are stacked in this order inside W, U and b.
enum Gate : int { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

template <typename S>
struct LstmParams {
  Matrix<S> W;  // 4*hidden x dim
  Matrix<S> U;  // 4*hidden x hidden
  Vector<S> b;  // 4*hidden
  Vector<S> w;  // dense weights
  S bias = S(0);

  Index dim() const { return W.cols(); }
  Index hidden() const { return U.cols(); }

  auto W_gate(Gate g) { return W.middleRows(g * hidden(), hidden()); }
  auto W_gate(Gate g) const { return W.middleRows(g * hidden(), hidden()); }
  auto U_gate(Gate g) { return U.middleRows(g * hidden(), hidden()); }
  auto U_gate(Gate g) const { return U.middleRows(g * hidden(), hidden()); }
  auto b_gate(Gate g) { return b.segment(g * hidden(), hidden()); }
  auto b_gate(Gate g) const { return b.segment(g * hidden(), hidden()); }

  static LstmParams zeros(Index dim, Index hidden) {
    LstmParams p;
    p.W = Matrix<S>::Zero(4 * hidden, dim);
    p.U = Matrix<S>::Zero(4 * hidden, hidden);
    p.b = Vector<S>::Zero(4 * hidden);
    p.w = Vector<S>::Zero(hidden);
    return p;
  }

  // Weights uniform in [-scale, scale]; biases zero except the forget gate.
  static LstmParams initial(Index dim, Index hidden, Rng& rng, double scale = 0.08, double forget_bias = 1.0) {
    LstmParams p = zeros(dim, hidden);
    for (Matrix<S>* m : {&p.W, &p.U})
      for (Index i = 0; i < m->size(); ++i) m->data()[i] = S(rng.uniform(-scale, scale));
    for (Index i = 0; i < p.w.size(); ++i) p.w[i] = S(rng.uniform(-scale, scale));
    p.b_gate(kForget).setConstant(S(forget_bias));
    return p;
  }

  template <typename T>
  LstmParams<T> cast() const {
    return LstmParams<T>{W.template cast<T>(), U.template cast<T>(), b.template cast<T>(), w.template cast<T>(),
                         T(bias)};
  }

  // Flat views of W, U, b, w and the dense bias, in that order.
  std::array<std::span<S>, 5> tensors() {
    return {std::span<S>(W.data(), W.size()), std::span<S>(U.data(), U.size()), std::span<S>(b.data(), b.size()),
            std::span<S>(w.data(), w.size()), std::span<S>(&bias, 1)};
  }
  std::array<std::span<const S>, 5> tensors() const {
    return {std::span<const S>(W.data(), W.size()), std::span<const S>(U.data(), U.size()),
            std::span<const S>(b.data(), b.size()), std::span<const S>(w.data(), w.size()),
            std::span<const S>(&bias, 1)};
  }

  bool all_finite() const {
    using std::isfinite;
    return W.allFinite() && U.allFinite() && b.allFinite() && w.allFinite() && isfinite(bias);
  }

  bool shaped_like(const LstmParams& o) const {
    return W.rows() == o.W.rows() && W.cols() == o.W.cols() && U.rows() == o.U.rows() && w.size() == o.w.size();
  }

  bool operator==(const LstmParams& o) const {
    return shaped_like(o) && W == o.W && U == o.U && b == o.b && w == o.w && bias == o.bias;
  }
};

// One input sequence in binary32 storage.
struct Sample {
  Eigen::MatrixXf x;               // dim x steps
  std::vector<std::uint8_t> mask;  // 1 marks a real step; empty means all steps are real
  std::uint8_t label = 0;

  Index steps() const { return x.cols(); }
  bool real(Index t) const { return mask.empty() || mask[static_cast<std::size_t>(t)] != 0; }
};

template <typename S>
struct Batch {
  Matrix<S> x;                                            // dim x (steps * size)
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // size x steps
  Vector<S> labels;

  Index size() const { return labels.size(); }
  Index steps() const { return mask.cols(); }
  auto step(Index t) const { return x.middleCols(t * size(), size()); }
};

// Shorter samples are padded with masked steps up to the longest one.
template <typename S>
Batch<S> make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const Index B = static_cast<Index>(indices.size());
  const Index dim = samples[indices[0]].x.rows();
  Index T = 0;
  for (std::size_t i : indices) {
    const Sample& s = samples[i];
    if (s.x.rows() != dim)
      throw DataError("sample dim " + std::to_string(s.x.rows()) + " differs from " + std::to_string(dim));
    if (!s.mask.empty() && static_cast<Index>(s.mask.size()) != s.steps())
      throw DataError("mask length differs from sequence length");
    if (!s.x.allFinite()) throw DataError("non-finite input vector");
    T = std::max(T, s.steps());
  }
  Batch<S> batch;
  batch.x = Matrix<S>::Zero(dim, T * B);
  batch.mask.setConstant(B, T, false);
  batch.labels.resize(B);
  for (Index k = 0; k < B; ++k) {
    const Sample& s = samples[indices[static_cast<std::size_t>(k)]];
    bool any = false;
    for (Index t = 0; t < s.steps(); ++t) {
      batch.x.col(t * B + k) = s.x.col(t).template cast<S>();
      batch.mask(k, t) = s.real(t);
      any = any || s.real(t);
    }
    if (!any) throw DataError("sequence has no unmasked steps");
    batch.labels[k] = S(s.label);
  }
  return batch;
}

template <typename S>
Batch<S> make_batch(std::span<const Sample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch<S>(samples, all);
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
  using S = typename Derived::Scalar;
  return (S(1) + (-a).exp()).inverse();
}

template <typename S>
  requires std::is_floating_point_v<S>
S sigmoid(S x) {
  using std::exp;
  return S(1) / (S(1) + exp(-x));
}

template <typename S>
struct ForwardPass {
  Matrix<S> gates;   // activated i, f, o, g per step: 4H x (steps * size)
  Matrix<S> c;       // H x ((steps + 1) * size); the first block is the zero state
  Matrix<S> h;       // same layout as c
  Matrix<S> tanh_c;  // H x (steps * size)
  Matrix<S> keep;    // dropout scale on h_T, empty when dropout is off
  Vector<S> y;       // output probabilities

  Index size() const { return y.size(); }
  auto h_last() const { return h.rightCols(size()); }
};

// Entries are 1/(1-rate) with probability 1-rate and 0 otherwise.
template <typename S>
Matrix<S> dropout_keep(Index hidden, Index size, double rate, Rng& rng) {
  Matrix<S> keep(hidden, size);
  const S scale = S(1.0 / (1.0 - rate));
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.bernoulli(1.0 - rate) ? scale : S(0);
  return keep;
}

// Masked steps carry the previous state through unchanged, so the readout is
// the state after the last unmasked step.
template <typename S>
ForwardPass<S> forward(const LstmParams<S>& p, const Batch<S>& batch, const Matrix<S>* keep = nullptr) {
  if (batch.x.rows() != p.dim())
    throw DataError("input dim " + std::to_string(batch.x.rows()) + " does not match model dim " +
                    std::to_string(p.dim()));
  const Index H = p.hidden(), B = batch.size(), T = batch.steps();
  ForwardPass<S> f;
  f.gates.resize(4 * H, T * B);
  f.c = Matrix<S>::Zero(H, (T + 1) * B);
  f.h = Matrix<S>::Zero(H, (T + 1) * B);
  f.tanh_c.resize(H, T * B);
  f.y.resize(B);
  for (Index t = 0; t < T; ++t) {
    auto a = f.gates.middleCols(t * B, B);
    a.noalias() = p.W * batch.step(t);
    a.noalias() += p.U * f.h.middleCols(t * B, B);
    a.colwise() += p.b;
    a.topRows(3 * H) = sigmoid(a.topRows(3 * H).array()).matrix();
    a.bottomRows(H) = a.bottomRows(H).array().tanh().matrix();

    auto c_prev = f.c.middleCols(t * B, B);
    auto c_next = f.c.middleCols((t + 1) * B, B);
    auto h_prev = f.h.middleCols(t * B, B);
    auto h_next = f.h.middleCols((t + 1) * B, B);
    auto tc = f.tanh_c.middleCols(t * B, B);
    c_next = a.middleRows(H, H).cwiseProduct(c_prev) + a.topRows(H).cwiseProduct(a.bottomRows(H));
    tc = c_next.array().tanh().matrix();
    h_next = a.middleRows(2 * H, H).cwiseProduct(tc);
    for (Index k = 0; k < B; ++k) {
      if (batch.mask(k, t)) continue;
      c_next.col(k) = c_prev.col(k);
      h_next.col(k) = h_prev.col(k);
    }
  }
  Vector<S> z;
  if (keep) {
    if (keep->rows() != H || keep->cols() != B) throw DataError("dropout mask shape mismatch");
    f.keep = *keep;
    z = (p.w.transpose() * f.h_last().cwiseProduct(f.keep)).transpose();
  } else {
    z = (p.w.transpose() * f.h_last()).transpose();
  }
  z.array() += p.bias;
  f.y = sigmoid(z.array()).matrix();
  return f;
}

inline constexpr double kProbabilityClamp = 1e-12;

// Binary cross-entropy with y clamped to [1e-12, 1 - 1e-12].
template <typename S>
S bce(S y, S label) {
  using std::log;
  const S e = S(kProbabilityClamp);
  const S yc = std::clamp(y, e, S(1) - e);
  return -(label * log(yc) + (S(1) - label) * log(S(1) - yc));
}

// d bce / d y; zero where the clamp is active.
template <typename S>
S bce_grad(S y, S label) {
  const S e = S(kProbabilityClamp);
  if (y < e || y > S(1) - e) return S(0);
  return -label / y + (S(1) - label) / (S(1) - y);
}

template <typename S>
S mean_loss(const Vector<S>& y, const Vector<S>& labels) {
  S total = S(0);
  for (Index k = 0; k < y.size(); ++k) total += bce(y[k], labels[k]);
  return total / S(y.size());
}

// Full BPTT gradient of the batch-mean BCE, reusing the forward pass's
// dropout mask. Uses dL/dz = y - label, the unclamped sigmoid/BCE pairing.
template <typename S>
LstmParams<S> backward(const LstmParams<S>& p, const Batch<S>& batch, const ForwardPass<S>& f) {
  const Index H = p.hidden(), B = batch.size(), T = batch.steps();
  LstmParams<S> g = LstmParams<S>::zeros(p.dim(), H);

  const Vector<S> dz = (f.y - batch.labels) / S(B);
  Matrix<S> h_read = f.h_last();
  if (f.keep.size()) h_read = h_read.cwiseProduct(f.keep);
  g.w.noalias() = h_read * dz;
  g.bias = dz.sum();

  Matrix<S> dh = p.w * dz.transpose();
  if (f.keep.size()) dh = dh.cwiseProduct(f.keep);
  Matrix<S> dc = Matrix<S>::Zero(H, B);
  Matrix<S> da(4 * H, B), dct(H, B), dc_prev(H, B), dh_prev(H, B);
  const auto one = [](const auto& m) { return m.array().cwiseProduct((S(1) - m.array())); };
  for (Index t = T; t-- > 0;) {
    const auto a = f.gates.middleCols(t * B, B);
    const auto i = a.topRows(H), fg = a.middleRows(H, H), o = a.middleRows(2 * H, H), gg = a.bottomRows(H);
    const auto tc = f.tanh_c.middleCols(t * B, B);
    const auto c_prev = f.c.middleCols(t * B, B);

    dct = dc + (dh.array() * o.array() * (S(1) - tc.array().square())).matrix();
    da.topRows(H) = (dct.array() * gg.array() * one(i)).matrix();
    da.middleRows(H, H) = (dct.array() * c_prev.array() * one(fg)).matrix();
    da.middleRows(2 * H, H) = (dh.array() * tc.array() * one(o)).matrix();
    da.bottomRows(H) = (dct.array() * i.array() * (S(1) - gg.array().square())).matrix();
    for (Index k = 0; k < B; ++k)
      if (!batch.mask(k, t)) da.col(k).setZero();

    dc_prev = dct.cwiseProduct(fg);
    dh_prev.noalias() = p.U.transpose() * da;
    for (Index k = 0; k < B; ++k) {
      if (batch.mask(k, t)) continue;
      dc_prev.col(k) = dc.col(k);
      dh_prev.col(k) = dh.col(k);
    }

    g.W.noalias() += da * batch.step(t).transpose();
    g.U.noalias() += da * f.h.middleCols(t * B, B).transpose();
    g.b += da.rowwise().sum();
    dc.swap(dc_prev);
    dh.swap(dh_prev);
  }
  return g;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename S>
class Adam {
 public:
  Adam(const LstmParams<S>& like, const AdamConfig& config)
      : config_(config), m_(LstmParams<S>::zeros(like.dim(), like.hidden())), v_(m_) {}

  // One bias-corrected update.
  void step(LstmParams<S>& params, const LstmParams<S>& grads) {
    using std::pow;
    using std::sqrt;
    ++t_;
    const S lr = S(config_.learning_rate), b1 = S(config_.beta1), b2 = S(config_.beta2), eps = S(config_.epsilon);
    const S c1 = S(1) - pow(b1, S(t_)), c2 = S(1) - pow(b2, S(t_));
    auto P = params.tensors();
    const auto G = grads.tensors();
    auto M = m_.tensors();
    auto V = v_.tensors();
    for (std::size_t k = 0; k < P.size(); ++k) {
      for (std::size_t i = 0; i < P[k].size(); ++i) {
        const S gi = G[k][i];
        M[k][i] = b1 * M[k][i] + (S(1) - b1) * gi;
        V[k][i] = b2 * V[k][i] + (S(1) - b2) * gi * gi;
        P[k][i] -= lr * (M[k][i] / c1) / (sqrt(V[k][i] / c2) + eps);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  LstmParams<S> m_;
  LstmParams<S> v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::size_t hidden = 100;
  double dropout_rate = 0.20;
  AdamConfig adam;
  double threshold = 0.5;
  std::uint64_t seed = 1;
  std::size_t patience = 0;  // epochs without validation-loss improvement; 0 disables

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean training loss, dropout active
  std::optional<double> validation_loss;
  std::optional<evalkit::Metrics> validation;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  LstmParams<double> params;
  double wall_seconds = 0;
  bool stopped_early = false;
};

class TrainingDivergedError : public DataError {
 public:
  TrainingDivergedError(std::size_t epoch, std::size_t batch, const std::string& what)
      : DataError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " +
                  what),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

// Seeded shuffle per epoch, Adam on the batch-mean loss. With early stopping
// the parameters of the best validation epoch are returned.
TrainReport train(std::span<const Sample> train_set, std::span<const Sample> validation, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

struct Evaluation {
  evalkit::Confusion confusion;
  double loss = 0;
  std::vector<double> probabilities;
};

// Dropout off; batches of `batch_size` in input order.
Evaluation evaluate(const LstmParams<double>& params, std::span<const Sample> samples, double threshold,
                    std::size_t batch_size = 256);

struct Prediction {
  double probability = 0;
  bool verdict = false;  // probability >= threshold
};

Prediction predict(const LstmParams<double>& params, const Sample& sample, double threshold);
std::vector<double> predict_probabilities(const LstmParams<double>& params, std::span<const Sample> samples,
                                          std::size_t batch_size = 256);

void validate_threshold(double threshold);

}  // namespace vulnhound::rnn
