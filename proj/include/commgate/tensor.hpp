#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "commgate/errors.hpp"
#include "commgate/rng.hpp"

namespace commgate {

/// Dense row-major tensor. `grad` is allocated only on tracked tensors
/// (trainable parameters and, during a taped forward pass, intermediates).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  std::string name;

  int size() const { return static_cast<int>(data.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool tracked() const { return !grad.empty(); }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  bool all_finite() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor(std::vector<int> shape, bool track = false, std::string name = "");
TensorPtr tensor_of(std::vector<double> values, bool track = false, std::string name = "");
TensorPtr zeros_like(const Tensor& t);

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng);

/// Records backward closures during a taped forward pass and replays them in
/// reverse. One tape per loss computation; freed afterwards.
class Tape {
 public:
  void push(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  /// Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse.
  void backward(const TensorPtr& loss);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. All take the tape first; pass nullptr for a pure
// forward pass (rollout collection). Outputs are tracked iff a tape is given.
// ---------------------------------------------------------------------------

/// y = Wx + b. W is [m, n], x is [n], b is [m].
TensorPtr affine(Tape* tape, const TensorPtr& w, const TensorPtr& b, const TensorPtr& x);

TensorPtr concat(Tape* tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr scale(Tape* tape, const TensorPtr& x, double factor);

/// Mean of the given vectors; `dim` is used to produce a zero vector when the
/// list is empty.
TensorPtr mean_of(Tape* tape, const std::vector<TensorPtr>& xs, int dim);

/// LSTM cell parameters. Gate row order within the stacked [4h] blocks is
/// fixed: input, forget, cell candidate, output.
struct LstmParams {
  TensorPtr w_input;   // [4h, d_in]
  TensorPtr w_hidden;  // [4h, h]
  TensorPtr bias;      // [4h]
  int hidden = 0;
  int input_dim = 0;

  static LstmParams init(int input_dim, int hidden, Rng& rng, const std::string& prefix);
};

/// One LSTM cell update; caches per-step activations for the backward pass.
std::pair<TensorPtr, TensorPtr> lstm_step(Tape* tape, const LstmParams& p,
                                          const TensorPtr& x, const TensorPtr& h,
                                          const TensorPtr& c);

/// Softmax probabilities of a logit vector (numerically stabilized).
TensorPtr softmax(Tape* tape, const TensorPtr& logits);

/// Scalar log softmax(logits)[index].
TensorPtr log_prob_index(Tape* tape, const TensorPtr& logits, int index);

/// Scalar entropy of softmax(logits).
TensorPtr entropy(Tape* tape, const TensorPtr& logits);

/// logits[k] = -||m - bank_row_k||^2 / tau. bank is [n_protos, d].
TensorPtr distance_logits(Tape* tape, const TensorPtr& m, const TensorPtr& bank, double tau);

/// Straight-through one-hot over perturbed logits. Forward emits the exact
/// one-hot of `hard_index` (or, with soft_forward, the relaxed weights
/// softmax((logits + noise)/temperature)); backward always follows the soft
/// path. `noise` carries one Gumbel draw per class.
TensorPtr st_onehot(Tape* tape, const TensorPtr& logits, double temperature,
                    const std::vector<double>& noise, int hard_index,
                    bool soft_forward = false);

/// msg = sum_k w[k] * bank_row_k. When w is an exact one-hot the forward is a
/// bitwise row copy, so evaluated messages reproduce codebook rows exactly.
TensorPtr rows_combo(Tape* tape, const TensorPtr& bank, const TensorPtr& w);

/// Scalar (target - v)^2 for a 1-element tensor v.
TensorPtr square_error(Tape* tape, const TensorPtr& v, double target);

/// Scalar sum of coeff * scalar-tensor terms; the loss assembler.
TensorPtr weighted_sum(Tape* tape, const std::vector<std::pair<TensorPtr, double>>& terms);

// Forward-only helpers used during rollouts.
int argmax(const Tensor& v);
int sample_categorical(const Tensor& logits, Rng& rng);
double log_softmax_at(const Tensor& logits, int index);

}  // namespace commgate
