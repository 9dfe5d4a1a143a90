#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace semplaus {

/// Row-major matrix of doubles. The only numeric container used by the models.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix row_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { linear, relu, sigmoid, tanh };

Activation parse_activation(const std::string& s);
std::string activation_name(Activation a);

double sigmoid(double z);

/// y = act(x W^T + b); W is out x in, b is 1 x out.
struct DenseLayer {
  DenseMatrix weights;
  DenseMatrix bias;
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

class LayerStack {
 public:
  LayerStack() = default;
  /// Throws ValidationError if adjacent layer dimensions do not chain.
  explicit LayerStack(std::vector<DenseLayer> layers);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  DenseLayer& layer(std::size_t i) { return layers_[i]; }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }

  /// Weights and biases interleaved: W0, b0, W1, b1, ...
  std::vector<DenseMatrix*> parameters();
  std::vector<const DenseMatrix*> parameters() const;

  bool operator==(const LayerStack& o) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Layer widths (dims.size() == activations.size() + 1).
struct ShapePlan {
  std::vector<std::size_t> dims;
  std::vector<Activation> activations;
};

/// Glorot-uniform weights in (-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases.
LayerStack init_params(const ShapePlan& plan, std::uint64_t seed);

double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Activations kept by forward for the matching backward call.
struct ForwardCache {
  std::vector<DenseMatrix> inputs;  // input to each layer
  std::vector<DenseMatrix> pre;     // pre-activations
  std::vector<DenseMatrix> post;    // activations (post.back() is the output)
};

/// Batched forward pass; each row of `batch` is one example.
DenseMatrix forward(const LayerStack& stack, const DenseMatrix& batch, ForwardCache* cache = nullptr);

/// Single-example forward pass.
std::pair<std::vector<double>, ForwardCache> forward(const LayerStack& stack, std::span<const double> x);

/// Gradients with shapes mirroring the stack's parameters.
struct StackGradients {
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;

  static StackGradients zeros_like(const LayerStack& stack);
  void zero();
  /// Same interleaved order as LayerStack::parameters().
  std::vector<DenseMatrix*> all();
  std::vector<const DenseMatrix*> all() const;
};

/// Where the upstream gradient is taken: w.r.t. the last layer's output, or
/// w.r.t. its pre-activation (used with fused sigmoid/softmax losses).
enum class GradientAt { output, pre_activation };

/// Accumulates parameter gradients into `grads` and returns d(loss)/d(input)
/// (an empty matrix when input_gradient is false).
DenseMatrix backward(const LayerStack& stack, const ForwardCache& cache, const DenseMatrix& upstream,
                     StackGradients& grads, GradientAt at = GradientAt::output, bool input_gradient = true);

std::vector<double> softmax(std::span<const double> logits);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// -log softmax(logits)[label] and its gradient softmax - onehot(label).
LossAndGradient softmax_xent(std::span<const double> logits, std::size_t label);

/// Binary cross-entropy on a logit z for label y in {0,1}; gradient is sigmoid(z) - y.
std::pair<double, double> sigmoid_xent(double z, int y);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares analytic gradients with central differences of `loss` for every
/// entry of every parameter. `loss` must read the current parameter values.
GradCheckReport grad_check(std::span<DenseMatrix* const> params,
                           std::span<const DenseMatrix* const> analytic,
                           const std::function<double()>& loss, double step, double tolerance);

/// Checks a stack under its natural loss: sigmoid cross-entropy when the
/// output width is 1 (label in {0,1}), softmax cross-entropy otherwise.
GradCheckReport grad_check(LayerStack& stack, std::span<const double> x, std::size_t label,
                           double step = 1e-5, double tolerance = 1e-4);

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  /// Throws NumericError on a non-finite gradient and ValidationError on a
  /// shape change between calls.
  void step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads);

  std::uint64_t step_count() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<DenseMatrix> first_moment_;
  std::vector<DenseMatrix> second_moment_;
};

/// Flat binary checkpoint: "SPLSCKPT", u32 version, u32 count, count x
/// (u64 rows, u64 cols), then every matrix's values as little-endian f64.
void write_checkpoint(const std::string& path, std::span<const DenseMatrix* const> tensors);
std::vector<DenseMatrix> read_checkpoint(const std::string& path);

}  // namespace semplaus
