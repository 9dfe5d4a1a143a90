#include "semplaus/neural_core.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "semplaus/common.hpp"

namespace semplaus {

DenseMatrix DenseMatrix::row_vector(std::span<const double> v) {
  DenseMatrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data_.begin());
  return m;
}

bool DenseMatrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Activation parse_activation(const std::string& s) {
  if (s == "linear" || s == "identity") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::linear: return z;
    case Activation::relu: return z > 0 ? z : 0.0;
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh: return std::tanh(z);
  }
  return z;
}

// Derivative expressed through the pre-activation z and the activation y.
double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::linear: return 1.0;
    case Activation::relu: return z > 0 ? 1.0 : 0.0;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh: return 1.0 - y * y;
  }
  return 1.0;
}

double dot(std::span<const double> a, std::span<const double> b) {
  // fixed accumulation order, independent of compiler flags
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

LayerStack::LayerStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("layer stack needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.out_dim()) {
      throw ValidationError("layer " + std::to_string(i) + ": bias shape does not match weights");
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw ValidationError("layer " + std::to_string(i) + ": input width " + std::to_string(l.in_dim()) +
                            " does not match previous output " + std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

std::vector<DenseMatrix*> LayerStack::parameters() {
  std::vector<DenseMatrix*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const DenseMatrix*> LayerStack::parameters() const {
  std::vector<const DenseMatrix*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

bool LayerStack::operator==(const LayerStack& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weights != o.layers_[i].weights || layers_[i].bias != o.layers_[i].bias ||
        layers_[i].activation != o.layers_[i].activation)
      return false;
  }
  return true;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

LayerStack init_params(const ShapePlan& plan, std::uint64_t seed) {
  if (plan.dims.size() < 2 || plan.activations.size() + 1 != plan.dims.size()) {
    throw ValidationError("shape plan needs one activation per layer transition");
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < plan.dims.size(); ++i) {
    const std::size_t in = plan.dims[i], out = plan.dims[i + 1];
    if (in == 0 || out == 0) throw ValidationError("layer widths must be positive");
    DenseLayer l{DenseMatrix(out, in), DenseMatrix(1, out), plan.activations[i]};
    const double a = glorot_limit(in, out);
    for (double& w : l.weights.values()) w = rng.uniform(-a, a);
    layers.push_back(std::move(l));
  }
  return LayerStack(std::move(layers));
}

DenseMatrix forward(const LayerStack& stack, const DenseMatrix& batch, ForwardCache* cache) {
  if (batch.cols() != stack.in_dim()) {
    throw ValidationError("input width " + std::to_string(batch.cols()) + " does not match fan-in " +
                          std::to_string(stack.in_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->post.clear();
  }
  DenseMatrix current = batch;
  for (std::size_t li = 0; li < stack.depth(); ++li) {
    const auto& l = stack.layer(li);
    DenseMatrix z(current.rows(), l.out_dim());
    for (std::size_t b = 0; b < current.rows(); ++b) {
      const auto x = current.row(b);
      auto zr = z.row(b);
      for (std::size_t o = 0; o < l.out_dim(); ++o) zr[o] = dot(x, l.weights.row(o)) + l.bias(0, o);
    }
    DenseMatrix y(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) y.values()[i] = activate(l.activation, z.values()[i]);
    if (cache) {
      cache->inputs.push_back(std::move(current));
      cache->pre.push_back(std::move(z));
      cache->post.push_back(y);
    }
    current = std::move(y);
  }
  return current;
}

std::pair<std::vector<double>, ForwardCache> forward(const LayerStack& stack, std::span<const double> x) {
  ForwardCache cache;
  DenseMatrix out = forward(stack, DenseMatrix::row_vector(x), &cache);
  return {std::vector<double>(out.values().begin(), out.values().end()), std::move(cache)};
}

StackGradients StackGradients::zeros_like(const LayerStack& stack) {
  StackGradients g;
  for (std::size_t i = 0; i < stack.depth(); ++i) {
    g.weights.emplace_back(stack.layer(i).weights.rows(), stack.layer(i).weights.cols());
    g.biases.emplace_back(1, stack.layer(i).out_dim());
  }
  return g;
}

void StackGradients::zero() {
  for (auto& w : weights) w.fill(0.0);
  for (auto& b : biases) b.fill(0.0);
}

std::vector<DenseMatrix*> StackGradients::all() {
  std::vector<DenseMatrix*> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(&weights[i]);
    out.push_back(&biases[i]);
  }
  return out;
}

std::vector<const DenseMatrix*> StackGradients::all() const {
  std::vector<const DenseMatrix*> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(&weights[i]);
    out.push_back(&biases[i]);
  }
  return out;
}

DenseMatrix backward(const LayerStack& stack, const ForwardCache& cache, const DenseMatrix& upstream,
                     StackGradients& grads, GradientAt at, bool input_gradient) {
  const std::size_t depth = stack.depth();
  if (cache.pre.size() != depth || cache.inputs.size() != depth || cache.post.size() != depth) {
    throw ValidationError("forward cache does not match the layer stack");
  }
  if (grads.weights.size() != depth) throw ValidationError("gradient buffers do not match the layer stack");
  for (std::size_t li = 0; li < depth; ++li) {
    const auto& l = stack.layer(li);
    if (cache.pre[li].cols() != l.out_dim() || cache.inputs[li].cols() != l.in_dim() ||
        cache.pre[li].rows() != cache.pre[0].rows()) {
      throw ValidationError("stale forward cache: shapes changed since forward");
    }
  }
  if (!upstream.same_shape(cache.post.back())) throw ValidationError("upstream gradient shape mismatch");

  DenseMatrix delta = upstream;
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t li = depth - 1 - step;
    const auto& l = stack.layer(li);
    const auto& z = cache.pre[li];
    const auto& y = cache.post[li];
    const bool already_pre = li == depth - 1 && at == GradientAt::pre_activation;
    if (!already_pre) {
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta.values()[i] *= activate_grad(l.activation, z.values()[i], y.values()[i]);
    }
    const auto& x = cache.inputs[li];
    auto& gw = grads.weights[li];
    auto& gb = grads.biases[li];
    const bool need_dx = li > 0 || input_gradient;
    DenseMatrix dx = need_dx ? DenseMatrix(x.rows(), x.cols()) : DenseMatrix();
    for (std::size_t b = 0; b < x.rows(); ++b) {
      const auto xr = x.row(b);
      for (std::size_t o = 0; o < l.out_dim(); ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        gb(0, o) += d;
        auto gwr = gw.row(o);
        for (std::size_t i = 0; i < xr.size(); ++i) gwr[i] += d * xr[i];
        if (need_dx) {
          auto dxr = dx.row(b);
          const auto wr = l.weights.row(o);
          for (std::size_t i = 0; i < xr.size(); ++i) dxr[i] += d * wr[i];
        }
      }
    }
    delta = std::move(dx);
  }
  return delta;
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= sum;
  return p;
}

LossAndGradient softmax_xent(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) throw ValidationError("softmax needs at least two logits");
  if (label >= logits.size()) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double log_z = m + std::log(sum);
  LossAndGradient out;
  out.loss = log_z - logits[label];
  out.gradient.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.gradient[i] = std::exp(logits[i] - log_z);
  out.gradient[label] -= 1.0;
  return out;
}

std::pair<double, double> sigmoid_xent(double z, int y) {
  // softplus(z) - y z, evaluated without overflow
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return {softplus - y * z, sigmoid(z) - y};
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> analytic,
                           const std::function<double()>& loss, double step, double tolerance) {
  if (step <= 0) throw ValidationError("finite-difference step must be positive");
  if (params.size() != analytic.size()) throw ValidationError("parameter and gradient lists differ in length");
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->same_shape(*analytic[p])) throw ValidationError("gradient shape mismatch");
    auto vals = params[p]->values();
    const auto grad = analytic[p]->values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const double up = loss();
      vals[i] = saved - step;
      const double down = loss();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      report.max_relative_error = std::max(report.max_relative_error, relative_error(grad[i], numeric));
      ++report.checked;
    }
  }
  report.pass = report.max_relative_error < tolerance;
  return report;
}

GradCheckReport grad_check(LayerStack& stack, std::span<const double> x, std::size_t label, double step,
                           double tolerance) {
  const DenseMatrix input = DenseMatrix::row_vector(x);
  const bool binary = stack.out_dim() == 1;
  if (binary && label > 1) throw ValidationError("binary label must be 0 or 1");

  // The natural head treats the last layer's pre-activation as the logit(s).
  auto loss_and_upstream = [&](const ForwardCache& cache, DenseMatrix* upstream) {
    const auto logits = cache.pre.back().row(0);
    if (binary) {
      auto [l, d] = sigmoid_xent(logits[0], static_cast<int>(label));
      if (upstream) (*upstream)(0, 0) = d;
      return l;
    }
    auto lg = softmax_xent(logits, label);
    if (upstream)
      for (std::size_t i = 0; i < lg.gradient.size(); ++i) (*upstream)(0, i) = lg.gradient[i];
    return lg.loss;
  };

  ForwardCache cache;
  forward(stack, input, &cache);
  DenseMatrix upstream(1, stack.out_dim());
  loss_and_upstream(cache, &upstream);
  auto grads = StackGradients::zeros_like(stack);
  backward(stack, cache, upstream, grads, GradientAt::pre_activation);

  auto loss = [&]() {
    ForwardCache c;
    forward(stack, input, &c);
    return loss_and_upstream(c, nullptr);
  };
  const auto params = stack.parameters();
  const auto analytic = std::as_const(grads).all();
  return grad_check(params, analytic, loss, step, tolerance);
}

void Optimizer::step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads) {
  if (params.size() != grads.size()) throw ValidationError("optimizer: parameter/gradient count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->same_shape(*grads[p])) throw ValidationError("optimizer: gradient shape mismatch");
    if (!grads[p]->all_finite()) {
      throw NumericError("non-finite gradient in parameter tensor " + std::to_string(p) + " at step " +
                         std::to_string(steps_ + 1));
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto v = params[p]->values();
      const auto g = grads[p]->values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
    return;
  }
  if (first_moment_.empty()) {
    for (const auto* p : params) {
      first_moment_.emplace_back(p->rows(), p->cols());
      second_moment_.emplace_back(p->rows(), p->cols());
    }
  }
  if (first_moment_.size() != params.size()) throw ValidationError("optimizer: parameter set changed");
  const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!first_moment_[p].same_shape(*params[p])) throw ValidationError("optimizer: parameter shape changed");
    auto v = params[p]->values();
    const auto g = grads[p]->values();
    auto m = first_moment_[p].values();
    auto s = second_moment_[p].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      s[i] = b2 * s[i] + (1.0 - b2) * g[i] * g[i];
      v[i] -= lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'L', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::string& path) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw ParseError(path, 0, "truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, std::span<const DenseMatrix* const> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    put_u64(out, t->rows());
    put_u64(out, t->cols());
  }
  for (const auto* t : tensors)
    for (double v : t->values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<DenseMatrix> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError(path, 0, "not a checkpoint file");
  const auto version = get_le(in, 4, path);
  if (version != kCheckpointVersion) throw ParseError(path, 0, "unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le(in, 4, path);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto r = get_le(in, 8, path);
    const auto c = get_le(in, 8, path);
    shapes.emplace_back(r, c);
  }
  std::vector<DenseMatrix> out;
  for (const auto& [r, c] : shapes) {
    DenseMatrix m(r, c);
    for (double& v : m.values()) v = std::bit_cast<double>(get_le(in, 8, path));
    out.push_back(std::move(m));
  }
  if (in.peek() != EOF) throw ParseError(path, 0, "trailing bytes after checkpoint data");
  return out;
}

}  // namespace semplaus
