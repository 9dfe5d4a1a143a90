#include "semplaus/models.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"

namespace semplaus {

namespace {

std::vector<const DenseMatrix*> const_view(const std::vector<DenseMatrix*>& v) {
  return {v.begin(), v.end()};
}

void require_wk(const EncodedTriples& data) {
  if (!data.has_wk()) throw ValidationError("model needs world-knowledge features but none were encoded");
}

PairFeatures adapt(const PairFeatures& p, Scheme want) {
  if (p.scheme == want) return p;
  if (want == Scheme::three_level) return to_three_level(p);
  throw ValidationError("model expects bin-diff features but the data holds 3-level features");
}

DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

DenseMatrix column_slice(const DenseMatrix& m, std::size_t from, std::size_t width) {
  DenseMatrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, from + c);
  return out;
}

/// Mean sigmoid cross-entropy on a single-logit output; fills the upstream
/// gradient w.r.t. the pre-activation.
double binary_loss(const DenseMatrix& logits, const EncodedTriples& data, std::span<const std::size_t> rows,
                   DenseMatrix* upstream) {
  const double n = static_cast<double>(rows.size());
  double total = 0.0;
  if (upstream) *upstream = DenseMatrix(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [l, g] = sigmoid_xent(logits(i, 0), data.labels.at(rows[i]));
    total += l;
    if (upstream) (*upstream)(i, 0) = g / n;
  }
  return total / n;
}

void append_stack(std::vector<std::pair<std::string, DenseMatrix*>>& out, const std::string& prefix,
                  LayerStack& stack) {
  for (std::size_t i = 0; i < stack.depth(); ++i) {
    out.emplace_back(prefix + ".W" + std::to_string(i), &stack.layer(i).weights);
    out.emplace_back(prefix + ".b" + std::to_string(i), &stack.layer(i).bias);
  }
}

void append(std::vector<DenseMatrix*>& out, const std::vector<DenseMatrix*>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

std::string schema_string(const FeatureSchema& schema) {
  std::string s;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (f) s += ';';
    s += schema[f].name + ':';
    for (std::size_t i = 0; i < schema[f].landmarks.size(); ++i) {
      if (i) s += ',';
      s += schema[f].landmarks[i];
    }
  }
  return s;
}

FeatureSchema parse_schema_string(const std::string& s) {
  std::vector<FeatureSpec> specs;
  for (const auto& part : split(s, ';')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ValidationError("bad schema entry '" + part + "'");
    specs.push_back({part.substr(0, colon), split(part.substr(colon + 1), ',')});
  }
  return FeatureSchema(std::move(specs));
}

std::map<std::string, std::string> config_manifest(ModelKind kind, const ModelConfig& c) {
  return {
      {"kind", model_kind_name(kind)},
      {"h_nn", std::to_string(c.h_nn)},
      {"h_wk", std::to_string(c.h_wk)},
      {"d_f", std::to_string(c.d_f)},
      {"h_comb", std::to_string(c.h_comb)},
      {"sigma1", activation_name(c.sigma1)},
      {"fine_tune", c.fine_tune ? "1" : "0"},
      {"scheme", scheme_name(c.scheme)},
      {"input_mode", input_mode_name(c.input_mode)},
  };
}

}  // namespace

ModelKind parse_model_kind(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "random") return ModelKind::random;
  if (l == "lr") return ModelKind::lr;
  if (l == "nn") return ModelKind::nn;
  if (l == "wk") return ModelKind::wk;
  if (l == "ensemble" || l == "nn+wk") return ModelKind::ensemble;
  throw ValidationError("unknown model '" + s + "' (expected random|lr|nn|wk|ensemble)");
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::random: return "random";
    case ModelKind::lr: return "lr";
    case ModelKind::nn: return "nn";
    case ModelKind::wk: return "wk";
    case ModelKind::ensemble: return "ensemble";
  }
  return "?";
}

WkInputMode parse_input_mode(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "raw" || l == "raw_onehot" || l == "onehot") return WkInputMode::raw_onehot;
  if (l == "embed" || l == "feature_embedding" || l == "embedding") return WkInputMode::feature_embedding;
  throw ValidationError("unknown input mode '" + s + "' (expected raw|embed)");
}

std::string input_mode_name(WkInputMode m) { return m == WkInputMode::raw_onehot ? "raw" : "embed"; }

EncodedTriples encode_triples(const std::vector<LabeledTriple>& triples, const EmbeddingTable& table,
                              const PairFeatureSource* wk, Scheme scheme) {
  EncodedTriples out;
  std::map<std::string, std::size_t> index;
  auto row_of = [&](const std::string& w) {
    auto [it, inserted] = index.emplace(w, out.words.size());
    if (inserted) out.words.push_back(w);
    return it->second;
  };
  for (const auto& lt : triples) {
    out.rows.push_back({row_of(lt.triple.subject), row_of(lt.triple.verb), row_of(lt.triple.object)});
    out.labels.push_back(lt.label);
    out.triples.push_back(lt.triple);
    if (wk) out.wk.push_back(wk->features(lt.triple.subject, lt.triple.object, scheme));
  }
  out.vectors = DenseMatrix(out.words.size(), table.dim());
  if (table.dim() > 0)
    for (std::size_t i = 0; i < out.words.size(); ++i) table.lookup_into(out.words[i], out.vectors.row(i));
  return out;
}

std::vector<int> Classifier::predict(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  const auto p = predict_proba(data, rows);
  std::vector<int> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.5 ? 1 : 0;
  return out;
}

std::vector<double> RandomModel::predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    Rng rng(derive_seed(seed_, fnv1a64(data.triples.at(r).str())));
    out.push_back(rng.uniform());
  }
  return out;
}

std::map<std::string, std::string> RandomModel::manifest() const {
  return {{"kind", "random"}, {"seed", std::to_string(seed_)}};
}

// --- WordInput ---

void WordInput::bind(const EncodedTriples& data) {
  if (!fine_tune_) return;
  std::vector<std::size_t> fresh;
  for (std::size_t i = 0; i < data.words.size(); ++i)
    if (!index_.count(data.words[i])) fresh.push_back(i);
  if (fresh.empty()) return;
  DenseMatrix grown(words_.size() + fresh.size(), dim_);
  for (std::size_t r = 0; r < tuned_.rows(); ++r) std::copy(tuned_.row(r).begin(), tuned_.row(r).end(), grown.row(r).begin());
  for (std::size_t i : fresh) {
    const std::size_t r = words_.size();
    index_.emplace(data.words[i], r);
    words_.push_back(data.words[i]);
    std::copy(data.vectors.row(i).begin(), data.vectors.row(i).end(), grown.row(r).begin());
  }
  tuned_ = std::move(grown);
  tuned_grad_ = DenseMatrix(tuned_.rows(), dim_);
}

void WordInput::set_words(std::vector<std::string> words, DenseMatrix vectors) {
  if (words.size() != vectors.rows() || (!words.empty() && vectors.cols() != dim_))
    throw ValidationError("fine-tuned word list does not match its vectors");
  words_ = std::move(words);
  index_.clear();
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  tuned_ = std::move(vectors);
  tuned_grad_ = DenseMatrix(tuned_.rows(), tuned_.cols());
}

std::optional<std::size_t> WordInput::tuned_row(const EncodedTriples& data, std::size_t data_row) const {
  if (!fine_tune_ || index_.empty()) return std::nullopt;
  auto it = index_.find(data.words[data_row]);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DenseMatrix WordInput::gather(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  if (data.dim() != dim_) {
    throw ValidationError("embedding dimension " + std::to_string(data.dim()) + " does not match model (" +
                          std::to_string(dim_) + ")");
  }
  DenseMatrix x(rows.size(), 3 * dim_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto dst = x.row(i);
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t w = data.rows.at(rows[i])[k];
      const auto t = tuned_row(data, w);
      auto src = t ? tuned_.row(*t) : data.vectors.row(w);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(k * dim_));
    }
  }
  return x;
}

void WordInput::scatter(const EncodedTriples& data, std::span<const std::size_t> rows, const DenseMatrix& grad) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto t = tuned_row(data, data.rows.at(rows[i])[k]);
      if (!t) continue;
      for (std::size_t j = 0; j < dim_; ++j) tuned_grad_(*t, j) += grad(i, k * dim_ + j);
    }
  }
}

// --- WkInput ---

WkInput::WkInput(FeatureSchema schema, Scheme scheme, WkInputMode mode, std::size_t d_f, std::uint64_t seed)
    : schema_(std::move(schema)), scheme_(scheme), mode_(mode), d_f_(d_f) {
  if (mode_ != WkInputMode::feature_embedding) return;
  if (d_f_ == 0) throw ValidationError("feature embedding width must be positive");
  Rng rng(seed);
  for (std::size_t f = 0; f < schema_.size(); ++f) {
    const auto width = static_cast<std::size_t>(schema_.block_width(f, scheme_));
    const double a = glorot_limit(width, d_f_);
    DenseMatrix t(width, d_f_);
    for (auto& v : t.values()) v = rng.uniform(-a, a);
    tables_.push_back(std::move(t));
    table_grads_.emplace_back(width, d_f_);
  }
}

std::size_t WkInput::width() const {
  if (mode_ == WkInputMode::raw_onehot) return static_cast<std::size_t>(schema_.raw_width(scheme_));
  return schema_.size() * d_f_;
}

DenseMatrix WkInput::gather(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  require_wk(data);
  DenseMatrix x(rows.size(), width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto p = adapt(data.wk.at(rows[i]), scheme_);
    auto dst = x.row(i);
    if (mode_ == WkInputMode::raw_onehot) {
      const auto v = encode_raw_onehot(p, schema_);
      std::copy(v.begin(), v.end(), dst.begin());
      continue;
    }
    const auto idx = encode_indices(p, schema_);
    for (std::size_t f = 0; f < idx.size(); ++f) {
      auto src = tables_[f].row(static_cast<std::size_t>(idx[f]));
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(f * d_f_));
    }
  }
  return x;
}

void WkInput::scatter(const EncodedTriples& data, std::span<const std::size_t> rows, const DenseMatrix& grad) {
  if (mode_ != WkInputMode::feature_embedding) return;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto idx = encode_indices(adapt(data.wk.at(rows[i]), scheme_), schema_);
    for (std::size_t f = 0; f < idx.size(); ++f) {
      auto g = table_grads_[f].row(static_cast<std::size_t>(idx[f]));
      for (std::size_t j = 0; j < d_f_; ++j) g[j] += grad(i, f * d_f_ + j);
    }
  }
}

// --- LrModel ---

LrModel::LrModel(std::size_t dim, std::uint64_t seed)
    : stack_(init_params({{3 * dim, 1}, {Activation::sigmoid}}, seed)),
      grads_(StackGradients::zeros_like(stack_)),
      input_(dim, false) {}

std::vector<double> LrModel::predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  const auto out = forward(stack_, input_.gather(data, rows));
  return {out.values().begin(), out.values().end()};
}

double LrModel::loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) {
  ForwardCache cache;
  forward(stack_, input_.gather(data, rows), &cache);
  DenseMatrix up;
  const double l = binary_loss(cache.pre.back(), data, rows, want_gradients ? &up : nullptr);
  if (want_gradients) {
    grads_.zero();
    backward(stack_, cache, up, grads_, GradientAt::pre_activation, false);
  }
  return l;
}

std::vector<std::pair<std::string, DenseMatrix*>> LrModel::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  append_stack(out, "lr", stack_);
  return out;
}

std::map<std::string, std::string> LrModel::manifest() const {
  return {{"kind", "lr"}, {"dim", std::to_string(stack_.in_dim() / 3)}};
}

// --- NnModel ---

NnModel::NnModel(std::size_t dim, const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      stack_(init_params({{3 * dim, config.h_nn, 1}, {config.sigma1, Activation::sigmoid}}, seed)),
      grads_(StackGradients::zeros_like(stack_)),
      input_(dim, config.fine_tune) {}

std::vector<double> NnModel::predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  const auto out = forward(stack_, input_.gather(data, rows));
  return {out.values().begin(), out.values().end()};
}

double NnModel::loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) {
  ForwardCache cache;
  forward(stack_, input_.gather(data, rows), &cache);
  DenseMatrix up;
  const double l = binary_loss(cache.pre.back(), data, rows, want_gradients ? &up : nullptr);
  if (want_gradients) {
    grads_.zero();
    input_.vector_gradient().fill(0.0);
    const bool tune = input_.fine_tune() && !input_.vectors().empty();
    const auto dx = backward(stack_, cache, up, grads_, GradientAt::pre_activation, tune);
    if (tune) input_.scatter(data, rows, dx);
  }
  return l;
}

std::vector<DenseMatrix*> NnModel::parameters() {
  auto out = stack_.parameters();
  if (input_.fine_tune() && !input_.vectors().empty()) out.push_back(&input_.vectors());
  return out;
}

std::vector<DenseMatrix*> NnModel::gradients() {
  auto out = grads_.all();
  if (input_.fine_tune() && !input_.vectors().empty()) out.push_back(&input_.vector_gradient());
  return out;
}

std::vector<std::pair<std::string, DenseMatrix*>> NnModel::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  append_stack(out, "nn", stack_);
  if (config_.fine_tune) out.emplace_back("words", &input_.vectors());
  return out;
}

std::map<std::string, std::string> NnModel::manifest() const {
  auto m = config_manifest(ModelKind::nn, config_);
  m["dim"] = std::to_string(stack_.in_dim() / 3);
  return m;
}

// --- WkModel ---

WkModel::WkModel(const FeatureSchema& schema, const ModelConfig& config, std::uint64_t seed)
    : config_(config), input_(schema, config.scheme, config.input_mode, config.d_f, derive_seed(seed, 1)) {
  stack_ = init_params({{input_.width(), config.h_wk, 1}, {Activation::relu, Activation::sigmoid}}, seed);
  grads_ = StackGradients::zeros_like(stack_);
}

std::vector<double> WkModel::predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  const auto out = forward(stack_, input_.gather(data, rows));
  return {out.values().begin(), out.values().end()};
}

double WkModel::loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) {
  ForwardCache cache;
  forward(stack_, input_.gather(data, rows), &cache);
  DenseMatrix up;
  const double l = binary_loss(cache.pre.back(), data, rows, want_gradients ? &up : nullptr);
  if (want_gradients) {
    grads_.zero();
    for (auto& g : input_.table_gradients()) g.fill(0.0);
    const bool embed = input_.mode() == WkInputMode::feature_embedding;
    const auto dx = backward(stack_, cache, up, grads_, GradientAt::pre_activation, embed);
    if (embed) input_.scatter(data, rows, dx);
  }
  return l;
}

std::vector<DenseMatrix*> WkModel::parameters() {
  auto out = stack_.parameters();
  for (auto& t : input_.tables()) out.push_back(&t);
  return out;
}

std::vector<DenseMatrix*> WkModel::gradients() {
  auto out = grads_.all();
  for (auto& g : input_.table_gradients()) out.push_back(&g);
  return out;
}

std::vector<std::pair<std::string, DenseMatrix*>> WkModel::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  append_stack(out, "wk", stack_);
  for (std::size_t f = 0; f < input_.tables().size(); ++f)
    out.emplace_back("wk.table." + input_.schema()[f].name, &input_.tables()[f]);
  return out;
}

std::map<std::string, std::string> WkModel::manifest() const {
  auto m = config_manifest(ModelKind::wk, config_);
  m["schema"] = schema_string(input_.schema());
  return m;
}

// --- EnsembleModel ---

EnsembleModel::EnsembleModel(std::size_t dim, const FeatureSchema& schema, const ModelConfig& config,
                             std::uint64_t seed)
    : config_(config),
      words_(dim, config.fine_tune),
      wk_input_(schema, config.scheme, config.input_mode, config.d_f, derive_seed(seed, 1)) {
  nn_trunk_ = init_params({{3 * dim, config.h_nn}, {config.sigma1}}, derive_seed(seed, 2));
  wk_trunk_ = init_params({{wk_input_.width(), config.h_wk}, {Activation::relu}}, derive_seed(seed, 3));
  combiner_ = init_params({{config.h_nn + config.h_wk, config.h_comb, 2}, {Activation::relu, Activation::linear}},
                          derive_seed(seed, 4));
  nn_grads_ = StackGradients::zeros_like(nn_trunk_);
  wk_grads_ = StackGradients::zeros_like(wk_trunk_);
  comb_grads_ = StackGradients::zeros_like(combiner_);
}

EnsembleModel::Pass EnsembleModel::run(const EncodedTriples& data, std::span<const std::size_t> rows) const {
  Pass p;
  const auto a_nn = forward(nn_trunk_, words_.gather(data, rows), &p.nn);
  const auto a_wk = forward(wk_trunk_, wk_input_.gather(data, rows), &p.wk);
  p.logits = forward(combiner_, hcat(a_nn, a_wk), &p.comb);
  return p;
}

std::vector<EnsemblePrediction> EnsembleModel::predict_full(const EncodedTriples& data,
                                                            std::span<const std::size_t> rows) const {
  const auto pass = run(data, rows);
  std::vector<EnsemblePrediction> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto p = softmax(pass.logits.row(i));
    out[i].probabilities = {p[0], p[1]};
    out[i].label = p[1] > p[0] ? 1 : 0;
  }
  return out;
}

std::vector<double> EnsembleModel::predict_proba(const EncodedTriples& data,
                                                 std::span<const std::size_t> rows) const {
  std::vector<double> out;
  for (const auto& p : predict_full(data, rows)) out.push_back(p.probabilities[1]);
  return out;
}

double EnsembleModel::loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) {
  const auto pass = run(data, rows);
  const double n = static_cast<double>(rows.size());
  DenseMatrix up(rows.size(), 2);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto lg = softmax_xent(pass.logits.row(i), static_cast<std::size_t>(data.labels.at(rows[i])));
    total += lg.loss;
    for (std::size_t c = 0; c < 2; ++c) up(i, c) = lg.gradient[c] / n;
  }
  if (!want_gradients) return total / n;

  comb_grads_.zero();
  nn_grads_.zero();
  wk_grads_.zero();
  words_.vector_gradient().fill(0.0);
  for (auto& g : wk_input_.table_gradients()) g.fill(0.0);

  const auto dz = backward(combiner_, pass.comb, up, comb_grads_, GradientAt::output, train_nn_ || train_wk_);
  if (train_nn_) {
    const bool tune = words_.fine_tune() && !words_.vectors().empty();
    const auto dx = backward(nn_trunk_, pass.nn, column_slice(dz, 0, config_.h_nn), nn_grads_, GradientAt::output, tune);
    if (tune) words_.scatter(data, rows, dx);
  }
  if (train_wk_) {
    const bool embed = wk_input_.mode() == WkInputMode::feature_embedding;
    const auto dx = backward(wk_trunk_, pass.wk, column_slice(dz, config_.h_nn, config_.h_wk), wk_grads_,
                             GradientAt::output, embed);
    if (embed) wk_input_.scatter(data, rows, dx);
  }
  return total / n;
}

std::vector<DenseMatrix*> EnsembleModel::parameters() {
  auto out = combiner_.parameters();
  if (train_nn_) {
    append(out, nn_trunk_.parameters());
    if (words_.fine_tune() && !words_.vectors().empty()) out.push_back(&words_.vectors());
  }
  if (train_wk_) {
    append(out, wk_trunk_.parameters());
    for (auto& t : wk_input_.tables()) out.push_back(&t);
  }
  return out;
}

std::vector<DenseMatrix*> EnsembleModel::gradients() {
  auto out = comb_grads_.all();
  if (train_nn_) {
    append(out, nn_grads_.all());
    if (words_.fine_tune() && !words_.vectors().empty()) out.push_back(&words_.vector_gradient());
  }
  if (train_wk_) {
    append(out, wk_grads_.all());
    for (auto& g : wk_input_.table_gradients()) out.push_back(&g);
  }
  return out;
}

std::vector<std::pair<std::string, DenseMatrix*>> EnsembleModel::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  append_stack(out, "nn", nn_trunk_);
  append_stack(out, "wk", wk_trunk_);
  append_stack(out, "comb", combiner_);
  for (std::size_t f = 0; f < wk_input_.tables().size(); ++f)
    out.emplace_back("wk.table." + wk_input_.schema()[f].name, &wk_input_.tables()[f]);
  if (config_.fine_tune) out.emplace_back("words", &words_.vectors());
  return out;
}

std::map<std::string, std::string> EnsembleModel::manifest() const {
  auto m = config_manifest(ModelKind::ensemble, config_);
  m["dim"] = std::to_string(nn_trunk_.in_dim() / 3);
  m["schema"] = schema_string(wk_input_.schema());
  return m;
}

// --- construction, training, evaluation ---

std::unique_ptr<Classifier> make_model(ModelKind kind, std::size_t dim, const FeatureSchema& schema,
                                       const ModelConfig& config, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::random: return std::make_unique<RandomModel>(seed);
    case ModelKind::lr: return std::make_unique<LrModel>(dim, seed);
    case ModelKind::nn: return std::make_unique<NnModel>(dim, config, seed);
    case ModelKind::wk: return std::make_unique<WkModel>(schema, config, seed);
    case ModelKind::ensemble: return std::make_unique<EnsembleModel>(dim, schema, config, seed);
  }
  throw ValidationError("unknown model kind");
}

TrainingLog train(Classifier& model, const EncodedTriples& data, std::span<const std::size_t> train_rows,
                  const TrainConfig& config, std::uint64_t seed) {
  TrainingLog log;
  if (model.parameters().empty() || train_rows.empty()) return log;
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");

  Rng rng(seed);
  std::vector<std::size_t> rows(train_rows.begin(), train_rows.end());
  rng.shuffle(rows);
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(rows.size())));
  std::vector<std::size_t> val(rows.end() - static_cast<std::ptrdiff_t>(n_val), rows.end());
  rows.resize(rows.size() - n_val);
  if (rows.empty()) throw ValidationError("no training rows left after the validation split");
  log.validation_size = n_val;
  // Without a held-out split the training loss is monitored instead.
  const std::span<const std::size_t> monitor = val.empty() ? std::span<const std::size_t>(rows) : val;

  std::array<std::size_t, 2> counts{};
  for (std::size_t r : rows) ++counts[data.labels.at(r) == 1 ? 1 : 0];
  if (counts[0] == 0 || counts[1] == 0) spdlog::warn("training split holds a single class");

  auto snapshot = [&] {
    std::vector<DenseMatrix> s;
    for (auto& [name, t] : model.tensors()) s.push_back(*t);
    return s;
  };

  Optimizer opt({OptimizerKind::adam, config.learning_rate});
  double best = model.loss(data, monitor, false);
  log.validation_loss.push_back(best);
  auto best_params = snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(rows);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, rows.size() - start);
      const std::span<const std::size_t> batch(rows.data() + start, len);
      const double l = model.loss(data, batch, true);
      if (!std::isfinite(l)) throw NumericError("training loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += l * static_cast<double>(len);
      const auto params = model.parameters();
      const auto grads = const_view(model.gradients());
      opt.step(params, grads);
    }
    log.train_loss.push_back(epoch_loss / static_cast<double>(rows.size()));
    const double v = model.loss(data, monitor, false);
    if (!std::isfinite(v)) throw NumericError("validation loss diverged at epoch " + std::to_string(epoch));
    log.validation_loss.push_back(v);
    log.epochs_run = epoch;
    if (v < best) {
      best = v;
      log.best_epoch = epoch;
      best_params = snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      log.early_stopped = true;
      break;
    }
  }
  auto tensors = model.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].second = best_params[i];
  return log;
}

TrainedModel train_classifier(ModelKind kind, const EncodedTriples& data, std::span<const std::size_t> train_rows,
                              const FeatureSchema& schema, const ModelConfig& model_config,
                              const TrainConfig& train_config, std::uint64_t seed) {
  TrainedModel out;
  out.model = make_model(kind, data.dim(), schema, model_config, derive_seed(seed, 0));
  if (auto* nn = dynamic_cast<NnModel*>(out.model.get())) nn->bind(data);
  if (auto* en = dynamic_cast<EnsembleModel*>(out.model.get())) en->bind(data);
  out.log = train(*out.model, data, train_rows, train_config, derive_seed(seed, 1));
  return out;
}

double accuracy(const Classifier& model, const EncodedTriples& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  const auto pred = model.predict(data, rows);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) hit += pred[i] == data.labels.at(rows[i]);
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

namespace {

EncodedTriples single(const Triple& t, const EmbeddingTable& emb, const PairFeatureSource* wk = nullptr,
                      Scheme scheme = Scheme::bin_diff) {
  return encode_triples({LabeledTriple{t, 0, std::nullopt}}, emb, wk, scheme);
}

constexpr std::size_t kFirst[] = {0};

}  // namespace

double predict_nn(const NnModel& m, const Triple& t, const EmbeddingTable& emb) {
  return m.predict_proba(single(t, emb), kFirst).at(0);
}

double predict_lr(const LrModel& m, const Triple& t, const EmbeddingTable& emb) {
  return m.predict_proba(single(t, emb), kFirst).at(0);
}

EnsemblePrediction predict_ensemble(const EnsembleModel& m, const Triple& t, const EmbeddingTable& emb,
                                    const PairFeatureSource& wk, Scheme scheme) {
  return m.predict_full(single(t, emb, &wk, scheme), kFirst).at(0);
}

// --- persistence ---

void save_model(Classifier& model, const std::string& prefix) {
  auto tensors = model.tensors();
  std::vector<const DenseMatrix*> ptrs;
  std::string names;
  for (const auto& [name, t] : tensors) {
    ptrs.push_back(t);
    if (!names.empty()) names += ',';
    names += name;
  }
  auto manifest = model.manifest();
  manifest["tensors"] = names;
  if (!ptrs.empty()) write_checkpoint(prefix + ".ckpt", ptrs);

  std::ofstream out(prefix + ".manifest", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + prefix + ".manifest");
  for (const auto& [k, v] : manifest) out << k << '=' << v << '\n';

  std::vector<std::string> words;
  if (auto* nn = dynamic_cast<NnModel*>(&model)) words = nn->input().words();
  if (auto* en = dynamic_cast<EnsembleModel*>(&model)) words = en->word_input().words();
  if (!words.empty()) {
    std::ofstream w(prefix + ".words", std::ios::binary);
    for (const auto& s : words) w << s << '\n';
  }
}

std::unique_ptr<Classifier> load_model(const std::string& prefix) {
  const std::string mpath = prefix + ".manifest";
  std::ifstream in(mpath);
  if (!in) throw ParseError(mpath, 0, "cannot open file");
  std::map<std::string, std::string> m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(mpath, lineno, "expected key=value");
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ParseError(mpath, 0, "missing key '" + k + "'");
    return it->second;
  };
  auto get_size = [&](const std::string& k) {
    long long v = 0;
    if (!parse_int(get(k), v) || v < 0) throw ParseError(mpath, 0, "bad value for '" + k + "'");
    return static_cast<std::size_t>(v);
  };

  const ModelKind kind = parse_model_kind(get("kind"));
  if (kind == ModelKind::random) {
    const std::string s = get("seed");
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(mpath, 0, "bad seed");
    return std::make_unique<RandomModel>(seed);
  }
  ModelConfig config;
  FeatureSchema schema = FeatureSchema::standard();
  std::size_t dim = 0;
  if (kind != ModelKind::lr) {
    config.h_nn = get_size("h_nn");
    config.h_wk = get_size("h_wk");
    config.d_f = get_size("d_f");
    config.h_comb = get_size("h_comb");
    config.sigma1 = parse_activation(get("sigma1"));
    config.fine_tune = get("fine_tune") == "1";
    config.scheme = parse_scheme(get("scheme"));
    config.input_mode = parse_input_mode(get("input_mode"));
  }
  if (kind != ModelKind::wk) dim = get_size("dim");
  if (kind == ModelKind::wk || kind == ModelKind::ensemble) schema = parse_schema_string(get("schema"));

  auto model = make_model(kind, dim, schema, config, 0);
  auto tensors = model->tensors();
  const auto stored = read_checkpoint(prefix + ".ckpt");
  const auto names = split(get("tensors"), ',');
  if (stored.size() != tensors.size() || names.size() != tensors.size())
    throw ParseError(prefix + ".ckpt", 0, "tensor count does not match the manifest");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (names[i] != tensors[i].first) throw ParseError(mpath, 0, "unexpected tensor '" + names[i] + "'");
    if (tensors[i].first != "words" && !stored[i].same_shape(*tensors[i].second))
      throw ParseError(prefix + ".ckpt", 0, "shape mismatch for " + names[i]);
    *tensors[i].second = stored[i];
  }

  if (config.fine_tune) {
    WordInput* input = nullptr;
    if (auto* nn = dynamic_cast<NnModel*>(model.get())) input = &nn->input();
    if (auto* en = dynamic_cast<EnsembleModel*>(model.get())) input = &en->word_input();
    if (input && !input->vectors().empty()) {
      std::vector<std::string> words;
      std::ifstream w(prefix + ".words");
      while (std::getline(w, line))
        if (!line.empty()) words.push_back(line);
      input->set_words(std::move(words), input->vectors());
    }
  }
  return model;
}

}  // namespace semplaus
