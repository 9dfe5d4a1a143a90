#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semplaus/corpus.hpp"
#include "semplaus/embeddings.hpp"
#include "semplaus/neural_core.hpp"
#include "semplaus/wk_features.hpp"

namespace semplaus {

enum class ModelKind {
  random,    // coin-flip baseline
  lr,        // logistic regression on the triple vector
  nn,        // embedding-only feedforward net
  wk,        // world-knowledge net on its own
  ensemble,  // NN + WK joined by a softmax combiner
};

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind k);

enum class WkInputMode { raw_onehot, feature_embedding };

WkInputMode parse_input_mode(const std::string& s);
std::string input_mode_name(WkInputMode m);

struct ModelConfig {
  std::size_t h_nn = 100;    // NN hidden width (a_NN)
  std::size_t h_wk = 32;     // WK hidden width (a_WK)
  std::size_t d_f = 16;      // feature embedding width
  std::size_t h_comb = 32;   // combiner hidden width
  Activation sigma1 = Activation::relu;
  bool fine_tune = false;
  Scheme scheme = Scheme::bin_diff;
  WkInputMode input_mode = WkInputMode::feature_embedding;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  double validation_fraction = 0.1;
};

/// A labeled triple set in the form the models consume. Word vectors are
/// stored once per distinct word; triples refer to them by row.
struct EncodedTriples {
  std::vector<std::string> words;
  DenseMatrix vectors;  // words.size() x dim
  std::vector<std::array<std::size_t, 3>> rows;
  std::vector<PairFeatures> wk;  // per triple; empty when no WK source was given
  std::vector<int> labels;
  std::vector<Triple> triples;

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return vectors.cols(); }
  bool has_wk() const { return !wk.empty(); }
};

/// Looks up every word once (applying the table's OOV policy) and, when a
/// source is given, the subject-object pair features under `scheme`.
EncodedTriples encode_triples(const std::vector<LabeledTriple>& triples, const EmbeddingTable& table,
                              const PairFeatureSource* wk = nullptr, Scheme scheme = Scheme::bin_diff);

/// Common interface of the trainable classifiers.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;

  /// P(y = 1) for each requested row.
  virtual std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const = 0;

  /// Predicted labels; ties go to class 0.
  std::vector<int> predict(const EncodedTriples& data, std::span<const std::size_t> rows) const;

  /// Mean cross-entropy over rows. With want_gradients, the buffers returned
  /// by gradients() are overwritten with d(mean loss)/d(parameters).
  virtual double loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) = 0;

  /// Parameters updated by training, paired index-wise with gradients().
  virtual std::vector<DenseMatrix*> parameters() = 0;
  virtual std::vector<DenseMatrix*> gradients() = 0;

  /// Every tensor of the model (frozen ones included), in checkpoint order.
  virtual std::vector<std::pair<std::string, DenseMatrix*>> tensors() = 0;

  /// key=value lines describing the architecture, read back by load_model.
  virtual std::map<std::string, std::string> manifest() const = 0;
};

/// Deterministic coin flip per (seed, triple).
class RandomModel : public Classifier {
 public:
  explicit RandomModel(std::uint64_t seed) : seed_(seed) {}
  ModelKind kind() const override { return ModelKind::random; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<RandomModel>(*this); }
  std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const override;
  double loss(const EncodedTriples&, std::span<const std::size_t>, bool) override { return std::log(2.0); }
  std::vector<DenseMatrix*> parameters() override { return {}; }
  std::vector<DenseMatrix*> gradients() override { return {}; }
  std::vector<std::pair<std::string, DenseMatrix*>> tensors() override { return {}; }
  std::map<std::string, std::string> manifest() const override;

 private:
  std::uint64_t seed_;
};

/// The embedding input of NN-style models: a frozen view of the data's word
/// vectors, or a private fine-tuned copy.
class WordInput {
 public:
  WordInput() = default;
  WordInput(std::size_t dim, bool fine_tune) : dim_(dim), fine_tune_(fine_tune) {}

  /// Takes a private copy of the data's vectors when fine-tuning.
  void bind(const EncodedTriples& data);

  std::size_t width() const { return 3 * dim_; }
  bool fine_tune() const { return fine_tune_; }
  DenseMatrix gather(const EncodedTriples& data, std::span<const std::size_t> rows) const;
  /// Adds the input gradient (rows x 3*dim) into the fine-tuned vectors' gradient.
  void scatter(const EncodedTriples& data, std::span<const std::size_t> rows, const DenseMatrix& grad);

  DenseMatrix& vectors() { return tuned_; }
  DenseMatrix& vector_gradient() { return tuned_grad_; }
  const std::vector<std::string>& words() const { return words_; }
  void set_words(std::vector<std::string> words, DenseMatrix vectors);

 private:
  std::optional<std::size_t> tuned_row(const EncodedTriples& data, std::size_t data_row) const;

  std::size_t dim_ = 0;
  bool fine_tune_ = false;
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
  DenseMatrix tuned_, tuned_grad_;
};

/// The world-knowledge input: raw one-hot blocks or per-feature embedding tables.
class WkInput {
 public:
  WkInput() = default;
  WkInput(FeatureSchema schema, Scheme scheme, WkInputMode mode, std::size_t d_f, std::uint64_t seed);

  std::size_t width() const;
  WkInputMode mode() const { return mode_; }
  Scheme scheme() const { return scheme_; }
  const FeatureSchema& schema() const { return schema_; }

  DenseMatrix gather(const EncodedTriples& data, std::span<const std::size_t> rows) const;
  void scatter(const EncodedTriples& data, std::span<const std::size_t> rows, const DenseMatrix& grad);

  std::vector<DenseMatrix>& tables() { return tables_; }
  std::vector<DenseMatrix>& table_gradients() { return table_grads_; }

 private:
  FeatureSchema schema_;
  Scheme scheme_ = Scheme::bin_diff;
  WkInputMode mode_ = WkInputMode::feature_embedding;
  std::size_t d_f_ = 0;
  std::vector<DenseMatrix> tables_, table_grads_;
};

/// Logistic regression: sigmoid(w . x + b) on the triple vector.
class LrModel : public Classifier {
 public:
  LrModel(std::size_t dim, std::uint64_t seed);
  ModelKind kind() const override { return ModelKind::lr; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<LrModel>(*this); }
  std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const override;
  double loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) override;
  std::vector<DenseMatrix*> parameters() override { return stack_.parameters(); }
  std::vector<DenseMatrix*> gradients() override { return grads_.all(); }
  std::vector<std::pair<std::string, DenseMatrix*>> tensors() override;
  std::map<std::string, std::string> manifest() const override;

  LayerStack& stack() { return stack_; }
  const LayerStack& stack() const { return stack_; }

 private:
  LayerStack stack_;
  StackGradients grads_;
  WordInput input_;
};

/// Embedding-only net: sigmoid(W2 sigma1(W1 x)).
class NnModel : public Classifier {
 public:
  NnModel(std::size_t dim, const ModelConfig& config, std::uint64_t seed);
  ModelKind kind() const override { return ModelKind::nn; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<NnModel>(*this); }
  std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const override;
  double loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) override;
  std::vector<DenseMatrix*> parameters() override;
  std::vector<DenseMatrix*> gradients() override;
  std::vector<std::pair<std::string, DenseMatrix*>> tensors() override;
  std::map<std::string, std::string> manifest() const override;

  /// Binds fine-tuned word vectors to the training data; no-op when frozen.
  void bind(const EncodedTriples& data) { input_.bind(data); }

  LayerStack& stack() { return stack_; }
  const LayerStack& stack() const { return stack_; }
  WordInput& input() { return input_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  LayerStack stack_;
  StackGradients grads_;
  WordInput input_;
};

/// World-knowledge net on the subject-object pair features alone.
class WkModel : public Classifier {
 public:
  WkModel(const FeatureSchema& schema, const ModelConfig& config, std::uint64_t seed);
  ModelKind kind() const override { return ModelKind::wk; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<WkModel>(*this); }
  std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const override;
  double loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) override;
  std::vector<DenseMatrix*> parameters() override;
  std::vector<DenseMatrix*> gradients() override;
  std::vector<std::pair<std::string, DenseMatrix*>> tensors() override;
  std::map<std::string, std::string> manifest() const override;

  LayerStack& stack() { return stack_; }
  WkInput& input() { return input_; }

 private:
  ModelConfig config_;
  WkInput input_;
  LayerStack stack_;  // input -> h_wk (relu) -> 1 (sigmoid)
  StackGradients grads_;
};

struct EnsemblePrediction {
  int label = 0;
  std::array<double, 2> probabilities{};
};

/// NN and WK paths joined on their penultimate vectors:
/// softmax(W2 relu(W1 [a_NN; a_WK] + b1) + b2).
class EnsembleModel : public Classifier {
 public:
  EnsembleModel(std::size_t dim, const FeatureSchema& schema, const ModelConfig& config, std::uint64_t seed);
  ModelKind kind() const override { return ModelKind::ensemble; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<EnsembleModel>(*this); }
  std::vector<double> predict_proba(const EncodedTriples& data, std::span<const std::size_t> rows) const override;
  double loss(const EncodedTriples& data, std::span<const std::size_t> rows, bool want_gradients) override;
  std::vector<DenseMatrix*> parameters() override;
  std::vector<DenseMatrix*> gradients() override;
  std::vector<std::pair<std::string, DenseMatrix*>> tensors() override;
  std::map<std::string, std::string> manifest() const override;

  std::vector<EnsemblePrediction> predict_full(const EncodedTriples& data, std::span<const std::size_t> rows) const;

  void bind(const EncodedTriples& data) { words_.bind(data); }

  /// Freezing a path removes its tensors from parameters().
  void set_trainable(bool nn_path, bool wk_path) {
    train_nn_ = nn_path;
    train_wk_ = wk_path;
  }

  LayerStack& nn_trunk() { return nn_trunk_; }
  LayerStack& wk_trunk() { return wk_trunk_; }
  LayerStack& combiner() { return combiner_; }
  WkInput& wk_input() { return wk_input_; }
  WordInput& word_input() { return words_; }

 private:
  struct Pass {
    ForwardCache nn, wk, comb;
    DenseMatrix logits;
  };
  Pass run(const EncodedTriples& data, std::span<const std::size_t> rows) const;

  ModelConfig config_;
  WordInput words_;
  WkInput wk_input_;
  LayerStack nn_trunk_;  // 3*dim -> h_nn (sigma1)
  LayerStack wk_trunk_;  // wk input -> h_wk (relu)
  LayerStack combiner_;  // h_nn + h_wk -> h_comb (relu) -> 2
  StackGradients nn_grads_, wk_grads_, comb_grads_;
  bool train_nn_ = true, train_wk_ = true;
};

/// Builds an untrained model of the given kind.
std::unique_ptr<Classifier> make_model(ModelKind kind, std::size_t dim, const FeatureSchema& schema,
                                       const ModelConfig& config, std::uint64_t seed);

struct TrainingLog {
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // index 0 is before training
  std::size_t best_epoch = 0;           // 0 means the initial parameters were kept
  std::size_t epochs_run = 0;
  std::size_t validation_size = 0;
  bool early_stopped = false;
};

/// Mini-batch Adam on the mean cross-entropy. A validation_fraction share of
/// the training rows is held out for early stopping; the parameters with
/// the lowest held-out loss are restored at the end. Throws NumericError if
/// the loss diverges.
TrainingLog train(Classifier& model, const EncodedTriples& data, std::span<const std::size_t> train_rows,
                  const TrainConfig& config, std::uint64_t seed);

struct TrainedModel {
  std::unique_ptr<Classifier> model;
  TrainingLog log;
};

/// make_model + train, binding fine-tuned word vectors to the data first.
TrainedModel train_classifier(ModelKind kind, const EncodedTriples& data, std::span<const std::size_t> train_rows,
                              const FeatureSchema& schema, const ModelConfig& model_config,
                              const TrainConfig& train_config, std::uint64_t seed);

/// Fraction of rows whose predicted label matches.
double accuracy(const Classifier& model, const EncodedTriples& data, std::span<const std::size_t> rows);

/// Single-triple predictions against an embedding table.
double predict_nn(const NnModel& m, const Triple& t, const EmbeddingTable& emb);
double predict_lr(const LrModel& m, const Triple& t, const EmbeddingTable& emb);
EnsemblePrediction predict_ensemble(const EnsembleModel& m, const Triple& t, const EmbeddingTable& emb,
                                    const PairFeatureSource& wk, Scheme scheme);

/// Writes `<prefix>.ckpt` (tensors) and `<prefix>.manifest` (key=value).
void save_model(Classifier& model, const std::string& prefix);
std::unique_ptr<Classifier> load_model(const std::string& prefix);

}  // namespace semplaus
