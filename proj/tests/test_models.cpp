#include <cmath>
#include <numeric>

#include "doctest.h"
#include "semplaus/common.hpp"
#include "semplaus/models.hpp"
#include "semplaus/synthetic.hpp"
#include "test_util.hpp"

using namespace semplaus;
using semplaus::testing::TempDir;

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

SyntheticWorld small_world(std::uint64_t seed = 3, std::size_t triples = 200) {
  SyntheticConfig c;
  c.nouns = 30;
  c.verbs = 6;
  c.dim = 8;
  c.triples = triples;
  c.seed = seed;
  return make_synthetic_world(c, FeatureSchema::standard());
}

ModelConfig small_config() {
  ModelConfig c;
  c.h_nn = 6;
  c.h_wk = 5;
  c.d_f = 3;
  c.h_comb = 4;
  return c;
}

void randomize(Classifier& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : m.tensors())
    for (double& v : t->values()) v = rng.uniform(-0.8, 0.8);
}

GradCheckReport check_model(Classifier& m, const EncodedTriples& data, std::span<const std::size_t> rows) {
  m.loss(data, rows, true);
  std::vector<DenseMatrix> analytic;
  for (auto* g : m.gradients()) analytic.push_back(*g);
  std::vector<const DenseMatrix*> ptrs;
  for (auto& g : analytic) ptrs.push_back(&g);
  const auto params = m.parameters();
  return grad_check(params, ptrs, [&] { return m.loss(data, rows, false); }, 1e-5, 1e-4);
}

// plain-loop evaluation of sigmoid(w . [s; v; o] + b), independent of the layer code
double lr_oracle(const std::vector<double>& w, double b, const std::vector<double>& x) {
  long double z = b;
  for (std::size_t i = 0; i < w.size(); ++i) z += static_cast<long double>(w[i]) * x[i];
  return static_cast<double>(1.0L / (1.0L + std::exp(-z)));
}

}  // namespace

TEST_CASE("model kind and input mode names round trip") {
  for (auto k : {ModelKind::random, ModelKind::lr, ModelKind::nn, ModelKind::wk, ModelKind::ensemble})
    CHECK(parse_model_kind(model_kind_name(k)) == k);
  CHECK(parse_model_kind("NN+WK") == ModelKind::ensemble);
  CHECK_THROWS_AS(parse_model_kind("svm"), ValidationError);
  CHECK(parse_input_mode("raw") == WkInputMode::raw_onehot);
  CHECK(parse_input_mode(input_mode_name(WkInputMode::feature_embedding)) == WkInputMode::feature_embedding);
}

TEST_CASE("encode_triples shares word rows and attaches pair features") {
  auto w = small_world();
  GoldPairFeatures gold(w.profiles);
  const auto data = encode_triples(w.triples, w.embeddings, &gold, Scheme::bin_diff);
  REQUIRE(data.size() == w.triples.size());
  CHECK(data.dim() == 8);
  CHECK(data.words.size() <= 36);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = w.triples[i].triple;
    CHECK(data.words[data.rows[i][0]] == t.subject);
    CHECK(data.words[data.rows[i][1]] == t.verb);
    const auto expect = *w.embeddings.find(t.object);
    const auto got = data.vectors.row(data.rows[i][2]);
    CHECK(std::equal(expect.begin(), expect.end(), got.begin()));
    CHECK(data.wk[i] == pair_features(w.profiles.at(t.subject), w.profiles.at(t.object), Scheme::bin_diff));
  }
}

TEST_CASE("missing profile names the noun") {
  auto w = small_world();
  auto profiles = w.profiles;
  const std::string victim = w.triples[0].triple.object;
  profiles.erase(victim);
  GoldPairFeatures gold(profiles);
  try {
    encode_triples(w.triples, w.embeddings, &gold);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("zero-weight models predict 0.5") {
  auto w = small_world();
  LrModel lr(8, 1);
  NnModel nn(8, small_config(), 1);
  for (auto* m : std::vector<Classifier*>{&lr, &nn})
    for (auto& [name, t] : m->tensors()) t->fill(0.0);
  for (const auto& lt : w.triples) {
    CHECK(predict_lr(lr, lt.triple, w.embeddings) == 0.5);
    CHECK(predict_nn(nn, lt.triple, w.embeddings) == 0.5);
  }
  // ties go to the implausible class
  const auto data = encode_triples(w.triples, w.embeddings);
  const auto rows = iota_rows(data.size());
  for (int label : nn.predict(data, rows)) CHECK(label == 0);
}

TEST_CASE("NN output stays inside (0,1)") {
  auto w = small_world();
  NnModel nn(8, small_config(), 5);
  randomize(nn, 11);
  const auto data = encode_triples(w.triples, w.embeddings);
  for (double p : nn.predict_proba(data, iota_rows(data.size()))) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("LR matches a plain dot-product evaluation and flips under negation") {
  auto w = small_world();
  LrModel lr(8, 9);
  randomize(lr, 21);
  const auto& layer = lr.stack().layer(0);
  const std::vector<double> weights(layer.weights.values().begin(), layer.weights.values().end());
  const double bias = layer.bias(0, 0);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& t = w.triples[i * 7].triple;
    std::vector<double> x;
    for (const auto* word : {&t.subject, &t.verb, &t.object}) {
      const auto& v = *w.embeddings.find(*word);
      x.insert(x.end(), v.begin(), v.end());
    }
    const double p = predict_lr(lr, t, w.embeddings);
    CHECK(std::abs(p - lr_oracle(weights, bias, x)) < 1e-12);

    LrModel neg = lr;
    for (double& v : neg.stack().layer(0).weights.values()) v = -v;
    neg.stack().layer(0).bias(0, 0) = -bias;
    CHECK(std::abs(predict_lr(neg, t, w.embeddings) - (1.0 - p)) < 1e-12);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  auto w = small_world();
  NnModel nn(5, small_config(), 1);
  CHECK_THROWS_AS(predict_nn(nn, w.triples[0].triple, w.embeddings), ValidationError);
}

TEST_CASE("WK path requires encoded pair features") {
  auto w = small_world();
  WkModel wk(FeatureSchema::standard(), small_config(), 1);
  const auto data = encode_triples(w.triples, w.embeddings);
  const std::vector<std::size_t> rows{0};
  CHECK_THROWS_AS(wk.predict_proba(data, rows), ValidationError);
}

TEST_CASE("WK input widths follow scheme and mode") {
  const auto schema = FeatureSchema::standard();
  auto width = [&](Scheme s, WkInputMode m) { return WkInput(schema, s, m, 16, 1).width(); };
  CHECK(width(Scheme::three_level, WkInputMode::raw_onehot) == 18);
  CHECK(width(Scheme::bin_diff, WkInputMode::raw_onehot) == 54);
  CHECK(width(Scheme::bin_diff, WkInputMode::feature_embedding) == 96);
  CHECK(width(Scheme::three_level, WkInputMode::feature_embedding) == 96);
}

TEST_CASE("a 3-level model reads bin-diff data through the sign") {
  auto w = small_world();
  GoldPairFeatures gold(w.profiles);
  const auto bin = encode_triples(w.triples, w.embeddings, &gold, Scheme::bin_diff);
  const auto three = encode_triples(w.triples, w.embeddings, &gold, Scheme::three_level);
  ModelConfig c = small_config();
  c.scheme = Scheme::three_level;
  WkModel wk(FeatureSchema::standard(), c, 4);
  randomize(wk, 8);
  const auto rows = iota_rows(bin.size());
  CHECK(wk.predict_proba(bin, rows) == wk.predict_proba(three, rows));

  c.scheme = Scheme::bin_diff;
  WkModel wk_bin(FeatureSchema::standard(), c, 4);
  CHECK_THROWS_AS(wk_bin.predict_proba(three, rows), ValidationError);
}

TEST_CASE("ensemble probabilities sum to one and the label is their argmax") {
  auto w = small_world();
  GoldPairFeatures gold(w.profiles);
  EnsembleModel m(8, FeatureSchema::standard(), small_config(), 3);
  randomize(m, 17);
  for (const auto& lt : w.triples) {
    const auto p = predict_ensemble(m, lt.triple, w.embeddings, gold, Scheme::bin_diff);
    CHECK(std::abs(p.probabilities[0] + p.probabilities[1] - 1.0) < 1e-12);
    CHECK(p.label == (p.probabilities[1] > p.probabilities[0] ? 1 : 0));
  }
}

TEST_CASE("model gradients match finite differences") {
  auto w = small_world(5, 40);
  GoldPairFeatures gold(w.profiles);
  const auto schema = FeatureSchema::standard();
  const std::vector<std::size_t> rows{0, 3, 5, 8, 13, 21};

  for (Scheme scheme : {Scheme::bin_diff, Scheme::three_level}) {
    const auto data = encode_triples(w.triples, w.embeddings, &gold, scheme);
    for (WkInputMode mode : {WkInputMode::feature_embedding, WkInputMode::raw_onehot}) {
      for (bool tune : {false, true}) {
        ModelConfig c = small_config();
        c.scheme = scheme;
        c.input_mode = mode;
        c.fine_tune = tune;
        c.sigma1 = tune ? Activation::tanh : Activation::relu;
        for (std::uint64_t draw = 0; draw < 3; ++draw) {
          CAPTURE(scheme_name(scheme));
          CAPTURE(input_mode_name(mode));
          CAPTURE(tune);
          CAPTURE(draw);
          NnModel nn(8, c, draw);
          nn.bind(data);
          randomize(nn, 100 + draw);
          auto r = check_model(nn, data, rows);
          CHECK(r.pass);
          CHECK(r.max_relative_error < 1e-4);

          WkModel wk(schema, c, draw);
          randomize(wk, 200 + draw);
          r = check_model(wk, data, rows);
          CHECK(r.pass);

          EnsembleModel en(8, schema, c, draw);
          en.bind(data);
          randomize(en, 300 + draw);
          r = check_model(en, data, rows);
          CHECK(r.pass);
          CHECK(r.max_relative_error < 1e-4);
        }
      }
    }
  }

  LrModel lr(8, 1);
  randomize(lr, 7);
  const auto data = encode_triples(w.triples, w.embeddings);
  CHECK(check_model(lr, data, rows).pass);
}

TEST_CASE("fine-tuning only touches words seen in the batch") {
  auto w = small_world(5, 40);
  ModelConfig c = small_config();
  c.fine_tune = true;
  const auto data = encode_triples(w.triples, w.embeddings);
  NnModel nn(8, c, 2);
  nn.bind(data);
  REQUIRE(nn.input().vectors().rows() == data.words.size());
  const std::vector<std::size_t> rows{0};
  nn.loss(data, rows, true);
  const auto& g = nn.input().vector_gradient();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const bool used = r == data.rows[0][0] || r == data.rows[0][1] || r == data.rows[0][2];
    double norm = 0.0;
    for (double v : g.row(r)) norm += std::abs(v);
    if (!used) CHECK(norm == 0.0);
  }
}

TEST_CASE("training memorizes a repeated positive triple") {
  auto w = small_world();
  std::vector<LabeledTriple> ten(10, LabeledTriple{w.triples[0].triple, 1, std::nullopt});
  const auto data = encode_triples(ten, w.embeddings);
  const auto rows = iota_rows(10);
  for (ModelKind kind : {ModelKind::lr, ModelKind::nn}) {
    auto trained = train_classifier(kind, data, rows, FeatureSchema::standard(), ModelConfig{}, TrainConfig{}, 4);
    CHECK(trained.model->predict_proba(data, std::vector<std::size_t>{0})[0] > 0.9);
  }
}

TEST_CASE("training is deterministic and keeps the best checkpoint") {
  auto w = small_world(9, 300);
  GoldPairFeatures gold(w.profiles);
  const auto data = encode_triples(w.triples, w.embeddings, &gold);
  const auto rows = iota_rows(data.size());
  TrainConfig tc;
  tc.max_epochs = 30;
  for (ModelKind kind : {ModelKind::nn, ModelKind::wk, ModelKind::ensemble}) {
    CAPTURE(model_kind_name(kind));
    auto a = train_classifier(kind, data, rows, FeatureSchema::standard(), small_config(), tc, 12);
    auto b = train_classifier(kind, data, rows, FeatureSchema::standard(), small_config(), tc, 12);
    CHECK(a.log.validation_loss == b.log.validation_loss);
    CHECK(a.model->predict_proba(data, rows) == b.model->predict_proba(data, rows));
    REQUIRE(!a.log.validation_loss.empty());
    CHECK(a.log.validation_size == 30);
    CHECK(a.log.validation_loss[a.log.best_epoch] <= a.log.validation_loss[0]);
    CHECK(a.log.train_loss.size() == a.log.epochs_run);
    CHECK(a.log.validation_loss.size() == a.log.epochs_run + 1);
  }
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  auto w = small_world(9, 200);
  auto shuffled = w.triples;
  Rng rng(5);
  for (auto& t : shuffled) t.label = static_cast<int>(rng.below(2));
  const auto data = encode_triples(shuffled, w.embeddings);
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.patience = 3;
  auto trained = train_classifier(ModelKind::nn, data, iota_rows(data.size()), FeatureSchema::standard(),
                                  ModelConfig{}, tc, 2);
  CHECK(trained.log.early_stopped);
  CHECK(trained.log.epochs_run == trained.log.best_epoch + 3);
}

TEST_CASE("diverging training raises NumericError") {
  auto w = small_world();
  auto data = encode_triples(w.triples, w.embeddings);
  data.vectors(0, 0) = std::numeric_limits<double>::infinity();
  LrModel lr(8, 1);
  CHECK_THROWS_AS(train(lr, data, iota_rows(data.size()), TrainConfig{}, 1), NumericError);
}

TEST_CASE("random baseline is a deterministic coin per triple") {
  auto w = small_world(2, 400);
  const auto data = encode_triples(w.triples, w.embeddings);
  const auto rows = iota_rows(data.size());
  RandomModel a(7), b(7), c(8);
  CHECK(a.predict(data, rows) == b.predict(data, rows));
  CHECK(a.predict(data, rows) != c.predict(data, rows));
  const double acc = accuracy(a, data, rows);
  CHECK(acc > 0.4);
  CHECK(acc < 0.6);
}

TEST_CASE("save and load reproduce predictions") {
  auto w = small_world();
  GoldPairFeatures gold(w.profiles);
  const auto data = encode_triples(w.triples, w.embeddings, &gold);
  const auto rows = iota_rows(data.size());
  TempDir dir;
  ModelConfig c = small_config();
  for (ModelKind kind : {ModelKind::random, ModelKind::lr, ModelKind::nn, ModelKind::wk, ModelKind::ensemble}) {
    for (bool tune : {false, true}) {
      CAPTURE(model_kind_name(kind));
      CAPTURE(tune);
      c.fine_tune = tune;
      c.input_mode = tune ? WkInputMode::raw_onehot : WkInputMode::feature_embedding;
      auto m = make_model(kind, 8, FeatureSchema::standard(), c, 6);
      if (auto* nn = dynamic_cast<NnModel*>(m.get())) nn->bind(data);
      if (auto* en = dynamic_cast<EnsembleModel*>(m.get())) en->bind(data);
      randomize(*m, 31);
      const std::string prefix = dir.file(model_kind_name(kind) + (tune ? "_ft" : ""));
      save_model(*m, prefix);
      auto back = load_model(prefix);
      CHECK(back->kind() == kind);
      CHECK(back->predict_proba(data, rows) == m->predict_proba(data, rows));
    }
  }
  dir.write("bad.manifest", "kind=nn\n");
  CHECK_THROWS_AS(load_model(dir.file("bad")), ParseError);
}

TEST_CASE("training on shuffled labels stays at chance") {
  SyntheticConfig sc;
  sc.triples = 600;
  sc.seed = 13;
  auto w = make_synthetic_world(sc, FeatureSchema::standard());
  Rng rng(99);
  std::vector<int> labels;
  for (const auto& t : w.triples) labels.push_back(t.label);
  rng.shuffle(labels);
  for (std::size_t i = 0; i < labels.size(); ++i) w.triples[i].label = labels[i];
  const auto data = encode_triples(w.triples, w.embeddings);
  const auto folds = make_folds(data.size(), 5, 3);
  double total = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto train_rows = folds.train_indices(k);
    const auto test_rows = folds.test_indices(k);
    auto trained = train_classifier(ModelKind::nn, data, train_rows, FeatureSchema::standard(), ModelConfig{},
                                    TrainConfig{}, derive_seed(5, static_cast<std::uint64_t>(k)));
    total += accuracy(*trained.model, data, test_rows);
  }
  const double acc = total / 5.0;
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

TEST_CASE("ensemble with a zeroed WK path degenerates to the NN") {
  SyntheticConfig sc;
  sc.triples = 1000;
  sc.seed = 21;
  auto w = make_synthetic_world(sc, FeatureSchema::standard());
  GoldPairFeatures gold(w.profiles);
  const auto data = encode_triples(w.triples, w.embeddings, &gold);
  const auto folds = make_folds(data.size(), 3, 8);
  const auto train_rows = folds.train_indices(0);
  const auto test_rows = folds.test_indices(0);
  const ModelConfig mc;
  auto nn = train_classifier(ModelKind::nn, data, train_rows, FeatureSchema::standard(), mc, TrainConfig{}, 1);
  auto& nn_model = dynamic_cast<NnModel&>(*nn.model);

  EnsembleModel en(sc.dim, FeatureSchema::standard(), mc, 2);
  en.nn_trunk().layer(0) = nn_model.stack().layer(0);
  en.wk_trunk().layer(0).weights.fill(0.0);
  en.wk_trunk().layer(0).bias.fill(0.0);
  en.set_trainable(false, false);
  train(en, data, train_rows, TrainConfig{}, 3);

  const double a_nn = accuracy(nn_model, data, test_rows);
  const double a_en = accuracy(en, data, test_rows);
  MESSAGE("nn " << a_nn << " ensemble " << a_en);
  CHECK(std::abs(a_nn - a_en) <= 0.02);
  // the frozen paths are untouched
  CHECK(en.nn_trunk().layer(0).weights == nn_model.stack().layer(0).weights);
  for (double v : en.wk_trunk().layer(0).weights.values()) CHECK(v == 0.0);
}
