#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
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

using NounPair = std::pair<std::string, std::string>;

/// Noun pairs with per-feature relative labels. Labels are stored in the
/// dataset's native scheme; a bin-diff dataset also serves 3-level labels.
struct PairDataset {
  std::vector<std::string> features;
  std::vector<int> max_diff;  // per feature: largest |label| in the native scheme
  Scheme native = Scheme::bin_diff;
  std::vector<NounPair> pairs;
  std::vector<std::vector<std::optional<int>>> labels;  // [feature][pair]
  DenseMatrix x;                                        // pairs x 3*dim, once attached

  std::size_t size() const { return pairs.size(); }
  /// Labels of one feature under `scheme`; throws ValidationError when a
  /// 3-level dataset is asked for bin-diff labels.
  std::vector<std::optional<int>> labels_as(std::size_t f, Scheme scheme) const;
  int max_label(std::size_t f, Scheme scheme) const { return scheme == Scheme::three_level ? 1 : max_diff.at(f); }
};

/// n distinct unordered pairs (a < b) drawn uniformly from the profiled
/// nouns, labeled with their bin differences.
PairDataset sample_pairs(const ProfileMap& profiles, const FeatureSchema& schema, std::size_t n, std::uint64_t seed);

/// Fills ds.x with [e(a); e(b); e(a) - e(b)] per pair.
void attach_pair_vectors(PairDataset& ds, const EmbeddingTable& table);

/// Reads pair annotations in the three-level -1/0/1 convention: a header
/// `noun_a, noun_b, feature...` then one row per pair; empty cells are
/// missing labels. Comma or tab separated.
PairDataset load_pair_annotations(const std::string& path);

struct PairSplit {
  std::vector<std::size_t> train, test;
};

/// Splits the labeled rows (missing labels are left out of both sides).
/// With stratify, each class keeps its share of the training rows and at
/// least one row; when that is impossible a warning is logged and the split
/// falls back to plain random selection.
PairSplit split_fraction(const std::vector<std::optional<int>>& labels, double fraction, std::uint64_t seed,
                         bool stratify = true);

/// One-vs-rest L2 logistic regression (penalty 0.5|w|^2, unpenalized bias)
/// over the classes seen in training.
struct MulticlassLr {
  std::vector<int> classes;
  DenseMatrix weights;  // classes x d
  std::vector<double> bias;

  int predict(std::span<const double> x) const;
};

MulticlassLr fit_lr(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> rows,
                    double l2 = 1.0);

/// Cumulative-link logistic model P(y <= c) = sigmoid(theta_c - w.x) over the
/// contiguous class range lo .. lo + thresholds.size().
struct OrdinalLr {
  int lo = 0;
  std::vector<double> w;
  std::vector<double> thresholds;  // strictly increasing

  std::size_t classes() const { return thresholds.size() + 1; }
  double score(std::span<const double> x) const;
  std::vector<double> class_probabilities(std::span<const double> x) const;
  /// Class with the largest P(y = c); ties go to the lower class.
  int predict(std::span<const double> x) const;
};

/// All-threshold maximum likelihood with penalty 0.5|w|^2. Thresholds are
/// parameterized by a base value and log increments, so they stay ordered.
OrdinalLr fit_ordinal(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> rows,
                      double l2 = 1.0);

struct SpreadConfig {
  std::size_t k = 10;
  double alpha = 0.9;
  std::size_t max_iterations = 1000;
  double tolerance = 1e-6;
};

/// Symmetric sparse graph; rows[i] lists (j, weight) with j sorted.
struct SparseGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::size_t size() const { return rows.size(); }
};

/// k-nearest-neighbour graph under cosine similarity (negative similarities
/// clamped to 0), symmetrized by taking the larger of w_ij and w_ji.
SparseGraph knn_graph(const DenseMatrix& x, std::size_t k);

/// D^-1/2 W D^-1/2; isolated nodes keep empty rows.
SparseGraph normalize_graph(const SparseGraph& w);

struct SpreadResult {
  DenseMatrix scores;  // n x C
  std::size_t iterations = 0;
  bool converged = false;
};

/// Iterates F <- alpha S F + (1 - alpha) Y until the largest change is below
/// the tolerance. Warns when the iteration limit is reached.
SpreadResult spread_scores(const SparseGraph& s, const DenseMatrix& y, const SpreadConfig& config);

/// Label spreading on the kNN graph of x. Returns a label for every row;
/// rows no labeled node reaches get the majority training label.
std::vector<int> label_spread(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> train,
                              int lo, int hi, const SpreadConfig& config);

enum class PropagationMethod { lr, ordinal, spread };

PropagationMethod parse_propagation_method(const std::string& s);
std::string propagation_method_name(PropagationMethod m);

/// Fits on train rows and predicts every row of x. Single-class training
/// data yields that class everywhere, with a warning.
std::vector<int> fit_predict(PropagationMethod method, const DenseMatrix& x, std::span<const int> y,
                             std::span<const std::size_t> train, int lo, int hi,
                             const SpreadConfig& spread = {});

struct PropagationScore {
  std::vector<double> per_feature;  // test accuracy per feature
  double mean = 0.0;
};

/// Per-feature split at `fraction`, fit, and test accuracy.
PropagationScore evaluate_propagation(const PairDataset& ds, PropagationMethod method, Scheme scheme,
                                      double fraction, std::uint64_t seed, const SpreadConfig& spread = {});

/// Pair features for the WK path: gold values for the annotated share of
/// the subject-object pairs, predictions for the rest.
class PropagatedPairFeatures : public PairFeatureSource {
 public:
  PairFeatures features(const std::string& subject, const std::string& object, Scheme scheme) const override;

  /// Whether the canonical pair carries gold values; throws if unknown.
  bool is_gold(const std::string& a, const std::string& b) const;
  std::size_t size() const { return values_.size(); }
  std::size_t gold_count() const;
  std::size_t n_features() const { return n_features_; }
  Scheme scheme() const { return scheme_; }

  struct Entry {
    std::vector<int> values;  // for the canonical order (a < b)
    bool gold = false;
  };
  const std::map<NounPair, Entry>& entries() const { return values_; }

 private:
  friend PropagatedPairFeatures propagate_profiles(const ProfileMap&, const FeatureSchema&,
                                                   const std::vector<LabeledTriple>&, const EmbeddingTable&,
                                                   PropagationMethod, Scheme, double, std::uint64_t,
                                                   const SpreadConfig&);
  Scheme scheme_ = Scheme::bin_diff;
  std::size_t n_features_ = 0;
  std::map<NounPair, Entry> values_;
};

/// Collects the distinct subject-object pairs of the triples, keeps gold
/// labels for a `fraction` of them and predicts the rest with `method`
/// trained on that gold share. Throws ValidationError when the gold share
/// is empty but predictions are needed, or a noun has no vector.
PropagatedPairFeatures propagate_profiles(const ProfileMap& gold, const FeatureSchema& schema,
                                          const std::vector<LabeledTriple>& triples, const EmbeddingTable& table,
                                          PropagationMethod method, Scheme scheme, double fraction,
                                          std::uint64_t seed, const SpreadConfig& spread = {});

}  // namespace semplaus
