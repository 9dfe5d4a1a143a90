#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semplaus/corpus.hpp"
#include "semplaus/embeddings.hpp"
#include "semplaus/models.hpp"
#include "semplaus/propagation.hpp"
#include "semplaus/wk_features.hpp"

namespace semplaus {

/// Where the WK path of an ensemble gets its pair features.
enum class WkSource { none, gold, propagated };

/// Flat experiment description. Every field maps to one `key = value` line
/// of a config file; see to_map() for the key names.
struct ExperimentConfig {
  // model
  std::string model = "nn";  // random | lr | nn | wk | nn+wk-gold | nn+wk-prop
  ModelConfig net;
  TrainConfig training;
  // propagation
  PropagationMethod prop_method = PropagationMethod::ordinal;
  double prop_fraction = 0.2;
  SpreadConfig spread;
  std::size_t pair_count = 10000;  // pairs sampled from gold bins
  std::size_t prop_reps = 20;
  // protocol
  int folds = 10;
  std::size_t runs = 20;
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  // error analysis
  std::size_t reps = 200;
  std::size_t top = 200;
  std::string diff_model;
  std::string tags;
  bool auto_tags = false;
  // data
  std::string triples, embeddings, bins, vocab, schema, pair_annotations;
  OovPolicy oov = OovPolicy::zero;
  std::string output = "reports";

  ModelKind kind() const;
  WkSource wk_source() const;

  /// Canonical key -> value form (all keys, sorted).
  std::map<std::string, std::string> to_map() const;
  /// Applies key=value pairs; throws ValidationError on an unknown key or a
  /// malformed value.
  void apply(const std::map<std::string, std::string>& values);
  /// Range checks (folds >= 2, runs >= 1, ...). Paths are checked by
  /// check_paths, which needs to know which inputs a subcommand reads.
  void validate() const;
  void check_paths(const std::vector<std::string>& keys) const;

  /// Hex FNV-1a of the canonical serialization, leaving out keys that do
  /// not affect results (threads, output).
  std::string fingerprint() const;
};

/// Reads `key = value` lines; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

/// Root directory for reports: $SEMPLAUS_OUTPUT_ROOT when set, otherwise
/// the config's output key.
std::string output_root(const ExperimentConfig& config);

struct ExperimentData {
  FeatureSchema schema;
  std::vector<LabeledTriple> triples;
  EmbeddingTable embeddings;
  ProfileMap profiles;  // empty when no bins file is configured
};

/// Loads what the configured model needs.
ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Pair-feature provider for the configured WK source (nullptr for none).
/// Propagation is seeded with `seed`; gold features refer to data.profiles.
std::unique_ptr<PairFeatureSource> make_wk_source(const ExperimentConfig& config, const ExperimentData& data,
                                                  std::uint64_t seed);

/// Encodes the dataset with the features the configured model reads.
EncodedTriples encode_experiment(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed);

struct TriplePrediction {
  std::size_t index = 0;  // into the dataset
  int predicted = 0;
  double probability = 0.0;
};

struct FoldResult {
  std::size_t run = 0;
  int fold = 0;
  double accuracy = 0.0;
  std::vector<TriplePrediction> predictions;
};

struct RunReport {
  std::string fingerprint;
  std::size_t runs = 0;
  int folds = 0;
  std::vector<FoldResult> fold_results;  // completed runs only, ordered by (run, fold)
  std::vector<double> run_accuracy;      // per completed run
  std::vector<std::size_t> completed_runs;
  std::map<std::size_t, std::string> failed_runs;  // run -> first error
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over completed runs
  std::vector<std::size_t> misclassified;  // per triple, over completed runs

  /// True when more than 10% of the runs failed.
  bool too_many_failures() const { return failed_runs.size() * 10 > runs; }
};

/// K-fold CV repeated over derived-seed runs. Run r uses derive_seed(seed, r)
/// for its fold plan, propagation and model seeds, so results do not depend
/// on the thread count.
RunReport run_cv(const ExperimentConfig& config, const ExperimentData& data);

struct ReportFiles {
  std::string folds, predictions, misclassified, summary;
};

ReportFiles write_cv_report(const RunReport& report, const ExperimentConfig& config, const ExperimentData& data,
                            const std::string& dir);
std::string format_cv_summary(const RunReport& report, const ExperimentConfig& config);

struct BenchCell {
  std::string table;  // "top" (external pair data) or "bottom" (pairs from gold bins)
  PropagationMethod method;
  Scheme scheme;
  double fraction;
  double mean;
  std::size_t reps;
};

struct BenchReport {
  std::vector<BenchCell> cells;
  std::vector<std::string> skipped;  // table halves without data
};

/// Propagation accuracy per method, fraction and scheme, averaged over
/// prop_reps seeded repetitions.
BenchReport run_propagation_bench(const ExperimentConfig& config, const ExperimentData& data,
                                  const std::vector<double>& fractions = {0.05, 0.20});
std::string format_bench(const BenchReport& report);
std::string format_bench_tsv(const BenchReport& report);

struct ErrorEntry {
  std::size_t index = 0;
  double frequency = 0.0;
  std::vector<std::string> tags;
};

struct ErrorReport {
  std::size_t repetitions = 0;
  std::vector<ErrorEntry> ranked;  // top-N, frequency nonincreasing
  std::map<std::string, double> tag_share;  // tag -> share of the top-N entries carrying it
  bool diff_mode = false;
};

/// Triple tags, `subject TAB verb TAB object TAB tag[,tag...]`.
std::map<Triple, std::vector<std::string>> load_tags(const std::string& path);

/// Tags each triple with the features on which subject and object differ
/// by at least two bins.
std::map<Triple, std::vector<std::string>> gold_feature_tags(const std::vector<LabeledTriple>& triples,
                                                             const ProfileMap& profiles, const FeatureSchema& schema);

/// Misclassification frequency over `reps` repetitions of the CV protocol.
/// With config.diff_model set, counts repetitions where the configured model
/// is wrong and diff_model is right.
ErrorReport error_analysis(const ExperimentConfig& config, const ExperimentData& data);
std::string format_error_tsv(const ErrorReport& report, const ExperimentData& data);
std::string format_tag_tsv(const ErrorReport& report);

/// Command-line entry point; returns the process exit code
/// (0 success, 1 validation or usage error, 2 runtime failure).
int cli_main(int argc, const char* const* argv);

}  // namespace semplaus
