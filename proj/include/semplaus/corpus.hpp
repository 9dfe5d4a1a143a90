#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace semplaus {

/// Admission threshold on the 0-5 concreteness scale.
inline constexpr double kConcretenessThreshold = 4.95;

struct Triple {
  std::string subject;
  std::string verb;
  std::string object;

  auto operator<=>(const Triple&) const = default;
  std::string str() const { return subject + "-" + verb + "-" + object; }
};

/// Fixed word inventory. Verbs and nouns are kept in file order.
class Vocabulary {
 public:
  const std::vector<std::string>& verbs() const { return verbs_; }
  const std::vector<std::string>& nouns() const { return nouns_; }
  const std::map<std::string, double>& concreteness() const { return concreteness_; }

  bool has_verb(const std::string& w) const { return verb_set_.count(w) != 0; }
  bool has_noun(const std::string& w) const { return noun_set_.count(w) != 0; }
  bool contains(const std::string& w) const { return has_verb(w) || has_noun(w); }
  std::size_t size() const { return verbs_.size() + nouns_.size(); }

  /// Throws ValidationError if the word is already present under the other part of speech.
  void add_verb(const std::string& w);
  void add_noun(const std::string& w);
  void set_concreteness(const std::string& w, double c) { concreteness_[w] = c; }

 private:
  std::vector<std::string> verbs_, nouns_;
  std::set<std::string> verb_set_, noun_set_;
  std::map<std::string, double> concreteness_;
};

/// One crowd-annotated triple with its raw binary votes (1 = plausible).
struct AnnotationRecord {
  Triple triple;
  std::vector<int> votes;
};

struct LabeledTriple {
  Triple triple;
  int label = 0;
  /// Votes agreeing with the majority; absent when loaded from a file without votes.
  std::optional<int> agreement;
};

struct AggregationRule {
  std::size_t votes_per_item = 5;
  int min_agreement = 3;
};

struct FoldPlan {
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<int> fold_of;  // item index -> fold id

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

struct DatasetStats {
  std::size_t count = 0;
  std::size_t positives = 0;
  double balance = 0.0;  // fraction labeled plausible
  std::map<int, std::size_t> agreement_histogram;
  std::size_t agreement_known = 0;
  double agree_ge3 = 0.0, agree_ge4 = 0.0, agree_eq5 = 0.0;
  std::size_t distinct_subjects = 0, distinct_verbs = 0, distinct_objects = 0;
  std::size_t distinct_nouns = 0;
  // Filled only when a vocabulary is supplied.
  std::optional<double> verb_coverage, noun_coverage;
};

/// Reads `word TAB pos TAB concreteness` rows (concreteness optional).
/// A leading header row is skipped. Rows below the concreteness threshold are dropped.
Vocabulary load_vocabulary(const std::string& path);

/// Reads `subject TAB verb TAB object TAB vote...` rows.
std::vector<AnnotationRecord> load_votes(const std::string& path);

/// Majority-vote aggregation. Records below rule.min_agreement are dropped.
std::vector<LabeledTriple> aggregate_votes(const std::vector<AnnotationRecord>& records,
                                           const AggregationRule& rule = {});

/// Canonical triple file: `subject TAB verb TAB object TAB label [TAB agreement]`.
std::vector<LabeledTriple> load_triples(const std::string& path);
void save_triples(const std::string& path, const std::vector<LabeledTriple>& triples);

using SvPair = std::pair<std::string, std::string>;  // (subject, verb)
using VoPair = std::pair<std::string, std::string>;  // (verb, object)

/// Samples n distinct joins (s,v,o) of an s-v pair with a v-o pair on the shared verb.
std::vector<Triple> generate_candidate_triples(const std::vector<SvPair>& sv_pairs,
                                               const std::vector<VoPair>& vo_pairs,
                                               std::uint64_t seed, std::size_t n);

/// Deterministic shuffled K-fold assignment; fold sizes differ by at most one.
FoldPlan make_folds(std::size_t n_items, int k, std::uint64_t seed);

DatasetStats dataset_stats(const std::vector<LabeledTriple>& dataset,
                           const Vocabulary* vocab = nullptr);
std::string format_stats_text(const DatasetStats& s);
std::string format_stats_kv(const DatasetStats& s);

}  // namespace semplaus
