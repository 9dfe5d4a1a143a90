#pragma once

#include <cstddef>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "semplaus/corpus.hpp"

namespace semplaus {

enum class OovPolicy { zero, error };

OovPolicy parse_oov_policy(const std::string& s);

/// Pretrained word vectors, restricted to the words an experiment needs.
///
/// Lookups are read-only and may run concurrently. Words missing from the
/// table either contribute a zero block (logged once per word) or raise,
/// depending on the policy.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, OovPolicy policy) : dim_(dim), policy_(policy) {}
  EmbeddingTable(const EmbeddingTable& other);
  EmbeddingTable& operator=(const EmbeddingTable& other);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  OovPolicy oov_policy() const { return policy_; }
  void set_oov_policy(OovPolicy p) { policy_ = p; }

  /// Fraction of requested vocabulary words found at load time.
  double coverage() const { return coverage_; }
  void set_coverage(double c) { coverage_ = c; }

  /// Throws ValidationError on a length mismatch or a non-finite entry.
  void insert(const std::string& word, std::vector<double> vec);

  bool contains(const std::string& word) const { return vectors_.count(word) != 0; }
  const std::vector<double>* find(const std::string& word) const;

  /// Exact match, then the hyphenated form of a multiword entry, then the
  /// mean of its token vectors. Returns false when none resolve.
  bool resolve(const std::string& word, std::span<double> out) const;

  /// Writes the vector for `word` into out, applying the OOV policy.
  void lookup_into(const std::string& word, std::span<double> out) const;

  std::vector<std::string> words() const;

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && vectors_ == other.vectors_;
  }

 private:
  std::size_t dim_ = 0;
  OovPolicy policy_ = OovPolicy::zero;
  double coverage_ = 1.0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
  mutable std::mutex warned_mutex_;
  mutable std::set<std::string> warned_;
};

/// Reads the whitespace-separated `word v1 ... vd` text format. An optional
/// `count dim` header line is skipped. When vocab is given, only vocabulary
/// words (and the tokens of multiword entries) are kept.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary* vocab = nullptr,
                               OovPolicy policy = OovPolicy::zero);

/// [emb(s); emb(v); emb(o)], length 3 * dim.
std::vector<double> triple_vector(const Triple& t, const EmbeddingTable& table);

}  // namespace semplaus
