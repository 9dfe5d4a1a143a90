#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "semplaus/corpus.hpp"
#include "semplaus/embeddings.hpp"
#include "semplaus/wk_features.hpp"

namespace semplaus {

/// A generated stand-in for the annotated corpus: nouns with landmark bins,
/// embeddings that encode those bins, and triples labeled by a per-verb
/// relative-attribute rule.
struct SyntheticWorld {
  Vocabulary vocab;
  ProfileMap profiles;
  EmbeddingTable embeddings;
  std::vector<LabeledTriple> triples;
};

struct SyntheticConfig {
  std::size_t nouns = 60;
  std::size_t verbs = 8;
  std::size_t dim = 24;
  std::size_t triples = 600;  // rounded down to even; half positive
  double noise = 0.05;        // uniform embedding noise amplitude
  std::uint64_t seed = 1;
};

/// Each verb compares subject and object on one feature: the triple is
/// plausible when the subject's bin is larger (or smaller, per verb).
SyntheticWorld make_synthetic_world(const SyntheticConfig& config, const FeatureSchema& schema);

/// Linearly separable toy set: every triple has its own subject whose first
/// embedding coordinate is +1 for plausible and -1 for implausible triples.
SyntheticWorld make_separable_world(std::size_t n_triples, std::size_t dim, std::uint64_t seed,
                                    const FeatureSchema& schema);

struct WorldFiles {
  std::string vocab, bins, embeddings, triples;
};

/// Writes the world in the loaders' formats under dir (created if needed).
WorldFiles write_world(const SyntheticWorld& world, const FeatureSchema& schema, const std::string& dir);

}  // namespace semplaus
