#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "semplaus/corpus.hpp"

namespace semplaus {

/// Relative-attribute encoding of a subject-object pair.
enum class Scheme {
  three_level,  // sign of the bin difference: -1, 0, +1
  bin_diff,     // signed bin difference in [-(B-1), B-1]
};

Scheme parse_scheme(const std::string& s);
std::string scheme_name(Scheme s);

struct FeatureSpec {
  std::string name;
  std::vector<std::string> landmarks;  // ascending along the attribute's scale

  int bins() const { return static_cast<int>(landmarks.size()); }
};

/// Ordered feature list with landmark words. The default schema holds the
/// six physical attributes; a config file can replace it.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  static FeatureSchema standard();

  /// Lines of `name = landmark1, landmark2, ...`; '#' starts a comment.
  static FeatureSchema load(const std::string& path);

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }

  /// Index of a feature by name; throws ValidationError if unknown.
  std::size_t index_of(const std::string& name) const;

  /// One-hot block width: 3 for three_level, 2B-1 for bin_diff.
  int block_width(std::size_t f, Scheme scheme) const;
  /// Value-to-index offset: 1 for three_level, B-1 for bin_diff.
  int offset(std::size_t f, Scheme scheme) const;
  int min_value(std::size_t f, Scheme scheme) const { return -offset(f, scheme); }
  int max_value(std::size_t f, Scheme scheme) const { return offset(f, scheme); }
  int raw_width(Scheme scheme) const;

 private:
  std::vector<FeatureSpec> features_;
};

/// Per-noun landmark bin, 1-based, one entry per schema feature.
struct NounProfile {
  std::string noun;
  std::vector<int> bins;
};

struct PairFeatures {
  Scheme scheme = Scheme::bin_diff;
  std::vector<int> values;  // one per schema feature

  bool operator==(const PairFeatures&) const = default;
};

using ProfileMap = std::map<std::string, NounProfile>;

/// Reads `noun TAB feature TAB bin` rows. Nouns missing any feature are
/// dropped with a warning. When vocab is given, nouns outside it are skipped.
ProfileMap load_bins(const std::string& path, const FeatureSchema& schema,
                     const Vocabulary* vocab = nullptr);

/// Writes profiles back in the same row format.
void save_bins(const std::string& path, const ProfileMap& profiles, const FeatureSchema& schema);

int bin_diff(const NounProfile& s, const NounProfile& o, std::size_t f);
int three_level(const NounProfile& s, const NounProfile& o, std::size_t f);

PairFeatures pair_features(const NounProfile& s, const NounProfile& o, Scheme scheme);

/// Reduces a bin_diff encoding to three_level (sign per feature).
PairFeatures to_three_level(const PairFeatures& p);

/// Negated values: the encoding of the swapped pair.
PairFeatures swapped(const PairFeatures& p);

/// Concatenated one-hot blocks in schema order.
std::vector<double> encode_raw_onehot(const PairFeatures& p, const FeatureSchema& schema);

/// Per-feature index of the value within its block (value + offset).
std::vector<int> encode_indices(const PairFeatures& p, const FeatureSchema& schema);

int decode_index(int index, std::size_t f, Scheme scheme, const FeatureSchema& schema);

/// Supplies subject-object pair features to the WK path of a model.
class PairFeatureSource {
 public:
  virtual ~PairFeatureSource() = default;
  /// Throws ValidationError naming the noun when no features are available.
  virtual PairFeatures features(const std::string& subject, const std::string& object, Scheme scheme) const = 0;
};

/// Pair features computed from annotated noun profiles.
class GoldPairFeatures : public PairFeatureSource {
 public:
  explicit GoldPairFeatures(const ProfileMap& profiles) : profiles_(profiles) {}
  PairFeatures features(const std::string& subject, const std::string& object, Scheme scheme) const override;

 private:
  const ProfileMap& profiles_;
};

}  // namespace semplaus
