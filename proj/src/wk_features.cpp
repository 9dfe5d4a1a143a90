#include "semplaus/wk_features.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"

namespace semplaus {

Scheme parse_scheme(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "3l" || l == "3-level" || l == "three_level") return Scheme::three_level;
  if (l == "bin" || l == "bin-diff" || l == "bin_diff") return Scheme::bin_diff;
  throw ValidationError("unknown scheme '" + s + "' (expected 3l|bin)");
}

std::string scheme_name(Scheme s) { return s == Scheme::three_level ? "3l" : "bin"; }

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.landmarks.size() < 2) throw ValidationError("feature '" + f.name + "' needs at least 2 landmarks");
    if (!seen.insert(f.name).second) throw ValidationError("duplicate feature '" + f.name + "'");
  }
  if (features_.empty()) throw ValidationError("schema has no features");
}

FeatureSchema FeatureSchema::standard() {
  return FeatureSchema({
      {"sentience", {"rock", "tree", "ant", "cat", "chimp", "man"}},
      {"mass-count", {"milk", "sand", "pebbles", "car"}},
      {"phase", {"smoke", "milk", "wood"}},
      {"size", {"watch", "book", "cat", "person", "jeep", "stadium"}},
      {"weight", {"watch", "book", "dumbbell", "man", "jeep", "stadium"}},
      {"rigidity", {"water", "skin", "leather", "wood", "metal"}},
  });
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::vector<FeatureSpec> specs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, lineno, "expected 'feature = landmark, ...'");
    FeatureSpec spec;
    spec.name = to_lower(trim(line.substr(0, eq)));
    for (auto& w : split(line.substr(eq + 1), ',')) {
      w = trim(w);
      if (w.empty()) throw ParseError(path, lineno, "empty landmark");
      spec.landmarks.push_back(to_lower(w));
    }
    specs.push_back(std::move(spec));
  }
  try {
    return FeatureSchema(std::move(specs));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  throw ValidationError("unknown feature '" + name + "'");
}

int FeatureSchema::block_width(std::size_t f, Scheme scheme) const {
  return scheme == Scheme::three_level ? 3 : 2 * features_.at(f).bins() - 1;
}

int FeatureSchema::offset(std::size_t f, Scheme scheme) const {
  return scheme == Scheme::three_level ? 1 : features_.at(f).bins() - 1;
}

int FeatureSchema::raw_width(Scheme scheme) const {
  int w = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) w += block_width(f, scheme);
  return w;
}

ProfileMap load_bins(const std::string& path, const FeatureSchema& schema, const Vocabulary* vocab) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::map<std::string, std::vector<int>> partial;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split(line, '\t');
    for (auto& x : f) x = trim(x);
    if (f.size() != 3) throw ParseError(path, lineno, "expected 'noun<TAB>feature<TAB>bin'");
    long long bin = 0;
    if (!parse_int(f[2], bin)) {
      if (lineno == 1) continue;  // header
      throw ParseError(path, lineno, "bin must be an integer");
    }
    const std::string noun = to_lower(f[0]);
    std::size_t fi = 0;
    try {
      fi = schema.index_of(to_lower(f[1]));
    } catch (const ValidationError& e) {
      throw ParseError(path, lineno, e.what());
    }
    if (bin < 1 || bin > schema[fi].bins()) {
      throw ParseError(path, lineno, "bin " + f[2] + " out of range [1, " +
                                         std::to_string(schema[fi].bins()) + "] for " + schema[fi].name);
    }
    if (vocab && !vocab->has_noun(noun)) continue;
    auto& bins = partial[noun];
    if (bins.empty()) bins.assign(schema.size(), 0);
    if (bins[fi] != 0 && bins[fi] != bin) {
      throw ParseError(path, lineno, "conflicting bins for " + noun + "/" + schema[fi].name);
    }
    bins[fi] = static_cast<int>(bin);
  }
  ProfileMap out;
  for (auto& [noun, bins] : partial) {
    bool complete = true;
    for (int b : bins) complete &= b != 0;
    if (!complete) {
      spdlog::warn("{}: noun '{}' is missing features; dropped", path, noun);
      continue;
    }
    out.emplace(noun, NounProfile{noun, std::move(bins)});
  }
  return out;
}

void save_bins(const std::string& path, const ProfileMap& profiles, const FeatureSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [noun, p] : profiles)
    for (std::size_t f = 0; f < schema.size(); ++f)
      out << noun << '\t' << schema[f].name << '\t' << p.bins[f] << '\n';
}

int bin_diff(const NounProfile& s, const NounProfile& o, std::size_t f) {
  return s.bins.at(f) - o.bins.at(f);
}

int three_level(const NounProfile& s, const NounProfile& o, std::size_t f) {
  const int d = bin_diff(s, o, f);
  return (d > 0) - (d < 0);
}

PairFeatures pair_features(const NounProfile& s, const NounProfile& o, Scheme scheme) {
  PairFeatures p;
  p.scheme = scheme;
  p.values.resize(s.bins.size());
  for (std::size_t f = 0; f < s.bins.size(); ++f)
    p.values[f] = scheme == Scheme::three_level ? three_level(s, o, f) : bin_diff(s, o, f);
  return p;
}

PairFeatures to_three_level(const PairFeatures& p) {
  PairFeatures out{Scheme::three_level, p.values};
  for (auto& v : out.values) v = (v > 0) - (v < 0);
  return out;
}

PairFeatures swapped(const PairFeatures& p) {
  PairFeatures out = p;
  for (auto& v : out.values) v = -v;
  return out;
}

std::vector<double> encode_raw_onehot(const PairFeatures& p, const FeatureSchema& schema) {
  if (p.values.size() != schema.size()) throw std::logic_error("pair features do not match schema");
  std::vector<double> out(static_cast<std::size_t>(schema.raw_width(p.scheme)), 0.0);
  std::size_t base = 0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const int width = schema.block_width(f, p.scheme);
    const int idx = p.values[f] + schema.offset(f, p.scheme);
    if (idx < 0 || idx >= width) {
      throw std::logic_error("value " + std::to_string(p.values[f]) + " out of range for " + schema[f].name);
    }
    out[base + static_cast<std::size_t>(idx)] = 1.0;
    base += static_cast<std::size_t>(width);
  }
  return out;
}

std::vector<int> encode_indices(const PairFeatures& p, const FeatureSchema& schema) {
  if (p.values.size() != schema.size()) throw std::logic_error("pair features do not match schema");
  std::vector<int> out(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    out[f] = p.values[f] + schema.offset(f, p.scheme);
    if (out[f] < 0 || out[f] >= schema.block_width(f, p.scheme)) {
      throw std::logic_error("value " + std::to_string(p.values[f]) + " out of range for " + schema[f].name);
    }
  }
  return out;
}

int decode_index(int index, std::size_t f, Scheme scheme, const FeatureSchema& schema) {
  return index - schema.offset(f, scheme);
}

PairFeatures GoldPairFeatures::features(const std::string& subject, const std::string& object, Scheme scheme) const {
  auto s = profiles_.find(subject);
  if (s == profiles_.end()) throw ValidationError("no feature profile for noun '" + subject + "'");
  auto o = profiles_.find(object);
  if (o == profiles_.end()) throw ValidationError("no feature profile for noun '" + object + "'");
  return pair_features(s->second, o->second, scheme);
}

}  // namespace semplaus
