#include "semplaus/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "semplaus/common.hpp"

namespace semplaus {

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

void random_profile(ProfileMap& profiles, const std::string& noun, const FeatureSchema& schema, Rng& rng) {
  NounProfile p{noun, std::vector<int>(schema.size())};
  for (std::size_t f = 0; f < schema.size(); ++f)
    p.bins[f] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schema[f].bins())));
  profiles.emplace(noun, std::move(p));
}

std::vector<double> random_vector(std::size_t dim, double amplitude, Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.uniform(-amplitude, amplitude);
  return v;
}

}  // namespace

SyntheticWorld make_synthetic_world(const SyntheticConfig& config, const FeatureSchema& schema) {
  if (config.nouns < 2 || config.verbs < 1 || config.dim < 1)
    throw ValidationError("synthetic world needs at least 2 nouns, 1 verb and dim >= 1");
  SyntheticWorld w;
  w.embeddings = EmbeddingTable(config.dim, OovPolicy::error);
  Rng rng(config.seed);

  std::vector<std::vector<double>> directions;
  for (std::size_t f = 0; f < schema.size(); ++f) directions.push_back(random_vector(config.dim, 1.0, rng));

  std::vector<std::string> nouns, verbs;
  for (std::size_t i = 0; i < config.nouns; ++i) {
    const auto noun = numbered("noun", i, 3);
    nouns.push_back(noun);
    w.vocab.add_noun(noun);
    w.vocab.set_concreteness(noun, 5.0);
    random_profile(w.profiles, noun, schema, rng);
    const auto& bins = w.profiles.at(noun).bins;
    auto vec = random_vector(config.dim, config.noise, rng);
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const double z = schema[f].bins() > 1 ? 2.0 * (bins[f] - 1) / (schema[f].bins() - 1) - 1.0 : 0.0;
      for (std::size_t j = 0; j < config.dim; ++j) vec[j] += z * directions[f][j];
    }
    w.embeddings.insert(noun, std::move(vec));
  }

  struct Rule {
    std::size_t feature;
    int direction;
  };
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < config.verbs; ++i) {
    const auto verb = numbered("verb", i, 2);
    verbs.push_back(verb);
    w.vocab.add_verb(verb);
    w.vocab.set_concreteness(verb, 5.0);
    w.embeddings.insert(verb, random_vector(config.dim, 1.0, rng));
    rules.push_back({i % schema.size(), (i / schema.size()) % 2 == 0 ? 1 : -1});
  }

  const std::size_t half = config.triples / 2;
  std::size_t quota[2] = {half, half};
  std::set<Triple> seen;
  const std::size_t max_attempts = 1000 * (config.triples + 1);
  for (std::size_t attempt = 0; quota[0] + quota[1] > 0; ++attempt) {
    if (attempt == max_attempts) throw ValidationError("cannot draw a balanced synthetic triple set of that size");
    const std::size_t s = rng.below(nouns.size());
    std::size_t o = rng.below(nouns.size() - 1);
    if (o >= s) ++o;
    const std::size_t v = rng.below(verbs.size());
    const Triple t{nouns[s], verbs[v], nouns[o]};
    const int d = rules[v].direction * bin_diff(w.profiles.at(t.subject), w.profiles.at(t.object), rules[v].feature);
    const int label = d > 0 ? 1 : 0;
    if (quota[label] == 0 || !seen.insert(t).second) continue;
    --quota[label];
    w.triples.push_back({t, label, std::nullopt});
  }
  return w;
}

SyntheticWorld make_separable_world(std::size_t n_triples, std::size_t dim, std::uint64_t seed,
                                    const FeatureSchema& schema) {
  if (dim < 1 || n_triples < 2) throw ValidationError("separable world needs dim >= 1 and at least 2 triples");
  SyntheticWorld w;
  w.embeddings = EmbeddingTable(dim, OovPolicy::error);
  Rng rng(seed);
  constexpr std::size_t kVerbs = 3, kObjects = 4;
  for (std::size_t i = 0; i < kVerbs; ++i) {
    const auto verb = numbered("verb", i, 2);
    w.vocab.add_verb(verb);
    w.embeddings.insert(verb, random_vector(dim, 0.3, rng));
  }
  for (std::size_t i = 0; i < kObjects; ++i) {
    const auto noun = numbered("obj", i, 2);
    w.vocab.add_noun(noun);
    w.embeddings.insert(noun, random_vector(dim, 0.3, rng));
    random_profile(w.profiles, noun, schema, rng);
  }
  for (std::size_t i = 0; i < n_triples; ++i) {
    const auto subject = numbered("subj", i, 3);
    const int label = i % 2 == 0 ? 1 : 0;
    w.vocab.add_noun(subject);
    auto vec = random_vector(dim, 0.3, rng);
    vec[0] = label == 1 ? 1.0 : -1.0;
    w.embeddings.insert(subject, std::move(vec));
    random_profile(w.profiles, subject, schema, rng);
    w.triples.push_back({{subject, numbered("verb", i % kVerbs, 2), numbered("obj", i % kObjects, 2)}, label, std::nullopt});
  }
  for (const auto& noun : w.vocab.nouns()) w.vocab.set_concreteness(noun, 5.0);
  for (const auto& verb : w.vocab.verbs()) w.vocab.set_concreteness(verb, 5.0);
  return w;
}

WorldFiles write_world(const SyntheticWorld& world, const FeatureSchema& schema, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  WorldFiles files{(base / "vocab.tsv").string(), (base / "bins.tsv").string(), (base / "embeddings.txt").string(),
                   (base / "triples.tsv").string()};

  std::ofstream vocab(files.vocab, std::ios::binary);
  if (!vocab) throw std::runtime_error("cannot write " + files.vocab);
  vocab << "word\tpos\tconcreteness\n";
  auto concreteness = [&](const std::string& word) {
    auto it = world.vocab.concreteness().find(word);
    return it == world.vocab.concreteness().end() ? 5.0 : it->second;
  };
  for (const auto& v : world.vocab.verbs()) vocab << v << "\tverb\t" << concreteness(v) << '\n';
  for (const auto& n : world.vocab.nouns()) vocab << n << "\tnoun\t" << concreteness(n) << '\n';

  save_bins(files.bins, world.profiles, schema);

  std::ofstream emb(files.embeddings, std::ios::binary);
  if (!emb) throw std::runtime_error("cannot write " + files.embeddings);
  char buf[32];
  for (const auto& word : world.embeddings.words()) {
    emb << word;
    for (double x : *world.embeddings.find(word)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      emb << buf;
    }
    emb << '\n';
  }

  save_triples(files.triples, world.triples);
  return files;
}

}  // namespace semplaus
