#include "semplaus/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "semplaus/common.hpp"

namespace semplaus {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return in;
}

bool is_verb_tag(const std::string& t) {
  const std::string l = to_lower(t);
  return l == "verb" || l == "v";
}

bool is_noun_tag(const std::string& t) {
  const std::string l = to_lower(t);
  return l == "noun" || l == "n";
}

void fields_of(const std::string& line, std::vector<std::string>& out) {
  out = split(line, '\t');
  for (auto& f : out) f = trim(f);
}

}  // namespace

void Vocabulary::add_verb(const std::string& w) {
  if (noun_set_.count(w)) throw ValidationError("word '" + w + "' listed as both noun and verb");
  if (verb_set_.insert(w).second) verbs_.push_back(w);
}

void Vocabulary::add_noun(const std::string& w) {
  if (verb_set_.count(w)) throw ValidationError("word '" + w + "' listed as both noun and verb");
  if (noun_set_.insert(w).second) nouns_.push_back(w);
}

Vocabulary load_vocabulary(const std::string& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  std::size_t rows = 0;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    fields_of(line, f);
    if (f.size() < 2 || f.size() > 3) {
      throw ParseError(path, lineno, "expected 'word<TAB>pos[<TAB>concreteness]'");
    }
    const bool verb = is_verb_tag(f[1]);
    const bool noun = is_noun_tag(f[1]);
    if (!verb && !noun) {
      if (rows == 0 && lineno == 1) continue;  // header
      throw ParseError(path, lineno, "unknown part of speech '" + f[1] + "'");
    }
    ++rows;
    const std::string word = to_lower(f[0]);
    if (word.empty()) throw ParseError(path, lineno, "empty word");
    if (f.size() == 3) {
      double c = 0;
      if (!parse_double(f[2], c)) throw ParseError(path, lineno, "bad concreteness '" + f[2] + "'");
      if (c < kConcretenessThreshold) continue;
      vocab.set_concreteness(word, c);
    }
    try {
      verb ? vocab.add_verb(word) : vocab.add_noun(word);
    } catch (const ValidationError& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  if (vocab.size() == 0) throw ParseError(path, 0, "no entries");
  return vocab;
}

std::vector<AnnotationRecord> load_votes(const std::string& path) {
  auto in = open_input(path);
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    fields_of(line, f);
    if (f.size() < 4) throw ParseError(path, lineno, "expected subject, verb, object and votes");
    AnnotationRecord r;
    r.triple = {to_lower(f[0]), to_lower(f[1]), to_lower(f[2])};
    for (std::size_t i = 3; i < f.size(); ++i) {
      if (f[i] != "0" && f[i] != "1") throw ParseError(path, lineno, "vote must be 0 or 1");
      r.votes.push_back(f[i] == "1");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledTriple> aggregate_votes(const std::vector<AnnotationRecord>& records,
                                           const AggregationRule& rule) {
  std::vector<LabeledTriple> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.votes.size() != rule.votes_per_item) {
      throw ValidationError("triple " + r.triple.str() + " has " + std::to_string(r.votes.size()) +
                            " votes, expected " + std::to_string(rule.votes_per_item));
    }
    int yes = 0;
    for (int v : r.votes) yes += v != 0;
    const int no = static_cast<int>(r.votes.size()) - yes;
    // Ties (even vote counts) carry no majority and fail any min_agreement > n/2.
    const int agreement = std::max(yes, no);
    if (agreement < rule.min_agreement || yes == no) continue;
    out.push_back({r.triple, yes > no ? 1 : 0, agreement});
  }
  return out;
}

std::vector<LabeledTriple> load_triples(const std::string& path) {
  auto in = open_input(path);
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    fields_of(line, f);
    if (f.size() != 4 && f.size() != 5) {
      throw ParseError(path, lineno, "expected 'subject<TAB>verb<TAB>object<TAB>label[<TAB>agreement]'");
    }
    LabeledTriple t;
    t.triple = {to_lower(f[0]), to_lower(f[1]), to_lower(f[2])};
    if (f[3] != "0" && f[3] != "1") throw ParseError(path, lineno, "label must be 0 or 1");
    t.label = f[3] == "1";
    if (f.size() == 5) {
      long long a = 0;
      if (!parse_int(f[4], a) || a < 0) throw ParseError(path, lineno, "bad agreement '" + f[4] + "'");
      t.agreement = static_cast<int>(a);
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_triples(const std::string& path, const std::vector<LabeledTriple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& t : triples) {
    out << t.triple.subject << '\t' << t.triple.verb << '\t' << t.triple.object << '\t' << t.label;
    if (t.agreement) out << '\t' << *t.agreement;
    out << '\n';
  }
}

std::vector<Triple> generate_candidate_triples(const std::vector<SvPair>& sv_pairs,
                                               const std::vector<VoPair>& vo_pairs,
                                               std::uint64_t seed, std::size_t n) {
  if (sv_pairs.empty() || vo_pairs.empty()) throw ValidationError("pair lists must be nonempty");
  std::map<std::string, std::set<std::string>> subjects_of, objects_of;
  for (const auto& [s, v] : sv_pairs) subjects_of[v].insert(s);
  for (const auto& [v, o] : vo_pairs) objects_of[v].insert(o);

  // Enumerate the full join in sorted order so sampling depends only on the seed.
  std::vector<Triple> joins;
  for (const auto& [verb, subjects] : subjects_of) {
    auto it = objects_of.find(verb);
    if (it == objects_of.end()) continue;
    for (const auto& s : subjects)
      for (const auto& o : it->second) joins.push_back({s, verb, o});
  }
  if (joins.empty()) throw ValidationError("no joinable verb between s-v and v-o pairs");
  if (n > joins.size()) {
    throw ValidationError("requested " + std::to_string(n) + " triples but only " +
                          std::to_string(joins.size()) + " distinct joins exist");
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(joins[i], joins[i + rng.below(joins.size() - i)]);
  }
  joins.resize(n);
  return joins;
}

FoldPlan make_folds(std::size_t n_items, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k must be at least 2");
  if (n_items < static_cast<std::size_t>(k)) {
    throw ValidationError("cannot split " + std::to_string(n_items) + " items into " +
                          std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n_items);
  for (std::size_t i = 0; i < n_items; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.fold_of.assign(n_items, 0);
  for (std::size_t pos = 0; pos < n_items; ++pos) {
    plan.fold_of[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return plan;
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int f : fold_of) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

DatasetStats dataset_stats(const std::vector<LabeledTriple>& dataset, const Vocabulary* vocab) {
  if (dataset.empty()) throw ValidationError("dataset is empty");
  DatasetStats s;
  s.count = dataset.size();
  std::set<std::string> subj, verbs, obj, nouns;
  std::size_t ge3 = 0, ge4 = 0, eq5 = 0;
  for (const auto& t : dataset) {
    s.positives += t.label == 1;
    subj.insert(t.triple.subject);
    verbs.insert(t.triple.verb);
    obj.insert(t.triple.object);
    nouns.insert(t.triple.subject);
    nouns.insert(t.triple.object);
    if (t.agreement) {
      ++s.agreement_known;
      ++s.agreement_histogram[*t.agreement];
      ge3 += *t.agreement >= 3;
      ge4 += *t.agreement >= 4;
      eq5 += *t.agreement == 5;
    }
  }
  s.balance = static_cast<double>(s.positives) / static_cast<double>(s.count);
  if (s.agreement_known) {
    const double k = static_cast<double>(s.agreement_known);
    s.agree_ge3 = ge3 / k;
    s.agree_ge4 = ge4 / k;
    s.agree_eq5 = eq5 / k;
  }
  s.distinct_subjects = subj.size();
  s.distinct_verbs = verbs.size();
  s.distinct_objects = obj.size();
  s.distinct_nouns = nouns.size();
  if (vocab) {
    std::size_t vv = 0, nn = 0;
    for (const auto& v : vocab->verbs()) vv += verbs.count(v);
    for (const auto& n : vocab->nouns()) nn += nouns.count(n);
    if (!vocab->verbs().empty()) s.verb_coverage = static_cast<double>(vv) / vocab->verbs().size();
    if (!vocab->nouns().empty()) s.noun_coverage = static_cast<double>(nn) / vocab->nouns().size();
  }
  return s;
}

namespace {
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
}  // namespace

std::string format_stats_text(const DatasetStats& s) {
  std::ostringstream o;
  o << "triples:          " << s.count << "\n"
    << "plausible:        " << s.positives << " (balance " << fmt_double(s.balance) << ")\n"
    << "distinct nouns:   " << s.distinct_nouns << " (subjects " << s.distinct_subjects
    << ", objects " << s.distinct_objects << ")\n"
    << "distinct verbs:   " << s.distinct_verbs << "\n";
  if (s.agreement_known) {
    o << "agreement >= 3:   " << fmt_double(100 * s.agree_ge3) << "%\n"
      << "agreement >= 4:   " << fmt_double(100 * s.agree_ge4) << "%\n"
      << "agreement == 5:   " << fmt_double(100 * s.agree_eq5) << "%\n";
  } else {
    o << "agreement:        unknown (no vote data)\n";
  }
  if (s.verb_coverage) o << "verb coverage:    " << fmt_double(*s.verb_coverage) << "\n";
  if (s.noun_coverage) o << "noun coverage:    " << fmt_double(*s.noun_coverage) << "\n";
  return o.str();
}

std::string format_stats_kv(const DatasetStats& s) {
  std::ostringstream o;
  o << "count=" << s.count << "\n"
    << "positives=" << s.positives << "\n"
    << "balance=" << fmt_double(s.balance) << "\n"
    << "distinct_nouns=" << s.distinct_nouns << "\n"
    << "distinct_verbs=" << s.distinct_verbs << "\n"
    << "agreement_known=" << s.agreement_known << "\n";
  for (const auto& [a, c] : s.agreement_histogram) o << "agreement_" << a << "=" << c << "\n";
  if (s.agreement_known) {
    o << "agree_ge3=" << fmt_double(s.agree_ge3) << "\n"
      << "agree_ge4=" << fmt_double(s.agree_ge4) << "\n"
      << "agree_eq5=" << fmt_double(s.agree_eq5) << "\n";
  }
  if (s.verb_coverage) o << "verb_coverage=" << fmt_double(*s.verb_coverage) << "\n";
  if (s.noun_coverage) o << "noun_coverage=" << fmt_double(*s.noun_coverage) << "\n";
  return o.str();
}

}  // namespace semplaus
