#include "semplaus/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"

namespace semplaus {

OovPolicy parse_oov_policy(const std::string& s) {
  if (s == "zero") return OovPolicy::zero;
  if (s == "error") return OovPolicy::error;
  throw ValidationError("unknown OOV policy '" + s + "' (expected zero|error)");
}

EmbeddingTable::EmbeddingTable(const EmbeddingTable& other)
    : dim_(other.dim_), policy_(other.policy_), coverage_(other.coverage_), vectors_(other.vectors_) {}

EmbeddingTable& EmbeddingTable::operator=(const EmbeddingTable& other) {
  if (this != &other) {
    dim_ = other.dim_;
    policy_ = other.policy_;
    coverage_ = other.coverage_;
    vectors_ = other.vectors_;
  }
  return *this;
}

void EmbeddingTable::insert(const std::string& word, std::vector<double> vec) {
  if (vec.size() != dim_) {
    throw ValidationError("vector for '" + word + "' has length " + std::to_string(vec.size()) +
                          ", expected " + std::to_string(dim_));
  }
  for (double v : vec)
    if (!std::isfinite(v)) throw ValidationError("non-finite entry in vector for '" + word + "'");
  vectors_[word] = std::move(vec);
}

const std::vector<double>* EmbeddingTable::find(const std::string& word) const {
  auto it = vectors_.find(word);
  return it == vectors_.end() ? nullptr : &it->second;
}

bool EmbeddingTable::resolve(const std::string& word, std::span<double> out) const {
  if (const auto* v = find(word)) {
    std::copy(v->begin(), v->end(), out.begin());
    return true;
  }
  if (word.find(' ') == std::string::npos) return false;
  std::string hyphenated = word;
  std::replace(hyphenated.begin(), hyphenated.end(), ' ', '-');
  if (const auto* v = find(hyphenated)) {
    std::copy(v->begin(), v->end(), out.begin());
    return true;
  }
  const auto tokens = split_ws(word);
  std::vector<double> acc(dim_, 0.0);
  for (const auto& tok : tokens) {
    const auto* v = find(tok);
    if (!v) return false;
    for (std::size_t i = 0; i < dim_; ++i) acc[i] += (*v)[i];
  }
  for (std::size_t i = 0; i < dim_; ++i) out[i] = acc[i] / static_cast<double>(tokens.size());
  return true;
}

void EmbeddingTable::lookup_into(const std::string& word, std::span<double> out) const {
  if (resolve(word, out)) return;
  if (policy_ == OovPolicy::error) throw ValidationError("word '" + word + "' has no embedding");
  std::fill(out.begin(), out.end(), 0.0);
  std::lock_guard lock(warned_mutex_);
  if (warned_.insert(word).second) spdlog::warn("no embedding for '{}', using zeros", word);
}

std::vector<std::string> EmbeddingTable::words() const {
  std::vector<std::string> out;
  out.reserve(vectors_.size());
  for (const auto& [w, _] : vectors_) out.push_back(w);
  std::sort(out.begin(), out.end());
  return out;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary* vocab, OovPolicy policy) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");

  std::set<std::string> wanted;
  if (vocab) {
    auto want = [&](const std::string& w) {
      wanted.insert(w);
      if (w.find(' ') != std::string::npos) {
        std::string h = w;
        std::replace(h.begin(), h.end(), ' ', '-');
        wanted.insert(h);
        for (const auto& tok : split_ws(w)) wanted.insert(tok);
      }
    };
    for (const auto& w : vocab->verbs()) want(w);
    for (const auto& w : vocab->nouns()) want(w);
  }

  EmbeddingTable table;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> vec;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (lineno == 1 && tok.size() == 2) {
      long long a = 0, b = 0;
      if (parse_int(tok[0], a) && parse_int(tok[1], b)) continue;  // word2vec-style header
    }
    if (dim == 0) {
      if (tok.size() < 2) throw ParseError(path, lineno, "line has no vector");
      dim = tok.size() - 1;
      table = EmbeddingTable(dim, policy);
    }
    if (tok.size() < dim + 1) {
      throw ParseError(path, lineno, "expected " + std::to_string(dim) + " values, found " +
                                         std::to_string(tok.size() - 1));
    }
    // Tokens beyond dim+1 belong to a word containing spaces.
    const std::size_t word_tokens = tok.size() - dim;
    std::string word = tok[0];
    for (std::size_t i = 1; i < word_tokens; ++i) {
      double probe;
      if (parse_double(tok[i], probe)) {
        throw ParseError(path, lineno, "expected " + std::to_string(dim) + " values, found " +
                                           std::to_string(tok.size() - 1));
      }
      word += " " + tok[i];
    }
    if (vocab && !wanted.count(word)) continue;
    vec.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(tok[word_tokens + i], vec[i])) {
        throw ParseError(path, lineno, "unreadable value '" + tok[word_tokens + i] + "'");
      }
    }
    if (!table.contains(word)) table.insert(word, vec);
  }
  if (dim == 0) throw ParseError(path, 0, "no vectors");

  if (vocab && vocab->size() > 0) {
    std::size_t found = 0;
    std::vector<double> scratch(dim);
    for (const auto* list : {&vocab->verbs(), &vocab->nouns()})
      for (const auto& w : *list) found += table.resolve(w, scratch);
    table.set_coverage(static_cast<double>(found) / static_cast<double>(vocab->size()));
  }
  return table;
}

std::vector<double> triple_vector(const Triple& t, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  std::vector<double> out(3 * d);
  std::span<double> all(out);
  table.lookup_into(t.subject, all.subspan(0, d));
  table.lookup_into(t.verb, all.subspan(d, d));
  table.lookup_into(t.object, all.subspan(2 * d, d));
  return out;
}

}  // namespace semplaus
