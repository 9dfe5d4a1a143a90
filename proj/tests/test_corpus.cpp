#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "semplaus/common.hpp"
#include "semplaus/corpus.hpp"
#include "test_util.hpp"

using namespace semplaus;
using semplaus::testing::TempDir;

namespace {

// Independent line scan: counts data rows whose concreteness clears the threshold.
std::size_t count_admitted(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto cols = split(line, '\t');
    if (cols.size() != 3) continue;
    double c;
    if (parse_double(cols[2], c) && c >= 4.95) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("load_vocabulary reads verbs and nouns in file order") {
  TempDir dir;
  const std::string content =
      "word\tpos\tconcreteness\n"
      "swallow\tVERB\t4.96\n"
      "man\tNOUN\t4.97\n"
      "candy\tNOUN\t5.00\n"
      "eat\tVERB\t4.99\n";
  const auto vocab = load_vocabulary(dir.write("v.tsv", content));
  CHECK(vocab.verbs() == std::vector<std::string>{"swallow", "eat"});
  CHECK(vocab.nouns() == std::vector<std::string>{"man", "candy"});
  CHECK(vocab.concreteness().at("candy") == doctest::Approx(5.0));
}

TEST_CASE("load_vocabulary drops words below the concreteness threshold") {
  TempDir dir;
  std::string content = "swallow\tVERB\t4.96\nman\tNOUN\t4.97\ncandy\tNOUN\t5.00\n";
  const auto before = load_vocabulary(dir.write("a.tsv", content));
  content += "ghost\tNOUN\t3.1\n";
  const auto after = load_vocabulary(dir.write("b.tsv", content));
  CHECK(after.size() == count_admitted(content));
  CHECK(after.size() == before.size());
  CHECK_FALSE(after.has_noun("ghost"));

  // Removing an admitted row shrinks the vocabulary by exactly one.
  const std::string fewer = "swallow\tVERB\t4.96\nman\tNOUN\t4.97\nghost\tNOUN\t3.1\n";
  CHECK(load_vocabulary(dir.write("c.tsv", fewer)).size() == count_admitted(fewer));
  CHECK(count_admitted(fewer) == before.size() - 1);
}

TEST_CASE("load_vocabulary error paths") {
  TempDir dir;
  SUBCASE("empty but headered") {
    try {
      load_vocabulary(dir.write("h.tsv", "word\tpos\tconcreteness\n"));
      FAIL("expected error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("no entries") != std::string::npos);
    }
  }
  SUBCASE("malformed row reports its line") {
    try {
      load_vocabulary(dir.write("m.tsv", "man\tNOUN\t4.97\ncandy\tNOUN\tlots\n"));
      FAIL("expected error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("word used as noun and verb") {
    CHECK_THROWS_AS(load_vocabulary(dir.write("d.tsv", "fish\tNOUN\t5\nfish\tVERB\t5\n")), ParseError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_vocabulary(dir.file("nope.tsv")), ParseError); }
}

TEST_CASE("aggregate_votes majority and agreement") {
  std::vector<AnnotationRecord> recs = {
      {{"man", "swallow", "candy"}, {1, 1, 1, 0, 0}},
      {{"man", "swallow", "desk"}, {0, 0, 0, 0, 0}},
  };
  const auto out = aggregate_votes(recs);
  REQUIRE(out.size() == 2);
  CHECK(out[0].label == 1);
  CHECK(out[0].agreement == 3);
  CHECK(out[1].label == 0);
  CHECK(out[1].agreement == 5);
}

TEST_CASE("aggregate_votes rejects a wrong vote count and names the triple") {
  std::vector<AnnotationRecord> recs = {{{"dog", "pull", "paper"}, {1, 1, 0, 1}}};
  try {
    aggregate_votes(recs);
    FAIL("expected error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("dog-pull-paper") != std::string::npos);
  }
}

TEST_CASE("aggregate_votes properties over every 5-vote pattern") {
  for (int mask = 0; mask < 32; ++mask) {
    AnnotationRecord r{{"a", "b", "c"}, {}};
    AnnotationRecord flipped = r;
    for (int i = 0; i < 5; ++i) {
      r.votes.push_back((mask >> i) & 1);
      flipped.votes.push_back(1 - ((mask >> i) & 1));
    }
    const auto a = aggregate_votes({r});
    const auto b = aggregate_votes({flipped});
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(*a[0].agreement >= 3);
    CHECK(a[0].label == 1 - b[0].label);
    CHECK(a[0].agreement == b[0].agreement);
  }
}

TEST_CASE("aggregate_votes filter matters for generalized vote counts") {
  AggregationRule rule{4, 3};
  std::vector<AnnotationRecord> recs = {
      {{"a", "b", "c"}, {1, 1, 0, 0}},  // tie
      {{"a", "b", "d"}, {1, 1, 1, 0}},
  };
  const auto out = aggregate_votes(recs, rule);
  REQUIRE(out.size() == 1);
  CHECK(out[0].triple.object == "d");
  CHECK(out.size() <= recs.size());
}

TEST_CASE("triple files round trip through the canonical format") {
  TempDir dir;
  std::vector<LabeledTriple> ts = {{{"man", "swallow", "candy"}, 1, 5}, {{"man", "swallow", "desk"}, 0, {}}};
  save_triples(dir.file("t.tsv"), ts);
  const auto back = load_triples(dir.file("t.tsv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].triple == ts[0].triple);
  CHECK(back[0].agreement == 5);
  CHECK_FALSE(back[1].agreement.has_value());
  CHECK_THROWS_AS(load_triples(dir.write("bad.tsv", "a\tb\tc\t2\n")), ParseError);
}

TEST_CASE("generate_candidate_triples") {
  SUBCASE("single join") {
    const auto out = generate_candidate_triples({{"man", "swallow"}}, {{"swallow", "candy"}}, 1, 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == Triple{"man", "swallow", "candy"});
  }
  SUBCASE("no joinable verb") {
    try {
      generate_candidate_triples({{"man", "swallow"}}, {{"eat", "cake"}}, 1, 1);
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("no joinable verb") != std::string::npos);
    }
  }
  SUBCASE("too many requested reports the maximum") {
    try {
      generate_candidate_triples({{"man", "eat"}, {"dog", "eat"}}, {{"eat", "cake"}}, 1, 3);
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("only 2") != std::string::npos);
    }
  }
  SUBCASE("full join equals the brute-force cross product") {
    std::vector<SvPair> sv;
    std::vector<VoPair> vo;
    for (int i = 0; i < 10; ++i) {
      sv.push_back({"s" + std::to_string(i), "hold"});
      vo.push_back({"hold", "o" + std::to_string(i)});
    }
    std::set<Triple> brute;
    for (const auto& [s, v1] : sv)
      for (const auto& [v2, o] : vo)
        if (v1 == v2) brute.insert({s, v1, o});
    const auto out = generate_candidate_triples(sv, vo, 42, 100);
    CHECK(out.size() == 100);
    CHECK(std::set<Triple>(out.begin(), out.end()) == brute);
  }
  SUBCASE("subset of valid joins, no duplicates, deterministic") {
    std::vector<SvPair> sv = {{"man", "eat"}, {"dog", "eat"}, {"man", "push"}, {"cat", "push"}};
    std::vector<VoPair> vo = {{"eat", "cake"}, {"eat", "bone"}, {"push", "cart"}, {"lift", "box"}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto out = generate_candidate_triples(sv, vo, seed, 4);
      CHECK(std::set<Triple>(out.begin(), out.end()).size() == out.size());
      for (const auto& t : out) {
        CHECK(std::find(sv.begin(), sv.end(), SvPair{t.subject, t.verb}) != sv.end());
        CHECK(std::find(vo.begin(), vo.end(), VoPair{t.verb, t.object}) != vo.end());
      }
      CHECK(out == generate_candidate_triples(sv, vo, seed, 4));
    }
  }
}

TEST_CASE("make_folds") {
  SUBCASE("3062 items into 10 folds") {
    const auto plan = make_folds(3062, 10, 7);
    auto sizes = plan.fold_sizes();
    std::sort(sizes.begin(), sizes.end());
    CHECK(std::count(sizes.begin(), sizes.end(), 306u) == 8);
    CHECK(std::count(sizes.begin(), sizes.end(), 307u) == 2);
  }
  SUBCASE("one item per fold") {
    const auto plan = make_folds(10, 10, 3);
    for (auto s : plan.fold_sizes()) CHECK(s == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(make_folds(5, 10, 1), ValidationError);
    CHECK_THROWS_AS(make_folds(5, 1, 1), ValidationError);
  }
  SUBCASE("partition and determinism across random shapes") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(12));
      const std::size_t n = static_cast<std::size_t>(k) + rng.below(300);
      const std::uint64_t seed = rng.next();
      const auto a = make_folds(n, k, seed);
      const auto b = make_folds(n, k, seed);
      CHECK(a.fold_of == b.fold_of);
      std::vector<int> seen(n, 0);
      for (int f = 0; f < k; ++f)
        for (auto i : a.test_indices(f)) ++seen[i];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      const auto sizes = a.fold_sizes();
      CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
      const auto train = a.train_indices(0);
      const auto test = a.test_indices(0);
      CHECK(train.size() + test.size() == n);
    }
  }
}

TEST_CASE("dataset_stats") {
  SUBCASE("singleton") {
    const auto s = dataset_stats({{{"a", "b", "c"}, 1, 5}});
    CHECK(s.count == 1);
    CHECK(s.balance == 1.0);
  }
  SUBCASE("60 of 100 positive") {
    std::vector<LabeledTriple> ds;
    for (int i = 0; i < 100; ++i) ds.push_back({{"n" + std::to_string(i % 7), "v", "m"}, i < 60 ? 1 : 0, {}});
    const auto s = dataset_stats(ds);
    CHECK(s.balance == doctest::Approx(0.60));
    CHECK(s.agreement_known == 0);
    CHECK(format_stats_kv(s).find("balance=0.6000") != std::string::npos);
  }
  SUBCASE("agreement percentages from votes") {
    std::vector<AnnotationRecord> recs;
    // 20 records: 18 unanimous, 1 at 4, 1 at 3 -> 100 / 95 / 90 percent
    for (int i = 0; i < 18; ++i) recs.push_back({{"a", "v", "o" + std::to_string(i)}, {1, 1, 1, 1, 1}});
    recs.push_back({{"a", "v", "x"}, {0, 0, 0, 0, 1}});
    recs.push_back({{"a", "v", "y"}, {0, 0, 0, 1, 1}});
    const auto s = dataset_stats(aggregate_votes(recs));
    CHECK(s.agree_ge3 == doctest::Approx(1.00));
    CHECK(s.agree_ge4 == doctest::Approx(0.95));
    CHECK(s.agree_eq5 == doctest::Approx(0.90));
  }
  SUBCASE("empty") { CHECK_THROWS_AS(dataset_stats({}), ValidationError); }
}
