// Acceptance run: one PASS/FAIL/SKIP line per criterion. Exit status is
// nonzero only when a criterion fails. Published-data criteria read from
// $SEMPLAUS_DATA_DIR (triples.tsv, bins.tsv, embeddings.txt, optional
// pairs.csv) and are skipped without it.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>
#include <string>
#include <unistd.h>
#include <vector>

#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"
#include "semplaus/harness.hpp"
#include "semplaus/synthetic.hpp"

using namespace semplaus;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Result {
  Outcome outcome;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::optional<fs::path> data_dir() {
  const char* d = std::getenv("SEMPLAUS_DATA_DIR");
  if (!d || !*d) return std::nullopt;
  return fs::path(d);
}

bool has(const fs::path& dir, const char* name) { return fs::exists(dir / name); }

ExperimentConfig published_config(const fs::path& dir) {
  ExperimentConfig c;
  c.triples = (dir / "triples.tsv").string();
  c.embeddings = (dir / "embeddings.txt").string();
  c.bins = (dir / "bins.tsv").string();
  if (has(dir, "vocab.tsv")) c.vocab = (dir / "vocab.tsv").string();
  c.threads = std::max(1u, std::thread::hardware_concurrency());
  return c;
}

// --- 1: CV accuracy per model ---

Result cv_accuracy() {
  const auto dir = data_dir();
  if (!dir || !has(*dir, "triples.tsv") || !has(*dir, "bins.tsv") || !has(*dir, "embeddings.txt"))
    return {Outcome::skip, "unverified: published triples, bins and vectors unavailable"};
  struct Row {
    std::string model;
    Scheme scheme;
    double fraction, target, tol;
  };
  const std::vector<Row> rows{
      {"random", Scheme::bin_diff, 0.2, 0.50, 0.02},       {"lr", Scheme::bin_diff, 0.2, 0.64, 0.03},
      {"nn", Scheme::bin_diff, 0.2, 0.68, 0.03},           {"nn+wk-gold", Scheme::bin_diff, 0.2, 0.76, 0.03},
      {"nn+wk-prop", Scheme::bin_diff, 0.20, 0.74, 0.04},  {"nn+wk-prop", Scheme::three_level, 0.05, 0.69, 0.04},
  };
  auto base = published_config(*dir);
  base.folds = 10;
  base.runs = 20;
  const auto data = load_experiment_data(base);
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    auto c = base;
    c.model = r.model;
    c.net.scheme = r.scheme;
    c.prop_fraction = r.fraction;
    const auto rep = run_cv(c, data);
    const bool hit = !rep.too_many_failures() && std::abs(rep.mean - r.target) <= r.tol;
    ok = ok && hit;
    detail += fmt("%s%s=%.3f(%.2f) ", r.model.c_str(),
                  r.model == "nn+wk-prop" ? (r.scheme == Scheme::bin_diff ? "@20%bin" : "@5%3l") : "", rep.mean,
                  r.target);
  }
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// --- 2: propagation benchmark ---

Result propagation_bench() {
  const auto dir = data_dir();
  if (!dir || !has(*dir, "bins.tsv") || !has(*dir, "embeddings.txt"))
    return {Outcome::skip, "unverified: published bins and vectors unavailable"};
  auto c = published_config(*dir);
  c.model = "wk";
  c.prop_reps = 20;
  c.pair_count = 10000;
  if (has(*dir, "pairs.csv")) c.pair_annotations = (*dir / "pairs.csv").string();
  ExperimentData data;
  data.schema = FeatureSchema::standard();
  data.profiles = load_bins(c.bins, data.schema);
  Vocabulary vocab;
  for (const auto& [w, p] : data.profiles) vocab.add_noun(w);
  if (!c.pair_annotations.empty())
    for (const auto& [a, b] : load_pair_annotations(c.pair_annotations).pairs)
      for (const auto* w : {&a, &b})
        if (!vocab.contains(*w)) vocab.add_noun(*w);
  data.embeddings = load_embeddings(c.embeddings, &vocab, c.oov);
  const auto report = run_propagation_bench(c, data);

  auto target = [](const BenchCell& cell) {
    const bool five = cell.fraction < 0.1;
    if (cell.table == "top") {
      switch (cell.method) {
        case PropagationMethod::spread: return five ? 0.56 : 0.59;
        case PropagationMethod::lr: return five ? 0.72 : 0.83;
        case PropagationMethod::ordinal: return five ? 0.76 : 0.88;
      }
    }
    const bool tl = cell.scheme == Scheme::three_level;
    if (cell.method == PropagationMethod::lr) return tl ? (five ? 0.61 : 0.68) : (five ? 0.21 : 0.26);
    return tl ? (five ? 0.66 : 0.76) : (five ? 0.32 : 0.40);
  };
  bool ok = true;
  std::string detail;
  for (const auto& cell : report.cells) {
    ok = ok && std::abs(cell.mean - target(cell)) <= 0.05;
    detail += fmt("%s/%s/%s/%.0f%%=%.3f ", cell.table.c_str(), propagation_method_name(cell.method).c_str(),
                  scheme_name(cell.scheme).c_str(), 100 * cell.fraction, cell.mean);
  }
  for (const auto& a : report.cells) {
    if (a.table != "bottom" || a.method != PropagationMethod::ordinal) continue;
    for (const auto& b : report.cells)
      if (b.table == "bottom" && b.method == PropagationMethod::lr && b.scheme == a.scheme && b.fraction == a.fraction)
        ok = ok && a.mean > b.mean;
  }
  for (const auto& s : report.skipped) detail += s + " skipped ";
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// --- 3: gradients ---

Result gradients() {
  const auto t0 = Clock::now();
  const auto schema = FeatureSchema::standard();
  double worst = 0.0;
  std::size_t checked = 0, failures = 0;
  for (ModelKind kind : {ModelKind::nn, ModelKind::wk, ModelKind::ensemble}) {
    for (std::uint64_t draw = 0; draw < 10; ++draw) {
      SyntheticConfig sc;
      sc.nouns = 20;
      sc.verbs = 4;
      sc.dim = 6;
      sc.triples = 40;
      sc.seed = 100 + draw;
      const auto world = make_synthetic_world(sc, schema);
      ModelConfig mc;
      mc.h_nn = 7;
      mc.h_wk = 5;
      mc.d_f = 3;
      mc.h_comb = 4;
      mc.scheme = draw % 2 ? Scheme::three_level : Scheme::bin_diff;
      mc.input_mode = draw % 4 < 2 ? WkInputMode::feature_embedding : WkInputMode::raw_onehot;
      mc.fine_tune = kind != ModelKind::wk && draw % 3 == 0;
      GoldPairFeatures gold(world.profiles);
      const auto data = encode_triples(world.triples, world.embeddings, &gold, mc.scheme);
      auto model = make_model(kind, sc.dim, schema, mc, derive_seed(draw, 1));
      if (auto* nn = dynamic_cast<NnModel*>(model.get())) nn->bind(data);
      if (auto* en = dynamic_cast<EnsembleModel*>(model.get())) en->bind(data);
      Rng rng(derive_seed(draw, 2));
      for (auto& [name, t] : model->tensors())
        for (double& v : t->values()) v = rng.uniform(-0.8, 0.8);
      std::vector<std::size_t> rows(data.size());
      std::iota(rows.begin(), rows.end(), 0);
      rng.shuffle(rows);
      rows.resize(8);

      model->loss(data, rows, true);
      std::vector<DenseMatrix> analytic;
      for (auto* g : model->gradients()) analytic.push_back(*g);
      std::vector<const DenseMatrix*> ptrs;
      for (auto& g : analytic) ptrs.push_back(&g);
      const auto report =
          grad_check(model->parameters(), ptrs, [&] { return model->loss(data, rows, false); }, 1e-5, 1e-4);
      worst = std::max(worst, report.max_relative_error);
      checked += report.checked;
      failures += !report.pass;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = failures == 0 && worst < 1e-4 && secs < 10.0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("30 draws (NN, WK, ensemble), %zu coordinates, max rel err %.2e, %.2fs", checked, worst, secs)};
}

// --- 4: encodings ---

Result encodings() {
  const auto t0 = Clock::now();
  const auto schema = FeatureSchema::standard();
  ProfileMap profiles;
  std::string source = "450 synthetic nouns";
  if (const auto dir = data_dir(); dir && has(*dir, "bins.tsv")) {
    profiles = load_bins((*dir / "bins.tsv").string(), schema);
    source = std::to_string(profiles.size()) + " annotated nouns";
  } else {
    Rng rng(450);
    for (int i = 0; i < 450; ++i) {
      NounProfile p{"n" + std::to_string(i), {}};
      for (std::size_t f = 0; f < schema.size(); ++f) p.bins.push_back(1 + static_cast<int>(rng.below(schema[f].bins())));
      profiles.emplace(p.noun, p);
    }
  }
  // oracle layout: landmark counts of the six features
  const int features = 6;
  const int bins[features] = {6, 4, 3, 6, 6, 5};
  std::size_t checks = 0, bad = 0;
  auto expect = [&](bool c) {
    ++checks;
    bad += !c;
  };
  expect(static_cast<int>(schema.size()) == features);
  for (const auto& [a, pa] : profiles) {
    for (const auto& [b, pb] : profiles) {
      const auto bd = pair_features(pa, pb, Scheme::bin_diff);
      const auto tl = pair_features(pa, pb, Scheme::three_level);
      const auto rev = pair_features(pb, pa, Scheme::bin_diff);
      const auto raw_tl = encode_raw_onehot(tl, schema);
      const auto raw_bd = encode_raw_onehot(bd, schema);
      expect(raw_tl.size() == 18);
      expect(raw_bd.size() == 54);
      std::size_t base = 0;
      for (int f = 0; f < features; ++f) {
        const int d = pa.bins[f] - pb.bins[f];
        expect(bd.values[f] == d);
        expect(rev.values[f] == -bd.values[f]);
        expect(tl.values[f] == (d > 0 ? 1 : d < 0 ? -1 : 0));
        for (int k = 0; k < 3; ++k) expect(raw_tl[3 * f + k] == (k == tl.values[f] + 1 ? 1.0 : 0.0));
        const int w = 2 * bins[f] - 1;
        for (int k = 0; k < w; ++k) expect(raw_bd[base + k] == (k == d + bins[f] - 1 ? 1.0 : 0.0));
        base += w;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = bad == 0 && secs < 5.0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("%s, %zu checks, %zu violations, %.2fs", source.c_str(), checks, bad, secs)};
}

// --- 5: label spreading ---

Result spreading() {
  double worst = 0.0;
  std::size_t unconverged = 0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(derive_seed(55, inst));
    const std::size_t n = 50, d = 5, classes = 3;
    DenseMatrix x(n, d);
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto s = normalize_graph(knn_graph(x, 10));
    DenseMatrix y(n, classes);
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform(0.0, 1.0) < 0.3) y(i, rng.below(classes)) = 1.0;
    SpreadConfig cfg;
    cfg.tolerance = 1e-13;
    cfg.max_iterations = 100000;
    const auto it = spread_scores(s, y, cfg);
    unconverged += !it.converged;

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n), Y(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& [j, w] : s.rows[i]) S(i, j) = w;
      for (std::size_t c = 0; c < classes; ++c) Y(i, c) = y(i, c);
    }
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - cfg.alpha * S;
    const Eigen::MatrixXd F = (1.0 - cfg.alpha) * A.partialPivLu().solve(Y);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < classes; ++c) worst = std::max(worst, std::abs(F(i, c) - it.scores(i, c)));
  }
  const bool ok = worst < 1e-6 && unconverged == 0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("20 graphs of 50 nodes, max |iterative - direct| %.2e", worst)};
}

// --- 6 and 8: CLI runs ---

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("semplaus_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "semplaus");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::fflush(stdout);
  // keep the subcommand's report text out of the criterion lines
  const int saved = ::dup(1);
  std::FILE* sink = std::fopen("/dev/null", "w");
  ::dup2(::fileno(sink), 1);
  const int rc = cli_main(static_cast<int>(argv.size()), argv.data());
  std::fflush(stdout);
  ::dup2(saved, 1);
  ::close(saved);
  std::fclose(sink);
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Result determinism(const Scratch& tmp) {
  const auto world = (tmp.dir / "world").string();
  if (cli({"synth", "--out", world, "--nouns", "40", "--count", "200", "--dim", "10"}) != 0)
    return {Outcome::fail, "synth failed"};
  auto cv = [&](const std::string& out) {
    return cli({"cv", "--config", world + "/synth.cfg", "--model", "nn+wk-prop", "--fraction", "0.2", "--folds", "5",
                "--runs", "3", "--set", "max_epochs=20", "--output", out});
  };
  const auto a = tmp.dir / "run_a", b = tmp.dir / "run_b";
  if (cv(a.string()) != 0 || cv(b.string()) != 0) return {Outcome::fail, "cv failed"};
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".tsv") continue;
    ++files;
    differ += slurp(e.path()) != slurp(b / e.path().filename());
  }
  const bool ok = files == 3 && differ == 0;
  return {ok ? Outcome::pass : Outcome::fail, fmt("%zu TSV reports compared, %zu differ", files, differ)};
}

Result separable(const Scratch& tmp) {
  const auto world = (tmp.dir / "toy").string();
  const auto out = (tmp.dir / "toy_out").string();
  if (cli({"synth", "--out", world, "--separable", "20"}) != 0) return {Outcome::fail, "synth failed"};
  if (cli({"cv", "--config", world + "/synth.cfg", "--model", "nn", "--folds", "2", "--runs", "1", "--output", out}) !=
      0)
    return {Outcome::fail, "cv failed"};
  std::size_t correct = 0, total = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name.size() < 10 || name.substr(name.size() - 10) != "_folds.tsv") continue;
    std::istringstream in(slurp(e.path()));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split(line, '\t');
      total += std::stoul(f[2]);
      correct += std::stoul(f[3]);
    }
  }
  return {total == 20 && correct == total ? Outcome::pass : Outcome::fail,
          fmt("K=2, R=1 on 20 separable triples: %zu/%zu correct", correct, total)};
}

// --- 7: dataset stats ---

Result stats() {
  const auto dir = data_dir();
  if (!dir || !has(*dir, "triples.tsv")) return {Outcome::skip, "unverified: published triples unavailable"};
  const auto s = dataset_stats(load_triples((*dir / "triples.tsv").string()));
  const bool ok = s.count == 3062 && s.balance >= 0.48 && s.balance <= 0.52;
  return {ok ? Outcome::pass : Outcome::fail, fmt("%zu triples, balance %.4f", s.count, s.balance)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  int failures = 0;
  auto report = [&](int id, const char* name, const Result& r) {
    const char* tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::fail ? "FAIL" : "SKIP";
    std::printf("[%s] %d %s: %s\n", tag, id, name, r.detail.c_str());
    std::fflush(stdout);
    failures += r.outcome == Outcome::fail;
  };
  auto guarded = [](const std::function<Result()>& fn) -> Result {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {Outcome::fail, std::string("error: ") + e.what()};
    }
  };

  Scratch tmp;
  const auto r1 = guarded(cv_accuracy);
  const auto r2 = guarded(propagation_bench);
  const auto r3 = guarded(gradients);
  const auto r4 = guarded(encodings);
  const auto r5 = guarded(spreading);
  const auto r6 = guarded([&] { return determinism(tmp); });
  const auto r7 = guarded(stats);
  const auto toy = guarded([&] { return separable(tmp); });

  report(1, "CV accuracy reproduction", r1);
  report(2, "propagation benchmark reproduction", r2);
  report(3, "gradient correctness", r3);
  report(4, "encoding oracle equivalence", r4);
  report(5, "label spreading fixed point", r5);
  report(6, "cv determinism", r6);
  report(7, "dataset stats", r7);

  const bool fallback_needed = r1.outcome == Outcome::skip || r2.outcome == Outcome::skip;
  Result r8;
  const bool props = r3.outcome == Outcome::pass && r4.outcome == Outcome::pass && r5.outcome == Outcome::pass &&
                     r6.outcome == Outcome::pass;
  if (props && toy.outcome == Outcome::pass) {
    r8 = {Outcome::pass, "criteria 3-6 pass; " + toy.detail +
                             (fallback_needed ? "; published-data reproductions reported as unverified" : "")};
  } else {
    r8 = {Outcome::fail, (props ? std::string("criteria 3-6 pass; ") : std::string("a property criterion failed; ")) +
                             toy.detail};
  }
  report(8, "dataset-free fallback", r8);
  return failures == 0 ? 0 : 1;
}
