#include "semplaus/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"

namespace semplaus {

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  long long x = 0;
  if (!parse_int(v, x) || x < 0) throw ValidationError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  if (!parse_double(v, x)) throw ValidationError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto l = to_lower(v);
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw ValidationError(key + ": expected a boolean, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ValidationError(key + ": expected an unsigned integer");
  return x;
}

/// Runs fn(0..n-1) on up to `threads` workers. fn must not throw.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::uint64_t run_seed(const ExperimentConfig& c, std::size_t run) { return derive_seed(c.seed, run); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

bool file_exists(const std::string& p) { return !p.empty() && std::filesystem::exists(p); }

}  // namespace

ModelKind ExperimentConfig::kind() const {
  const auto l = to_lower(model);
  if (l == "nn+wk-gold" || l == "nn+wk-prop") return ModelKind::ensemble;
  return parse_model_kind(l);
}

WkSource ExperimentConfig::wk_source() const {
  const auto l = to_lower(model);
  if (l == "nn+wk-prop") return WkSource::propagated;
  const auto k = kind();
  return k == ModelKind::ensemble || k == ModelKind::wk ? WkSource::gold : WkSource::none;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  return {
      {"model", model},
      {"scheme", scheme_name(net.scheme)},
      {"input_mode", input_mode_name(net.input_mode)},
      {"fine_tune", net.fine_tune ? "1" : "0"},
      {"h_nn", std::to_string(net.h_nn)},
      {"h_wk", std::to_string(net.h_wk)},
      {"d_f", std::to_string(net.d_f)},
      {"h_comb", std::to_string(net.h_comb)},
      {"sigma1", activation_name(net.sigma1)},
      {"batch_size", std::to_string(training.batch_size)},
      {"learning_rate", num(training.learning_rate)},
      {"patience", std::to_string(training.patience)},
      {"max_epochs", std::to_string(training.max_epochs)},
      {"validation_fraction", num(training.validation_fraction)},
      {"prop_method", propagation_method_name(prop_method)},
      {"prop_fraction", num(prop_fraction)},
      {"spread_k", std::to_string(spread.k)},
      {"spread_alpha", num(spread.alpha)},
      {"spread_max_iter", std::to_string(spread.max_iterations)},
      {"spread_tol", num(spread.tolerance)},
      {"pair_count", std::to_string(pair_count)},
      {"prop_reps", std::to_string(prop_reps)},
      {"folds", std::to_string(folds)},
      {"runs", std::to_string(runs)},
      {"seed", std::to_string(seed)},
      {"threads", std::to_string(threads)},
      {"reps", std::to_string(reps)},
      {"top", std::to_string(top)},
      {"diff_model", diff_model},
      {"tags", tags},
      {"auto_tags", auto_tags ? "1" : "0"},
      {"triples", triples},
      {"embeddings", embeddings},
      {"bins", bins},
      {"vocab", vocab},
      {"schema", schema},
      {"pair_annotations", pair_annotations},
      {"oov", oov == OovPolicy::zero ? "zero" : "error"},
      {"output", output},
  };
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, v] : values) {
    if (key == "model") model = to_lower(v);
    else if (key == "scheme") net.scheme = parse_scheme(v);
    else if (key == "input_mode") net.input_mode = parse_input_mode(v);
    else if (key == "fine_tune") net.fine_tune = to_bool(key, v);
    else if (key == "h_nn") net.h_nn = to_size(key, v);
    else if (key == "h_wk") net.h_wk = to_size(key, v);
    else if (key == "d_f") net.d_f = to_size(key, v);
    else if (key == "h_comb") net.h_comb = to_size(key, v);
    else if (key == "sigma1") net.sigma1 = parse_activation(v);
    else if (key == "batch_size") training.batch_size = to_size(key, v);
    else if (key == "learning_rate") training.learning_rate = to_double(key, v);
    else if (key == "patience") training.patience = to_size(key, v);
    else if (key == "max_epochs") training.max_epochs = to_size(key, v);
    else if (key == "validation_fraction") training.validation_fraction = to_double(key, v);
    else if (key == "prop_method") prop_method = parse_propagation_method(v);
    else if (key == "prop_fraction") prop_fraction = to_double(key, v);
    else if (key == "spread_k") spread.k = to_size(key, v);
    else if (key == "spread_alpha") spread.alpha = to_double(key, v);
    else if (key == "spread_max_iter") spread.max_iterations = to_size(key, v);
    else if (key == "spread_tol") spread.tolerance = to_double(key, v);
    else if (key == "pair_count") pair_count = to_size(key, v);
    else if (key == "prop_reps") prop_reps = to_size(key, v);
    else if (key == "folds") {
      long long k = 0;
      if (!parse_int(v, k)) throw ValidationError("folds: expected an integer");
      folds = static_cast<int>(k);
    } else if (key == "runs") runs = to_size(key, v);
    else if (key == "seed") seed = to_u64(key, v);
    else if (key == "threads") threads = to_size(key, v);
    else if (key == "reps") reps = to_size(key, v);
    else if (key == "top") top = to_size(key, v);
    else if (key == "diff_model") diff_model = to_lower(v);
    else if (key == "tags") tags = v;
    else if (key == "auto_tags") auto_tags = to_bool(key, v);
    else if (key == "triples") triples = v;
    else if (key == "embeddings") embeddings = v;
    else if (key == "bins") bins = v;
    else if (key == "vocab") vocab = v;
    else if (key == "schema") schema = v;
    else if (key == "pair_annotations") pair_annotations = v;
    else if (key == "oov") oov = parse_oov_policy(v);
    else if (key == "output") output = v;
    else throw ValidationError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  kind();
  if (!diff_model.empty()) {
    ExperimentConfig other = *this;
    other.model = diff_model;
    other.kind();
  }
  if (folds < 2) throw ValidationError("folds must be at least 2 (got " + std::to_string(folds) + ")");
  if (runs < 1) throw ValidationError("runs must be at least 1");
  if (reps < 1) throw ValidationError("reps must be at least 1");
  if (top < 1) throw ValidationError("top must be at least 1");
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (prop_reps < 1) throw ValidationError("prop_reps must be at least 1");
  if (!(prop_fraction > 0.0 && prop_fraction <= 1.0)) throw ValidationError("prop_fraction must be in (0, 1]");
  if (!(training.validation_fraction >= 0.0 && training.validation_fraction < 1.0))
    throw ValidationError("validation_fraction must be in [0, 1)");
  if (training.batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(training.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (net.h_nn < 1 || net.h_wk < 1 || net.h_comb < 1 || net.d_f < 1)
    throw ValidationError("hidden and feature-embedding widths must be at least 1");
  if (spread.k < 1) throw ValidationError("spread_k must be at least 1");
  if (!(spread.alpha > 0.0 && spread.alpha < 1.0)) throw ValidationError("spread_alpha must be in (0, 1)");
}

void ExperimentConfig::check_paths(const std::vector<std::string>& keys) const {
  const auto m = to_map();
  for (const auto& key : keys) {
    const auto& v = m.at(key);
    if (v.empty()) throw ValidationError("missing required path '" + key + "'");
    if (!std::filesystem::exists(v)) throw ValidationError(key + ": file not found: " + v);
  }
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.to_map()) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::fingerprint() const {
  std::string canon;
  for (const auto& [k, v] : to_map()) {
    if (k == "threads" || k == "output") continue;
    canon += k + "=" + v + "\n";
  }
  return hex64(fnv1a64(canon));
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, lineno, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(path, lineno, "empty key");
    if (out.count(key)) throw ParseError(path, lineno, "duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string output_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("SEMPLAUS_OUTPUT_ROOT"); env && *env) return env;
  return config.output;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  config.validate();
  ExperimentData d;
  d.schema = config.schema.empty() ? FeatureSchema::standard() : FeatureSchema::load(config.schema);
  config.check_paths({"triples"});
  d.triples = load_triples(config.triples);
  if (d.triples.empty()) throw ValidationError("no triples in " + config.triples);

  const auto kind = config.kind();
  const bool needs_vectors = kind != ModelKind::random && kind != ModelKind::wk;
  const bool needs_bins = config.wk_source() != WkSource::none || config.auto_tags;
  if (needs_vectors || !config.embeddings.empty()) {
    config.check_paths({"embeddings"});
    Vocabulary vocab;
    if (!config.vocab.empty()) {
      config.check_paths({"vocab"});
      vocab = load_vocabulary(config.vocab);
    } else {
      // restrict the table to the words the triples use
      for (const auto& lt : d.triples) {
        for (const auto* w : {&lt.triple.subject, &lt.triple.object})
          if (!vocab.contains(*w)) vocab.add_noun(*w);
        if (!vocab.contains(lt.triple.verb)) vocab.add_verb(lt.triple.verb);
      }
    }
    d.embeddings = load_embeddings(config.embeddings, &vocab, config.oov);
  } else {
    d.embeddings = EmbeddingTable(0, OovPolicy::zero);
  }
  if (needs_bins || !config.bins.empty()) {
    config.check_paths({"bins"});
    d.profiles = load_bins(config.bins, d.schema);
  }
  return d;
}

std::unique_ptr<PairFeatureSource> make_wk_source(const ExperimentConfig& config, const ExperimentData& data,
                                                  std::uint64_t seed) {
  switch (config.wk_source()) {
    case WkSource::none: return nullptr;
    case WkSource::gold: return std::make_unique<GoldPairFeatures>(data.profiles);
    case WkSource::propagated:
      return std::make_unique<PropagatedPairFeatures>(
          propagate_profiles(data.profiles, data.schema, data.triples, data.embeddings, config.prop_method,
                             config.net.scheme, config.prop_fraction, seed, config.spread));
  }
  return nullptr;
}

EncodedTriples encode_experiment(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed) {
  const auto source = make_wk_source(config, data, seed);
  return encode_triples(data.triples, data.embeddings, source.get(), config.net.scheme);
}

RunReport run_cv(const ExperimentConfig& config, const ExperimentData& data) {
  config.validate();
  const std::size_t n = data.triples.size();
  const auto k = static_cast<std::size_t>(config.folds);
  if (n < k) throw ValidationError("cannot split " + std::to_string(n) + " triples into " + std::to_string(k) + " folds");
  const auto kind = config.kind();
  const bool per_run_features = config.wk_source() == WkSource::propagated;

  std::optional<EncodedTriples> shared;
  if (!per_run_features) shared = encode_experiment(config, data, config.seed);
  std::vector<std::optional<EncodedTriples>> run_data(config.runs);
  std::vector<std::string> run_error(config.runs);
  if (per_run_features) {
    parallel_for(config.runs, config.threads, [&](std::size_t r) {
      try {
        run_data[r] = encode_experiment(config, data, derive_seed(run_seed(config, r), 2));
      } catch (const std::exception& e) {
        run_error[r] = e.what();
      }
    });
  }

  std::vector<FoldPlan> plans;
  for (std::size_t r = 0; r < config.runs; ++r)
    plans.push_back(make_folds(n, config.folds, derive_seed(run_seed(config, r), 1)));

  std::vector<FoldResult> results(config.runs * k);
  std::vector<std::string> errors(config.runs * k);
  parallel_for(config.runs * k, config.threads, [&](std::size_t job) {
    const std::size_t r = job / k;
    const int fold = static_cast<int>(job % k);
    if (!run_error[r].empty()) {
      errors[job] = run_error[r];
      return;
    }
    try {
      const EncodedTriples& enc = per_run_features ? *run_data[r] : *shared;
      const auto train_rows = plans[r].train_indices(fold);
      const auto test_rows = plans[r].test_indices(fold);
      auto trained = train_classifier(kind, enc, train_rows, data.schema, config.net, config.training,
                                      derive_seed(run_seed(config, r), 100 + job % k));
      const auto prob = trained.model->predict_proba(enc, test_rows);
      const auto pred = trained.model->predict(enc, test_rows);
      FoldResult fr{r, fold, 0.0, {}};
      std::size_t hit = 0;
      for (std::size_t i = 0; i < test_rows.size(); ++i) {
        fr.predictions.push_back({test_rows[i], pred[i], prob[i]});
        hit += pred[i] == enc.labels[test_rows[i]];
      }
      fr.accuracy = static_cast<double>(hit) / static_cast<double>(test_rows.size());
      results[job] = std::move(fr);
    } catch (const std::exception& e) {
      errors[job] = e.what();
    }
  });

  RunReport report;
  report.fingerprint = config.fingerprint();
  report.runs = config.runs;
  report.folds = config.folds;
  report.misclassified.assign(n, 0);
  for (std::size_t r = 0; r < config.runs; ++r) {
    std::string failure;
    for (std::size_t f = 0; f < k && failure.empty(); ++f) failure = errors[r * k + f];
    if (!failure.empty()) {
      spdlog::warn("run {} failed: {}", r, failure);
      report.failed_runs[r] = failure;
      continue;
    }
    double sum = 0.0;
    for (std::size_t f = 0; f < k; ++f) {
      auto& fr = results[r * k + f];
      sum += fr.accuracy;
      for (const auto& p : fr.predictions) report.misclassified[p.index] += p.predicted != data.triples[p.index].label;
      report.fold_results.push_back(std::move(fr));
    }
    report.completed_runs.push_back(r);
    report.run_accuracy.push_back(sum / static_cast<double>(k));
  }
  const auto m = report.run_accuracy.size();
  if (m > 0) {
    report.mean = std::accumulate(report.run_accuracy.begin(), report.run_accuracy.end(), 0.0) / static_cast<double>(m);
    if (m > 1) {
      double ss = 0.0;
      for (double a : report.run_accuracy) ss += (a - report.mean) * (a - report.mean);
      report.stddev = std::sqrt(ss / static_cast<double>(m - 1));
    }
  }
  return report;
}

std::string format_cv_summary(const RunReport& report, const ExperimentConfig& config) {
  std::ostringstream out;
  out << "model        " << config.model << "\n";
  if (config.kind() == ModelKind::ensemble || config.kind() == ModelKind::wk)
    out << "wk features  " << scheme_name(config.net.scheme) << ", " << input_mode_name(config.net.input_mode) << "\n";
  if (config.wk_source() == WkSource::propagated)
    out << "propagation  " << propagation_method_name(config.prop_method) << " at " << fixed(config.prop_fraction, 2)
        << "\n";
  out << "fingerprint  " << report.fingerprint << "\n";
  out << "protocol     " << report.folds << "-fold CV, " << report.runs << " runs, base seed " << config.seed << "\n";
  out << "completed    " << report.completed_runs.size() << " runs";
  if (!report.failed_runs.empty()) out << " (" << report.failed_runs.size() << " failed)";
  out << "\n";
  out << "accuracy     " << fixed(report.mean, 4) << " +/- " << fixed(report.stddev, 4) << "\n";
  for (std::size_t i = 0; i < report.completed_runs.size(); ++i)
    out << "  run " << report.completed_runs[i] << "  " << fixed(report.run_accuracy[i], 4) << "\n";
  for (const auto& [r, msg] : report.failed_runs) out << "  run " << r << "  failed: " << msg << "\n";
  return out.str();
}

ReportFiles write_cv_report(const RunReport& report, const ExperimentConfig& config, const ExperimentData& data,
                            const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = (std::filesystem::path(dir) / ("cv_" + report.fingerprint)).string();
  ReportFiles files{base + "_folds.tsv", base + "_predictions.tsv", base + "_misclassified.tsv", base + "_summary.txt"};

  std::string folds = "run\tfold\tn_test\tcorrect\taccuracy\n";
  std::string preds = "run\tfold\tindex\tsubject\tverb\tobject\tlabel\tpredicted\tprobability\n";
  for (const auto& fr : report.fold_results) {
    std::size_t correct = 0;
    for (const auto& p : fr.predictions) {
      const auto& lt = data.triples[p.index];
      correct += p.predicted == lt.label;
      preds += std::to_string(fr.run) + '\t' + std::to_string(fr.fold) + '\t' + std::to_string(p.index) + '\t' +
               lt.triple.subject + '\t' + lt.triple.verb + '\t' + lt.triple.object + '\t' + std::to_string(lt.label) +
               '\t' + std::to_string(p.predicted) + '\t' + num(p.probability) + '\n';
    }
    folds += std::to_string(fr.run) + '\t' + std::to_string(fr.fold) + '\t' + std::to_string(fr.predictions.size()) +
             '\t' + std::to_string(correct) + '\t' + num(fr.accuracy) + '\n';
  }
  std::string mis = "index\tsubject\tverb\tobject\tlabel\tmisclassified\truns\n";
  for (std::size_t i = 0; i < report.misclassified.size(); ++i) {
    const auto& lt = data.triples[i];
    mis += std::to_string(i) + '\t' + lt.triple.subject + '\t' + lt.triple.verb + '\t' + lt.triple.object + '\t' +
           std::to_string(lt.label) + '\t' + std::to_string(report.misclassified[i]) + '\t' +
           std::to_string(report.completed_runs.size()) + '\n';
  }
  write_text(files.folds, folds);
  write_text(files.predictions, preds);
  write_text(files.misclassified, mis);
  write_text(files.summary, format_cv_summary(report, config) + "\n# config\n" + serialize_config(config));
  return files;
}

BenchReport run_propagation_bench(const ExperimentConfig& config, const ExperimentData& data,
                                  const std::vector<double>& fractions) {
  config.validate();
  BenchReport report;
  struct Setting {
    std::string table;
    PropagationMethod method;
    Scheme scheme;
    double fraction;
  };

  auto run_table = [&](const std::string& table, const std::vector<PropagationMethod>& methods,
                       const std::vector<Scheme>& schemes, const std::function<PairDataset(std::size_t)>& make) {
    std::vector<Setting> settings;
    for (auto m : methods)
      for (auto s : schemes)
        for (double f : fractions) settings.push_back({table, m, s, f});
    std::vector<std::vector<double>> scores(config.prop_reps, std::vector<double>(settings.size(), 0.0));
    std::vector<std::string> errors(config.prop_reps);
    parallel_for(config.prop_reps, config.threads, [&](std::size_t rep) {
      try {
        const auto ds = make(rep);
        for (std::size_t i = 0; i < settings.size(); ++i) {
          scores[rep][i] = evaluate_propagation(ds, settings[i].method, settings[i].scheme, settings[i].fraction,
                                                derive_seed(config.seed, 1000 + rep), config.spread)
                               .mean;
        }
      } catch (const std::exception& e) {
        errors[rep] = e.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) throw NumericError("propagation benchmark failed: " + e);
    for (std::size_t i = 0; i < settings.size(); ++i) {
      double sum = 0.0;
      for (const auto& rep : scores) sum += rep[i];
      report.cells.push_back({table, settings[i].method, settings[i].scheme, settings[i].fraction,
                              sum / static_cast<double>(config.prop_reps), config.prop_reps});
    }
  };

  const bool have_vectors = data.embeddings.dim() > 0;
  if (file_exists(config.pair_annotations) && have_vectors) {
    auto ds = load_pair_annotations(config.pair_annotations);
    attach_pair_vectors(ds, data.embeddings);
    run_table("top", {PropagationMethod::spread, PropagationMethod::lr, PropagationMethod::ordinal},
              {Scheme::three_level}, [&](std::size_t) { return ds; });
  } else {
    report.skipped.push_back("top");
  }

  if (data.profiles.size() >= 2 && have_vectors) {
    const std::size_t m = data.profiles.size();
    std::size_t n = config.pair_count;
    if (n > m * (m - 1) / 2) {
      spdlog::warn("pair_count {} exceeds the {} available pairs; using all", n, m * (m - 1) / 2);
      n = m * (m - 1) / 2;
    }
    run_table("bottom", {PropagationMethod::lr, PropagationMethod::ordinal}, {Scheme::three_level, Scheme::bin_diff},
              [&](std::size_t rep) {
                auto ds = sample_pairs(data.profiles, data.schema, n, derive_seed(config.seed, rep));
                attach_pair_vectors(ds, data.embeddings);
                return ds;
              });
  } else {
    report.skipped.push_back("bottom");
  }
  return report;
}

std::string format_bench(const BenchReport& report) {
  std::ostringstream out;
  auto label = [](PropagationMethod m) {
    switch (m) {
      case PropagationMethod::spread: return "Label Spreading";
      case PropagationMethod::lr: return "Logistic Regression";
      case PropagationMethod::ordinal: return "Ordinal LR";
    }
    return "?";
  };
  for (const std::string table : {"top", "bottom"}) {
    out << (table == "top" ? "External pair annotations (3-level)\n" : "Pairs sampled from gold bins\n");
    if (std::find(report.skipped.begin(), report.skipped.end(), table) != report.skipped.end()) {
      out << "  skipped: data unavailable\n\n";
      continue;
    }
    std::vector<std::pair<Scheme, double>> cols;
    std::vector<PropagationMethod> rows;
    for (const auto& c : report.cells) {
      if (c.table != table) continue;
      if (std::find(cols.begin(), cols.end(), std::pair{c.scheme, c.fraction}) == cols.end())
        cols.emplace_back(c.scheme, c.fraction);
      if (std::find(rows.begin(), rows.end(), c.method) == rows.end()) rows.push_back(c.method);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %-20s", "method");
    out << buf;
    for (const auto& [s, f] : cols) {
      std::snprintf(buf, sizeof buf, " %9s", (scheme_name(s) + " " + fixed(100 * f, 0) + "%").c_str());
      out << buf;
    }
    out << "\n";
    for (auto m : rows) {
      std::snprintf(buf, sizeof buf, "  %-20s", label(m));
      out << buf;
      for (const auto& [s, f] : cols) {
        for (const auto& c : report.cells) {
          if (c.table == table && c.method == m && c.scheme == s && c.fraction == f) {
            std::snprintf(buf, sizeof buf, " %9.3f", c.mean);
            out << buf;
          }
        }
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

std::string format_bench_tsv(const BenchReport& report) {
  std::string out = "table\tmethod\tscheme\tfraction\tmean_accuracy\treps\n";
  for (const auto& c : report.cells) {
    out += c.table + '\t' + propagation_method_name(c.method) + '\t' + scheme_name(c.scheme) + '\t' + num(c.fraction) +
           '\t' + num(c.mean) + '\t' + std::to_string(c.reps) + '\n';
  }
  for (const auto& s : report.skipped) out += s + "\tskipped: data unavailable\t\t\t\t\n";
  return out;
}

std::map<Triple, std::vector<std::string>> load_tags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::map<Triple, std::vector<std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 4) throw ParseError(path, lineno, "expected 'subject<TAB>verb<TAB>object<TAB>tags'");
    Triple t{to_lower(trim(f[0])), to_lower(trim(f[1])), to_lower(trim(f[2]))};
    auto& tags = out[t];
    for (auto& tag : split(f[3], ',')) {
      tag = to_lower(trim(tag));
      if (!tag.empty() && std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(tag);
    }
  }
  return out;
}

std::map<Triple, std::vector<std::string>> gold_feature_tags(const std::vector<LabeledTriple>& triples,
                                                             const ProfileMap& profiles, const FeatureSchema& schema) {
  std::map<Triple, std::vector<std::string>> out;
  for (const auto& lt : triples) {
    auto s = profiles.find(lt.triple.subject);
    auto o = profiles.find(lt.triple.object);
    if (s == profiles.end() || o == profiles.end()) continue;
    auto& tags = out[lt.triple];
    tags.clear();
    for (std::size_t f = 0; f < schema.size(); ++f)
      if (std::abs(bin_diff(s->second, o->second, f)) >= 2) tags.push_back(schema[f].name);
  }
  return out;
}

ErrorReport error_analysis(const ExperimentConfig& config, const ExperimentData& data) {
  config.validate();
  ExperimentConfig a = config;
  a.runs = config.reps;
  const auto ra = run_cv(a, data);
  if (ra.completed_runs.empty()) throw NumericError("every repetition failed");
  if (ra.too_many_failures()) throw NumericError("more than 10% of the repetitions failed");
  const std::size_t n = data.triples.size();

  auto wrong_by_run = [&](const RunReport& r) {
    std::map<std::size_t, std::vector<char>> out;
    for (const auto& fr : r.fold_results) {
      auto& w = out[fr.run];
      if (w.empty()) w.assign(n, 0);
      for (const auto& p : fr.predictions) w[p.index] = p.predicted != data.triples[p.index].label;
    }
    return out;
  };

  ErrorReport report;
  std::vector<double> freq(n, 0.0);
  if (config.diff_model.empty()) {
    report.repetitions = ra.completed_runs.size();
    for (std::size_t i = 0; i < n; ++i)
      freq[i] = static_cast<double>(ra.misclassified[i]) / static_cast<double>(report.repetitions);
  } else {
    report.diff_mode = true;
    ExperimentConfig b = a;
    b.model = config.diff_model;
    const auto rb = run_cv(b, data);
    const auto wa = wrong_by_run(ra), wb = wrong_by_run(rb);
    std::vector<std::size_t> count(n, 0);
    for (const auto& [run, wrong_a] : wa) {
      auto it = wb.find(run);
      if (it == wb.end()) continue;
      ++report.repetitions;
      for (std::size_t i = 0; i < n; ++i) count[i] += wrong_a[i] && !it->second[i];
    }
    if (report.repetitions == 0) throw NumericError("no repetition completed for both models");
    for (std::size_t i = 0; i < n; ++i)
      freq[i] = static_cast<double>(count[i]) / static_cast<double>(report.repetitions);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return freq[x] > freq[y]; });
  std::size_t top = config.top;
  if (top > n) {
    spdlog::warn("top {} exceeds the {} triples; listing all", top, n);
    top = n;
  }

  std::map<Triple, std::vector<std::string>> tags;
  if (!config.tags.empty()) tags = load_tags(config.tags);
  else if (config.auto_tags) tags = gold_feature_tags(data.triples, data.profiles, data.schema);

  std::map<std::string, std::size_t> tag_count;
  for (std::size_t i = 0; i < top; ++i) {
    ErrorEntry e{order[i], freq[order[i]], {}};
    if (auto it = tags.find(data.triples[e.index].triple); it != tags.end()) e.tags = it->second;
    for (const auto& t : e.tags) ++tag_count[t];
    report.ranked.push_back(std::move(e));
  }
  for (const auto& [t, c] : tag_count) report.tag_share[t] = static_cast<double>(c) / static_cast<double>(top);
  return report;
}

std::string format_error_tsv(const ErrorReport& report, const ExperimentData& data) {
  std::string out = "rank\tsubject\tverb\tobject\tlabel\tfrequency\ttags\n";
  for (std::size_t r = 0; r < report.ranked.size(); ++r) {
    const auto& e = report.ranked[r];
    const auto& lt = data.triples[e.index];
    std::string tags;
    for (const auto& t : e.tags) tags += (tags.empty() ? "" : ",") + t;
    out += std::to_string(r + 1) + '\t' + lt.triple.subject + '\t' + lt.triple.verb + '\t' + lt.triple.object + '\t' +
           std::to_string(lt.label) + '\t' + num(e.frequency) + '\t' + tags + '\n';
  }
  return out;
}

std::string format_tag_tsv(const ErrorReport& report) {
  std::string out = "tag\tshare\n";
  for (const auto& [t, s] : report.tag_share) out += t + '\t' + num(s) + '\n';
  return out;
}

}  // namespace semplaus
