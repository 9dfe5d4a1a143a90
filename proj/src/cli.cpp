#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"
#include "semplaus/harness.hpp"
#include "semplaus/synthetic.hpp"

namespace semplaus {

namespace {

void init_logging(bool verbose) {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("semplaus");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
}

/// Layered settings of one subcommand: defaults < --config files < --set < flags.
struct Settings {
  std::vector<std::string> config_paths;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    for (const auto& path : config_paths) c.apply(read_config_file(path));
    std::map<std::string, std::string> kv;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    c.apply(kv);
    c.apply(flags);
    return c;
  }
};

void add_layers(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config_paths, "Config file (key = value lines); later files override earlier ones")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", s.sets, "Override one config key (key=value), repeatable");
}

void flag_key(CLI::App* cmd, Settings& s, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(flag, [&s, key](const std::string& v) { s.flags[key] = v; }, help);
}

void switch_key(CLI::App* cmd, Settings& s, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_flag_callback(flag, [&s, key] { s.flags[key] = "1"; }, help);
}

void data_flags(CLI::App* cmd, Settings& s) {
  flag_key(cmd, s, "--triples", "triples", "Triple TSV");
  flag_key(cmd, s, "--embeddings", "embeddings", "Word vectors (text format)");
  flag_key(cmd, s, "--bins", "bins", "Noun landmark bins TSV");
  flag_key(cmd, s, "--vocab", "vocab", "Vocabulary TSV");
  flag_key(cmd, s, "--schema", "schema", "Feature schema file");
  flag_key(cmd, s, "--oov", "oov", "OOV policy: zero | error");
  flag_key(cmd, s, "--seed", "seed", "Base seed");
  flag_key(cmd, s, "--threads", "threads", "Worker threads");
  flag_key(cmd, s, "--output", "output", "Report directory");
}

void model_flags(CLI::App* cmd, Settings& s) {
  flag_key(cmd, s, "--model", "model", "random | lr | nn | wk | nn+wk-gold | nn+wk-prop");
  flag_key(cmd, s, "--scheme", "scheme", "WK feature scheme: 3l | bin");
  flag_key(cmd, s, "--input-mode", "input_mode", "WK input: raw | embed");
  switch_key(cmd, s, "--fine-tune", "fine_tune", "Fine-tune word vectors");
  flag_key(cmd, s, "--epochs", "max_epochs", "Maximum epochs");
  flag_key(cmd, s, "--learning-rate", "learning_rate", "Adam learning rate");
  flag_key(cmd, s, "--batch-size", "batch_size", "Mini-batch size");
  flag_key(cmd, s, "--method", "prop_method", "Propagation method: lr | ordinal | spread");
  flag_key(cmd, s, "--fraction", "prop_fraction", "Gold annotation fraction for propagation");
}

void protocol_flags(CLI::App* cmd, Settings& s) {
  flag_key(cmd, s, "--folds", "folds", "Folds per run");
  flag_key(cmd, s, "--runs", "runs", "Runs");
}

void write_file(const std::string& path, const std::string& text) {
  if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

/// Triples from a positive and a negative list; each line holds
/// subject, verb and object separated by tabs, commas or spaces.
std::vector<LabeledTriple> read_polarity_list(const std::string& path, int label) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& c : line)
      if (c == ',' || c == '\t') c = ' ';
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 3) throw ParseError(path, lineno, "expected subject, verb and object");
    out.push_back({{to_lower(f[0]), to_lower(f[1]), to_lower(f[2])}, label, std::nullopt});
  }
  return out;
}

/// `subject TAB verb TAB object [TAB label]`; missing labels read as 0.
std::vector<LabeledTriple> read_query_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() < 3) throw ParseError(path, lineno, "expected subject, verb and object");
    LabeledTriple lt{{to_lower(trim(f[0])), to_lower(trim(f[1])), to_lower(trim(f[2]))}, 0, std::nullopt};
    if (f.size() > 3) {
      long long v = 0;
      if (!parse_int(trim(f[3]), v) || (v != 0 && v != 1)) throw ParseError(path, lineno, "label must be 0 or 1");
      lt.label = static_cast<int>(v);
    }
    out.push_back(lt);
  }
  return out;
}

int cmd_ingest(const std::string& votes, const std::string& positive, const std::string& negative,
               const std::string& out) {
  std::vector<LabeledTriple> triples;
  if (!votes.empty()) {
    if (!positive.empty() || !negative.empty()) throw ValidationError("use either --votes or --positive/--negative");
    triples = aggregate_votes(load_votes(votes));
  } else {
    if (positive.empty() || negative.empty()) throw ValidationError("ingest needs --votes or both --positive and --negative");
    triples = read_polarity_list(positive, 1);
    const auto neg = read_polarity_list(negative, 0);
    triples.insert(triples.end(), neg.begin(), neg.end());
  }
  save_triples(out, triples);
  std::printf("%zu triples written to %s\n", triples.size(), out.c_str());
  return 0;
}

int cmd_stats(const std::string& triples_path, const std::string& votes, const std::string& vocab_path,
              const std::string& format) {
  std::vector<LabeledTriple> triples;
  if (!votes.empty()) triples = aggregate_votes(load_votes(votes));
  else if (!triples_path.empty()) triples = load_triples(triples_path);
  else throw ValidationError("stats needs --triples or --votes");
  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = load_vocabulary(vocab_path);
  const auto s = dataset_stats(triples, vocab ? &*vocab : nullptr);
  std::fputs((format == "kv" ? format_stats_kv(s) : format_stats_text(s)).c_str(), stdout);
  return 0;
}

int cmd_synth(const std::string& dir, std::size_t separable, const SyntheticConfig& sc, const Settings& s) {
  const auto config = s.resolve();
  const auto schema = config.schema.empty() ? FeatureSchema::standard() : FeatureSchema::load(config.schema);
  const auto world = separable > 0 ? make_separable_world(separable, sc.dim, sc.seed, schema)
                                   : make_synthetic_world(sc, schema);
  const auto files = write_world(world, schema, dir);
  auto abs = [](const std::string& p) { return std::filesystem::absolute(p).string(); };
  std::string cfg = "triples = " + abs(files.triples) + "\nembeddings = " + abs(files.embeddings) +
                    "\nbins = " + abs(files.bins) + "\nvocab = " + abs(files.vocab) + "\n";
  write_file((std::filesystem::path(dir) / "synth.cfg").string(), cfg);
  std::printf("%zu triples, %zu nouns written to %s\n", world.triples.size(), world.profiles.size(), dir.c_str());
  return 0;
}

int cmd_train(const Settings& s, const std::string& prefix) {
  const auto config = s.resolve();
  const auto data = load_experiment_data(config);
  const auto enc = encode_experiment(config, data, derive_seed(config.seed, 2));
  std::vector<std::size_t> rows(enc.size());
  std::iota(rows.begin(), rows.end(), 0);
  auto trained = train_classifier(config.kind(), enc, rows, data.schema, config.net, config.training, config.seed);
  save_model(*trained.model, prefix);
  std::printf("trained %s on %zu triples (best epoch %zu of %zu), training accuracy %.4f\nsaved %s.manifest\n",
              config.model.c_str(), enc.size(), trained.log.best_epoch, trained.log.epochs_run,
              accuracy(*trained.model, enc, rows), prefix.c_str());
  return 0;
}

int cmd_predict(const Settings& s, const std::string& prefix, const std::string& input, const std::string& out) {
  auto config = s.resolve();
  auto model = load_model(prefix);
  const auto manifest = model->manifest();
  if (auto it = manifest.find("scheme"); it != manifest.end()) config.net.scheme = parse_scheme(it->second);
  switch (model->kind()) {
    case ModelKind::ensemble:
      if (config.wk_source() != WkSource::propagated) config.model = "nn+wk-gold";
      break;
    default: config.model = model_kind_name(model->kind());
  }
  config.triples = input;
  auto data = load_experiment_data(config);
  data.triples = read_query_triples(input);
  const auto enc = encode_experiment(config, data, derive_seed(config.seed, 2));
  std::vector<std::size_t> rows(enc.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto prob = model->predict_proba(enc, rows);
  const auto pred = model->predict(enc, rows);
  std::string text = "subject\tverb\tobject\tprobability\tpredicted\n";
  char buf[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& t = data.triples[i].triple;
    std::snprintf(buf, sizeof buf, "%.6f", prob[i]);
    text += t.subject + '\t' + t.verb + '\t' + t.object + '\t' + buf + '\t' + std::to_string(pred[i]) + '\n';
  }
  if (out.empty()) std::fputs(text.c_str(), stdout);
  else write_file(out, text);
  return 0;
}

int cmd_propagate(const Settings& s, const std::string& out) {
  const auto config = s.resolve();
  config.validate();
  std::string text = "noun_a\tnoun_b\tfeature\tlabel\tprovenance\n";
  const auto scheme = config.net.scheme;
  if (!config.pair_annotations.empty()) {
    config.check_paths({"pair_annotations", "embeddings"});
    auto ds = load_pair_annotations(config.pair_annotations);
    if (scheme != Scheme::three_level && ds.native == Scheme::three_level)
      throw ValidationError("pair annotations carry 3-level labels only; use --scheme 3l");
    Vocabulary vocab;
    for (const auto& [a, b] : ds.pairs)
      for (const auto* w : {&a, &b})
        if (!vocab.contains(*w)) vocab.add_noun(*w);
    attach_pair_vectors(ds, load_embeddings(config.embeddings, &vocab, config.oov));
    for (std::size_t f = 0; f < ds.features.size(); ++f) {
      const auto labels = ds.labels_as(f, scheme);
      const auto split = split_fraction(labels, config.prop_fraction, derive_seed(config.seed, f));
      std::vector<int> y(labels.size(), 0);
      for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i].value_or(0);
      const int hi = ds.max_label(f, scheme);
      const auto pred = fit_predict(config.prop_method, ds.x, y, split.train, -hi, hi, config.spread);
      std::vector<char> gold(labels.size(), 0);
      for (auto i : split.train) gold[i] = 1;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        text += ds.pairs[i].first + '\t' + ds.pairs[i].second + '\t' + ds.features[f] + '\t' +
                std::to_string(gold[i] ? y[i] : pred[i]) + '\t' + (gold[i] ? "gold" : "predicted") + '\n';
      }
    }
  } else {
    auto c = config;
    c.model = "nn+wk-prop";
    const auto data = load_experiment_data(c);
    const auto source = make_wk_source(c, data, config.seed);
    const auto& prop = dynamic_cast<const PropagatedPairFeatures&>(*source);
    for (const auto& [pair, entry] : prop.entries()) {
      for (std::size_t f = 0; f < entry.values.size(); ++f) {
        text += pair.first + '\t' + pair.second + '\t' + data.schema[f].name + '\t' + std::to_string(entry.values[f]) +
                '\t' + (entry.gold ? "gold" : "predicted") + '\n';
      }
    }
  }
  if (out.empty()) std::fputs(text.c_str(), stdout);
  else write_file(out, text);
  return 0;
}

int cmd_cv(const Settings& s) {
  const auto config = s.resolve();
  const auto data = load_experiment_data(config);
  const auto report = run_cv(config, data);
  const auto files = write_cv_report(report, config, data, output_root(config));
  std::fputs(format_cv_summary(report, config).c_str(), stdout);
  std::printf("reports      %s\n", files.summary.c_str());
  if (report.too_many_failures()) {
    spdlog::error("{} of {} runs failed", report.failed_runs.size(), report.runs);
    return 2;
  }
  return 0;
}

int cmd_bench(const Settings& s, const std::vector<double>& fractions) {
  auto config = s.resolve();
  config.validate();
  ExperimentData data;
  data.schema = config.schema.empty() ? FeatureSchema::standard() : FeatureSchema::load(config.schema);
  const bool have_bins = !config.bins.empty() && std::filesystem::exists(config.bins);
  const bool have_pairs = !config.pair_annotations.empty() && std::filesystem::exists(config.pair_annotations);
  if (!config.pair_annotations.empty() && !have_pairs) spdlog::warn("pair annotations not found: {}", config.pair_annotations);
  if (!config.bins.empty() && !have_bins) spdlog::warn("bins not found: {}", config.bins);
  if ((have_bins || have_pairs) && !config.embeddings.empty()) {
    config.check_paths({"embeddings"});
    Vocabulary vocab;
    if (have_bins) {
      data.profiles = load_bins(config.bins, data.schema);
      for (const auto& [w, p] : data.profiles) vocab.add_noun(w);
    }
    if (have_pairs) {
      for (const auto& [a, b] : load_pair_annotations(config.pair_annotations).pairs)
        for (const auto* w : {&a, &b})
          if (!vocab.contains(*w)) vocab.add_noun(*w);
    }
    data.embeddings = load_embeddings(config.embeddings, &vocab, config.oov);
  }
  const auto report = run_propagation_bench(config, data, fractions);
  const auto dir = std::filesystem::path(output_root(config));
  const auto base = (dir / ("bench_" + config.fingerprint())).string();
  write_file(base + ".tsv", format_bench_tsv(report));
  write_file(base + ".txt", format_bench(report));
  std::fputs(format_bench(report).c_str(), stdout);
  std::printf("reports      %s.tsv\n", base.c_str());
  return 0;
}

int cmd_errors(const Settings& s) {
  const auto config = s.resolve();
  const auto data = load_experiment_data(config);
  if (!config.diff_model.empty()) {
    auto other = config;
    other.model = config.diff_model;
    if (other.wk_source() != WkSource::none && data.profiles.empty())
      throw ValidationError("diff model " + config.diff_model + " needs bins");
  }
  const auto report = error_analysis(config, data);
  const auto dir = std::filesystem::path(output_root(config));
  const auto base = (dir / ("errors_" + config.fingerprint())).string();
  write_file(base + ".tsv", format_error_tsv(report, data));
  if (!report.tag_share.empty()) write_file(base + "_tags.tsv", format_tag_tsv(report));
  std::printf("%zu triples ranked over %zu repetitions%s\n", report.ranked.size(), report.repetitions,
              report.diff_mode ? (" (" + config.model + " wrong, " + config.diff_model + " right)").c_str() : "");
  for (const auto& [tag, share] : report.tag_share) std::printf("  %-12s %5.1f%%\n", tag.c_str(), 100.0 * share);
  std::printf("reports      %s.tsv\n", base.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Semantic plausibility experiments"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string votes, positive, negative, out;
  auto* ingest = app.add_subcommand("ingest", "Convert votes or polarity lists into the triple format");
  ingest->add_option("--votes", votes, "Vote TSV (subject, verb, object, votes)");
  ingest->add_option("--positive", positive, "Plausible triple list");
  ingest->add_option("--negative", negative, "Implausible triple list");
  ingest->add_option("--out", out, "Output triple TSV")->required();

  std::string triples_path, vocab_path, format = "text";
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_option("--triples", triples_path, "Triple TSV");
  stats->add_option("--votes", votes, "Vote TSV");
  stats->add_option("--vocab", vocab_path, "Vocabulary TSV");
  stats->add_option("--format", format, "text | kv")->check(CLI::IsMember({"text", "kv"}));

  Settings synth_s;
  SyntheticConfig sc;
  std::size_t separable = 0;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  add_layers(synth, synth_s);
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--separable", separable, "Linearly separable toy set with this many triples");
  synth->add_option("--nouns", sc.nouns, "Nouns");
  synth->add_option("--verbs", sc.verbs, "Verbs");
  synth->add_option("--dim", sc.dim, "Embedding dimension");
  synth->add_option("--count", sc.triples, "Triples");
  synth->add_option("--noise", sc.noise, "Embedding noise amplitude");
  synth->add_option("--seed", sc.seed, "Generator seed");

  Settings train_s;
  std::string model_out;
  auto* train = app.add_subcommand("train", "Train one model on the whole dataset");
  add_layers(train, train_s);
  data_flags(train, train_s);
  model_flags(train, train_s);
  train->add_option("--out", model_out, "Model path prefix")->required();

  Settings predict_s;
  std::string model_in, input, pred_out;
  auto* predict = app.add_subcommand("predict", "Score triples with a saved model");
  add_layers(predict, predict_s);
  data_flags(predict, predict_s);
  flag_key(predict, predict_s, "--model", "model", "Set to nn+wk-prop to propagate WK features");
  predict->add_option("--model-path", model_in, "Model path prefix")->required();
  predict->add_option("--input", input, "Triples to score")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out, "Output TSV (default stdout)");

  Settings prop_s;
  std::string prop_out;
  auto* propagate = app.add_subcommand("propagate", "Propagate pair features from a gold fraction");
  add_layers(propagate, prop_s);
  data_flags(propagate, prop_s);
  flag_key(propagate, prop_s, "--method", "prop_method", "lr | ordinal | spread");
  flag_key(propagate, prop_s, "--scheme", "scheme", "3l | bin");
  flag_key(propagate, prop_s, "--fraction", "prop_fraction", "Gold fraction");
  flag_key(propagate, prop_s, "--pairs", "pair_annotations", "Pair annotation file (instead of triples and bins)");
  propagate->add_option("--out", prop_out, "Output TSV (default stdout)");

  Settings cv_s;
  auto* cv = app.add_subcommand("cv", "Repeated K-fold cross-validation");
  add_layers(cv, cv_s);
  data_flags(cv, cv_s);
  model_flags(cv, cv_s);
  protocol_flags(cv, cv_s);

  Settings bench_s;
  std::vector<double> fractions{0.05, 0.20};
  auto* bench = app.add_subcommand("bench-prop", "Propagation accuracy benchmark");
  add_layers(bench, bench_s);
  data_flags(bench, bench_s);
  flag_key(bench, bench_s, "--pairs", "pair_annotations", "External pair annotation file");
  flag_key(bench, bench_s, "--pair-count", "pair_count", "Pairs sampled from the gold bins");
  flag_key(bench, bench_s, "--reps", "prop_reps", "Seeded repetitions");
  bench->add_option("--fractions", fractions, "Gold fractions")->expected(1, -1);

  Settings err_s;
  auto* errors = app.add_subcommand("errors", "Misclassification frequency over repeated CV");
  add_layers(errors, err_s);
  data_flags(errors, err_s);
  model_flags(errors, err_s);
  protocol_flags(errors, err_s);
  flag_key(errors, err_s, "--reps", "reps", "Repetitions");
  flag_key(errors, err_s, "--top", "top", "Rows to report");
  flag_key(errors, err_s, "--diff-model", "diff_model", "Count cases this model gets right and --model gets wrong");
  flag_key(errors, err_s, "--tags", "tags", "Tag file (subject, verb, object, tags)");
  switch_key(errors, err_s, "--auto-tags", "auto_tags", "Tag by features with large gold bin differences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  init_logging(verbose);

  try {
    if (ingest->parsed()) return cmd_ingest(votes, positive, negative, out);
    if (stats->parsed()) return cmd_stats(triples_path, votes, vocab_path, format);
    if (synth->parsed()) return cmd_synth(synth_dir, separable, sc, synth_s);
    if (train->parsed()) return cmd_train(train_s, model_out);
    if (predict->parsed()) return cmd_predict(predict_s, model_in, input, pred_out);
    if (propagate->parsed()) return cmd_propagate(prop_s, prop_out);
    if (cv->parsed()) return cmd_cv(cv_s);
    if (bench->parsed()) return cmd_bench(bench_s, fractions);
    if (errors->parsed()) return cmd_errors(err_s);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}

}  // namespace semplaus
