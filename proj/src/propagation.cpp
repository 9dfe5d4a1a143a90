#include "semplaus/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <ceres/first_order_function.h>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <spdlog/spdlog.h>

#include "semplaus/common.hpp"

namespace semplaus {

namespace {

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double row_dot(std::span<const double> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

void minimize(ceres::FirstOrderFunction* fn, std::vector<double>& params) {
  ceres::GradientProblem problem(fn);
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = 1000;
  options.function_tolerance = 1e-10;
  options.gradient_tolerance = 1e-8;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, params.data(), &summary);
  if (!std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); }))
    throw NumericError("propagation fit produced non-finite parameters");
}

// 0.5 * l2 * |w|^2 + sum_i softplus(-s_i (w.x_i + b)), parameters [w; b]
class BinaryLogLoss : public ceres::FirstOrderFunction {
 public:
  BinaryLogLoss(const DenseMatrix& x, std::vector<std::size_t> rows, std::vector<int> sign, double l2)
      : x_(x), rows_(std::move(rows)), sign_(std::move(sign)), l2_(l2) {}

  bool Evaluate(const double* p, double* cost, double* grad) const override {
    const std::size_t d = x_.cols();
    const std::span<const double> w(p, d);
    double c = 0.0;
    for (std::size_t j = 0; j < d; ++j) c += 0.5 * l2_ * p[j] * p[j];
    if (grad) {
      for (std::size_t j = 0; j < d; ++j) grad[j] = l2_ * p[j];
      grad[d] = 0.0;
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto xi = x_.row(rows_[i]);
      const double m = sign_[i] * (row_dot(w, xi) + p[d]);
      c += softplus(-m);
      if (grad) {
        const double g = -sign_[i] * sigmoid(-m);
        for (std::size_t j = 0; j < d; ++j) grad[j] += g * xi[j];
        grad[d] += g;
      }
    }
    *cost = c;
    return std::isfinite(c);
  }
  int NumParameters() const override { return static_cast<int>(x_.cols() + 1); }

 private:
  const DenseMatrix& x_;
  std::vector<std::size_t> rows_;
  std::vector<int> sign_;
  double l2_;
};

// All-threshold loss. Parameters [w (d); t0; log increments (C-2)].
class OrdinalLoss : public ceres::FirstOrderFunction {
 public:
  OrdinalLoss(const DenseMatrix& x, std::vector<std::size_t> rows, std::vector<int> cls, std::size_t classes,
              double l2)
      : x_(x), rows_(std::move(rows)), cls_(std::move(cls)), c_(classes), l2_(l2) {}

  static std::vector<double> thresholds(const double* p, std::size_t d, std::size_t classes) {
    std::vector<double> t(classes - 1);
    t[0] = p[d];
    for (std::size_t c = 1; c + 1 < classes; ++c) t[c] = t[c - 1] + std::exp(p[d + c]);
    return t;
  }

  bool Evaluate(const double* p, double* cost, double* grad) const override {
    const std::size_t d = x_.cols();
    const std::size_t nt = c_ - 1;
    const std::span<const double> w(p, d);
    const auto theta = thresholds(p, d, c_);
    std::vector<double> d_theta(nt, 0.0);
    double c = 0.0;
    for (std::size_t j = 0; j < d; ++j) c += 0.5 * l2_ * p[j] * p[j];
    if (grad) {
      for (std::size_t j = 0; j < d; ++j) grad[j] = l2_ * p[j];
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto xi = x_.row(rows_[i]);
      const double z = row_dot(w, xi);
      double dz = 0.0;
      for (std::size_t k = 0; k < nt; ++k) {
        const double s = static_cast<std::size_t>(cls_[i]) <= k ? 1.0 : -1.0;
        const double t = theta[k] - z;
        c += softplus(-s * t);
        const double g = -s * sigmoid(-s * t);  // d loss / d t
        d_theta[k] += g;
        dz -= g;
      }
      if (grad)
        for (std::size_t j = 0; j < d; ++j) grad[j] += dz * xi[j];
    }
    if (grad) {
      // theta_k = t0 + sum_{j<=k} exp(delta_j)
      double tail = 0.0;
      for (std::size_t k = nt; k-- > 1;) {
        tail += d_theta[k];
        grad[d + k] = tail * std::exp(p[d + k]);
      }
      grad[d] = tail + d_theta[0];
    }
    *cost = c;
    return std::isfinite(c);
  }
  int NumParameters() const override { return static_cast<int>(x_.cols() + c_ - 1); }

 private:
  const DenseMatrix& x_;
  std::vector<std::size_t> rows_;
  std::vector<int> cls_;
  std::size_t c_;
  double l2_;
};

std::vector<std::string> split_cells(const std::string& line, char delim) {
  auto cells = split(line, delim);
  for (auto& c : cells) c = trim(c);
  return cells;
}

int majority(std::span<const int> y, std::span<const std::size_t> rows) {
  std::map<int, std::size_t> counts;
  for (std::size_t r : rows) ++counts[y[r]];
  int best = 0;
  std::size_t best_count = 0;
  for (const auto& [label, n] : counts) {
    if (n > best_count) {
      best = label;
      best_count = n;
    }
  }
  return best;
}

}  // namespace

std::vector<std::optional<int>> PairDataset::labels_as(std::size_t f, Scheme scheme) const {
  if (scheme == native) return labels.at(f);
  if (native == Scheme::three_level) throw ValidationError("pair data holds 3-level labels only");
  auto out = labels.at(f);
  for (auto& v : out)
    if (v) v = (*v > 0) - (*v < 0);
  return out;
}

PairDataset sample_pairs(const ProfileMap& profiles, const FeatureSchema& schema, std::size_t n,
                         std::uint64_t seed) {
  if (profiles.size() < 2) throw ValidationError("sampling pairs needs at least 2 profiled nouns");
  const std::size_t m = profiles.size();
  const std::size_t total = m * (m - 1) / 2;
  if (n > total) {
    throw ValidationError("cannot sample " + std::to_string(n) + " distinct pairs from " + std::to_string(m) +
                          " nouns (" + std::to_string(total) + " available)");
  }
  std::vector<const NounProfile*> nouns;
  for (const auto& [name, p] : profiles) nouns.push_back(&p);

  Rng rng(seed);
  std::vector<std::uint64_t> chosen;
  if (total <= 20'000'000) {
    std::vector<std::uint64_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(total - i)]);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::set<std::uint64_t> seen;
    while (chosen.size() < n) {
      const auto v = rng.below(total);
      if (seen.insert(v).second) chosen.push_back(v);
    }
  }

  // index -> (a, b): pairs enumerated row by row, a < b
  std::vector<std::uint64_t> row_start(m);
  for (std::size_t a = 1; a < m; ++a) row_start[a] = row_start[a - 1] + (m - a);

  PairDataset ds;
  ds.native = Scheme::bin_diff;
  for (const auto& f : schema.features()) {
    ds.features.push_back(f.name);
    ds.max_diff.push_back(f.bins() - 1);
  }
  ds.labels.assign(schema.size(), {});
  for (auto idx : chosen) {
    const std::size_t a = static_cast<std::size_t>(std::upper_bound(row_start.begin(), row_start.end(), idx) -
                                                   row_start.begin()) - 1;
    const std::size_t b = a + 1 + static_cast<std::size_t>(idx - row_start[a]);
    ds.pairs.emplace_back(nouns[a]->noun, nouns[b]->noun);
    for (std::size_t f = 0; f < schema.size(); ++f) ds.labels[f].push_back(bin_diff(*nouns[a], *nouns[b], f));
  }
  return ds;
}

void attach_pair_vectors(PairDataset& ds, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  ds.x = DenseMatrix(ds.size(), 3 * d);
  std::vector<double> a(d), b(d);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    table.lookup_into(ds.pairs[i].first, a);
    table.lookup_into(ds.pairs[i].second, b);
    auto row = ds.x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = a[j];
      row[d + j] = b[j];
      row[2 * d + j] = a[j] - b[j];
    }
  }
}

PairDataset load_pair_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::string line;
  std::size_t lineno = 0;
  char delim = ',';
  PairDataset ds;
  ds.native = Scheme::three_level;
  std::map<NounPair, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (ds.features.empty()) {
      if (line.find('\t') != std::string::npos) delim = '\t';
      const auto header = split_cells(line, delim);
      if (header.size() < 3) throw ParseError(path, lineno, "header needs two noun columns and at least one feature");
      for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].empty()) throw ParseError(path, lineno, "empty feature name");
        ds.features.push_back(to_lower(header[c]));
        ds.max_diff.push_back(1);
      }
      ds.labels.assign(ds.features.size(), {});
      continue;
    }
    const auto cells = split_cells(line, delim);
    if (cells.size() < 2 || cells.size() > ds.features.size() + 2)
      throw ParseError(path, lineno, "expected " + std::to_string(ds.features.size() + 2) + " columns");
    std::string a = to_lower(cells[0]), b = to_lower(cells[1]);
    if (a.empty() || b.empty()) throw ParseError(path, lineno, "empty noun");
    if (a == b) {
      spdlog::warn("{}:{}: pair of identical nouns skipped", path, lineno);
      continue;
    }
    const int sign = a < b ? 1 : -1;
    if (sign < 0) std::swap(a, b);
    if (index.count({a, b})) {
      spdlog::warn("{}:{}: duplicate pair {}/{} skipped", path, lineno, a, b);
      continue;
    }
    index.emplace(NounPair{a, b}, ds.pairs.size());
    ds.pairs.emplace_back(a, b);
    for (std::size_t f = 0; f < ds.features.size(); ++f) {
      const std::size_t c = f + 2;
      if (c >= cells.size() || cells[c].empty()) {
        ds.labels[f].push_back(std::nullopt);
        continue;
      }
      long long v = 0;
      if (!parse_int(cells[c], v) || v < -1 || v > 1)
        throw ParseError(path, lineno, "label '" + cells[c] + "' is not -1, 0 or 1");
      ds.labels[f].push_back(static_cast<int>(v) * sign);
    }
  }
  if (ds.features.empty()) throw ParseError(path, lineno, "no header");
  return ds;
}

PairSplit split_fraction(const std::vector<std::optional<int>>& labels, double fraction, std::uint64_t seed,
                         bool stratify) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("fraction must be in (0, 1]");
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) labeled.push_back(i);
  const std::size_t n = labeled.size();
  PairSplit out;
  if (n == 0) return out;
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);

  Rng rng(seed);
  std::vector<char> in_train(labels.size(), 0);
  bool done = false;
  if (stratify) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i : labeled) groups[*labels[i]].push_back(i);
    std::vector<std::vector<std::size_t>*> members;
    std::vector<std::size_t> alloc;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (auto& [label, g] : groups) {
      rng.shuffle(g);
      const double quota = static_cast<double>(g.size()) * static_cast<double>(n_train) / static_cast<double>(n);
      const auto base = static_cast<std::size_t>(std::floor(quota));
      remainders.emplace_back(-(quota - static_cast<double>(base)), members.size());
      members.push_back(&g);
      alloc.push_back(base);
      assigned += base;
    }
    std::stable_sort(remainders.begin(), remainders.end());
    for (std::size_t i = 0; assigned < n_train; ++i, ++assigned) ++alloc[remainders[i % remainders.size()].second];
    bool ok = true;
    for (std::size_t g = 0; g < alloc.size() && ok; ++g) {
      if (alloc[g] > 0) continue;
      const auto donor = std::max_element(alloc.begin(), alloc.end()) - alloc.begin();
      if (alloc[static_cast<std::size_t>(donor)] <= 1) {
        ok = false;
        break;
      }
      --alloc[static_cast<std::size_t>(donor)];
      alloc[g] = 1;
    }
    if (ok) {
      for (std::size_t g = 0; g < members.size(); ++g)
        for (std::size_t i = 0; i < alloc[g]; ++i) in_train[(*members[g])[i]] = 1;
      done = true;
    } else {
      spdlog::warn("stratified split would leave a class out of the training share; using a random split");
    }
  }
  if (!done) {
    auto order = labeled;
    rng.shuffle(order);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = 1;
  }
  for (std::size_t i : labeled) (in_train[i] ? out.train : out.test).push_back(i);
  return out;
}

int MulticlassLr::predict(std::span<const double> x) const {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double s = weights.rows() ? row_dot(weights.row(c), x) + bias[c] : 0.0;
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return classes.at(best);
}

MulticlassLr fit_lr(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> rows, double l2) {
  if (rows.empty()) throw ValidationError("logistic regression needs training rows");
  MulticlassLr m;
  std::set<int> seen;
  for (std::size_t r : rows) seen.insert(y[r]);
  m.classes.assign(seen.begin(), seen.end());
  if (m.classes.size() == 1) {
    spdlog::warn("single-class training data; predicting {} everywhere", m.classes[0]);
    m.bias = {0.0};
    return m;
  }
  const std::size_t d = x.cols();
  m.weights = DenseMatrix(m.classes.size(), d);
  m.bias.assign(m.classes.size(), 0.0);
  const std::vector<std::size_t> row_list(rows.begin(), rows.end());
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    std::vector<int> sign;
    for (std::size_t r : rows) sign.push_back(y[r] == m.classes[c] ? 1 : -1);
    std::vector<double> p(d + 1, 0.0);
    minimize(new BinaryLogLoss(x, row_list, std::move(sign), l2), p);
    std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d), m.weights.row(c).begin());
    m.bias[c] = p[d];
  }
  return m;
}

double OrdinalLr::score(std::span<const double> x) const { return w.empty() ? 0.0 : row_dot(w, x); }

std::vector<double> OrdinalLr::class_probabilities(std::span<const double> x) const {
  const double z = score(x);
  std::vector<double> p(classes());
  double prev = 0.0;
  for (std::size_t c = 0; c < classes(); ++c) {
    const double cum = c < thresholds.size() ? sigmoid(thresholds[c] - z) : 1.0;
    p[c] = cum - prev;
    prev = cum;
  }
  return p;
}

int OrdinalLr::predict(std::span<const double> x) const {
  const auto p = class_probabilities(x);
  return lo + static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

OrdinalLr fit_ordinal(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> rows, double l2) {
  if (rows.empty()) throw ValidationError("ordinal regression needs training rows");
  OrdinalLr m;
  int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
  for (std::size_t r : rows) {
    lo = std::min(lo, y[r]);
    hi = std::max(hi, y[r]);
  }
  m.lo = lo;
  if (lo == hi) {
    spdlog::warn("single-class training data; predicting {} everywhere", lo);
    return m;
  }
  const std::size_t classes = static_cast<std::size_t>(hi - lo + 1);
  const std::size_t d = x.cols();
  std::vector<int> cls;
  std::vector<double> cum(classes, 0.0);
  for (std::size_t r : rows) {
    cls.push_back(y[r] - lo);
    cum[static_cast<std::size_t>(y[r] - lo)] += 1.0;
  }
  // start from the empirical cumulative logits
  std::vector<double> p(d + classes - 1, 0.0);
  double acc = 0.0, prev = 0.0;
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c + 1 < classes; ++c) {
    acc += cum[c];
    const double q = std::clamp((acc + 0.5) / (n + 1.0), 1e-3, 1.0 - 1e-3);
    double t = std::log(q / (1.0 - q));
    if (c > 0) t = std::max(t, prev + 1e-2);
    if (c == 0)
      p[d] = t;
    else
      p[d + c] = std::log(t - prev);
    prev = t;
  }
  const std::vector<std::size_t> row_list(rows.begin(), rows.end());
  minimize(new OrdinalLoss(x, row_list, std::move(cls), classes, l2), p);
  m.w.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d));
  m.thresholds = OrdinalLoss::thresholds(p.data(), d, classes);
  return m;
}

SparseGraph knn_graph(const DenseMatrix& x, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  const std::size_t n = x.rows();
  DenseMatrix unit = x;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = unit.row(i);
    const double norm = std::sqrt(row_dot(r, r));
    for (double& v : r) v = norm > 0 ? v / norm : 0.0;
  }
  std::vector<std::map<std::size_t, double>> adj(n);
  std::vector<std::pair<double, std::size_t>> sims;
  for (std::size_t i = 0; i < n; ++i) {
    sims.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sims.emplace_back(-std::max(0.0, row_dot(unit.row(i), unit.row(j))), j);
    const std::size_t keep = std::min(k, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(keep), sims.end());
    for (std::size_t t = 0; t < keep; ++t) {
      const double w = -sims[t].first;
      if (w <= 0.0) continue;
      const std::size_t j = sims[t].second;
      adj[i][j] = std::max(adj[i][j], w);
      adj[j][i] = std::max(adj[j][i], w);
    }
  }
  SparseGraph g;
  g.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.rows[i].assign(adj[i].begin(), adj[i].end());
  return g;
}

SparseGraph normalize_graph(const SparseGraph& w) {
  std::vector<double> inv_sqrt(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    double deg = 0.0;
    for (const auto& [j, v] : w.rows[i]) deg += v;
    inv_sqrt[i] = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  SparseGraph s = w;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (auto& [j, v] : s.rows[i]) v *= inv_sqrt[i] * inv_sqrt[j];
  return s;
}

SpreadResult spread_scores(const SparseGraph& s, const DenseMatrix& y, const SpreadConfig& config) {
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (y.rows() != s.size()) throw ValidationError("label matrix does not match the graph");
  SpreadResult r;
  r.scores = y;
  DenseMatrix next(y.rows(), y.cols());
  for (r.iterations = 1; r.iterations <= config.max_iterations; ++r.iterations) {
    double change = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto out = next.row(i);
      for (std::size_t c = 0; c < y.cols(); ++c) out[c] = (1.0 - config.alpha) * y(i, c);
      for (const auto& [j, v] : s.rows[i])
        for (std::size_t c = 0; c < y.cols(); ++c) out[c] += config.alpha * v * r.scores(j, c);
      for (std::size_t c = 0; c < y.cols(); ++c) change = std::max(change, std::abs(out[c] - r.scores(i, c)));
    }
    std::swap(r.scores, next);
    if (change < config.tolerance) {
      r.converged = true;
      return r;
    }
  }
  r.iterations = config.max_iterations;
  spdlog::warn("label spreading did not converge in {} iterations", config.max_iterations);
  return r;
}

std::vector<int> label_spread(const DenseMatrix& x, std::span<const int> y, std::span<const std::size_t> train,
                              int lo, int hi, const SpreadConfig& config) {
  if (train.empty()) throw ValidationError("label spreading needs labeled rows");
  if (hi < lo) throw ValidationError("empty class range");
  const std::size_t classes = static_cast<std::size_t>(hi - lo + 1);
  DenseMatrix seed(x.rows(), classes);
  for (std::size_t r : train) {
    if (y[r] < lo || y[r] > hi) throw ValidationError("label " + std::to_string(y[r]) + " outside the class range");
    seed(r, static_cast<std::size_t>(y[r] - lo)) = 1.0;
  }
  const auto result = spread_scores(normalize_graph(knn_graph(x, config.k)), seed, config);
  const int fallback = majority(y, train);
  std::vector<int> out(x.rows());
  std::size_t unreached = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = result.scores.row(i);
    const auto best = std::max_element(row.begin(), row.end());
    if (*best <= 0.0) {
      out[i] = fallback;
      ++unreached;
    } else {
      out[i] = lo + static_cast<int>(best - row.begin());
    }
  }
  if (unreached) spdlog::warn("{} nodes not reached by any label; assigned the majority label", unreached);
  return out;
}

PropagationMethod parse_propagation_method(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "lr") return PropagationMethod::lr;
  if (l == "ordinal" || l == "ordinal-lr") return PropagationMethod::ordinal;
  if (l == "spread" || l == "label-spreading") return PropagationMethod::spread;
  throw ValidationError("unknown propagation method '" + s + "' (expected lr|ordinal|spread)");
}

std::string propagation_method_name(PropagationMethod m) {
  switch (m) {
    case PropagationMethod::lr: return "lr";
    case PropagationMethod::ordinal: return "ordinal";
    case PropagationMethod::spread: return "spread";
  }
  return "?";
}

std::vector<int> fit_predict(PropagationMethod method, const DenseMatrix& x, std::span<const int> y,
                             std::span<const std::size_t> train, int lo, int hi, const SpreadConfig& spread) {
  std::vector<int> out(x.rows());
  switch (method) {
    case PropagationMethod::lr: {
      const auto m = fit_lr(x, y, train);
      for (std::size_t i = 0; i < x.rows(); ++i) out[i] = m.predict(x.row(i));
      break;
    }
    case PropagationMethod::ordinal: {
      const auto m = fit_ordinal(x, y, train);
      for (std::size_t i = 0; i < x.rows(); ++i) out[i] = m.predict(x.row(i));
      break;
    }
    case PropagationMethod::spread:
      out = label_spread(x, y, train, lo, hi, spread);
      break;
  }
  return out;
}

PropagationScore evaluate_propagation(const PairDataset& ds, PropagationMethod method, Scheme scheme,
                                      double fraction, std::uint64_t seed, const SpreadConfig& spread) {
  if (ds.x.rows() != ds.size()) throw ValidationError("pair vectors are not attached");
  PropagationScore score;
  for (std::size_t f = 0; f < ds.features.size(); ++f) {
    const auto labels = ds.labels_as(f, scheme);
    const auto split = split_fraction(labels, fraction, derive_seed(seed, f));
    if (split.train.empty()) {
      spdlog::warn("feature {} has no labeled pairs; skipped", ds.features[f]);
      continue;
    }
    std::vector<int> y(labels.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i]) y[i] = *labels[i];
    const int m = ds.max_label(f, scheme);
    const auto pred = fit_predict(method, ds.x, y, split.train, -m, m, spread);
    const auto& eval = split.test.empty() ? split.train : split.test;
    std::size_t hit = 0;
    for (std::size_t r : eval) hit += pred[r] == y[r];
    score.per_feature.push_back(static_cast<double>(hit) / static_cast<double>(eval.size()));
  }
  if (!score.per_feature.empty()) {
    score.mean = std::accumulate(score.per_feature.begin(), score.per_feature.end(), 0.0) /
                 static_cast<double>(score.per_feature.size());
  }
  return score;
}

PairFeatures PropagatedPairFeatures::features(const std::string& subject, const std::string& object,
                                              Scheme scheme) const {
  if (scheme == Scheme::bin_diff && scheme_ == Scheme::three_level)
    throw ValidationError("propagated features are 3-level; bin-diff requested");
  PairFeatures out{scheme, {}};
  if (subject == object) {
    out.values.assign(n_features(), 0);
    return out;
  }
  const bool flip = object < subject;
  const NounPair key = flip ? NounPair{object, subject} : NounPair{subject, object};
  auto it = values_.find(key);
  if (it == values_.end())
    throw ValidationError("no propagated features for pair '" + subject + "' / '" + object + "'");
  out.values = it->second.values;
  for (auto& v : out.values) {
    if (flip) v = -v;
    if (scheme == Scheme::three_level) v = (v > 0) - (v < 0);
  }
  return out;
}

bool PropagatedPairFeatures::is_gold(const std::string& a, const std::string& b) const {
  auto it = values_.find(a < b ? NounPair{a, b} : NounPair{b, a});
  if (it == values_.end()) throw ValidationError("unknown pair '" + a + "' / '" + b + "'");
  return it->second.gold;
}

std::size_t PropagatedPairFeatures::gold_count() const {
  std::size_t n = 0;
  for (const auto& [k, e] : values_) n += e.gold;
  return n;
}

PropagatedPairFeatures propagate_profiles(const ProfileMap& gold, const FeatureSchema& schema,
                                          const std::vector<LabeledTriple>& triples, const EmbeddingTable& table,
                                          PropagationMethod method, Scheme scheme, double fraction,
                                          std::uint64_t seed, const SpreadConfig& spread) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("fraction must be in (0, 1]");
  std::set<NounPair> pool_set;
  for (const auto& lt : triples) {
    const auto& s = lt.triple.subject;
    const auto& o = lt.triple.object;
    if (s != o) pool_set.insert(s < o ? NounPair{s, o} : NounPair{o, s});
  }
  PairDataset ds;
  ds.native = Scheme::bin_diff;
  for (const auto& f : schema.features()) {
    ds.features.push_back(f.name);
    ds.max_diff.push_back(f.bins() - 1);
  }
  ds.pairs.assign(pool_set.begin(), pool_set.end());
  ds.labels.assign(schema.size(), std::vector<std::optional<int>>(ds.size()));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto a = gold.find(ds.pairs[i].first);
    auto b = gold.find(ds.pairs[i].second);
    if (a == gold.end() || b == gold.end()) continue;
    candidates.push_back(i);
    for (std::size_t f = 0; f < schema.size(); ++f) ds.labels[f][i] = bin_diff(a->second, b->second, f);
  }
  Rng rng(seed);
  rng.shuffle(candidates);
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  candidates.resize(std::min(candidates.size(), wanted));
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> is_gold(ds.size(), 0);
  for (std::size_t i : candidates) is_gold[i] = 1;

  PropagatedPairFeatures out;
  out.scheme_ = scheme;
  out.n_features_ = schema.size();
  std::vector<std::vector<int>> values(ds.size(), std::vector<int>(schema.size(), 0));
  const bool need_prediction = candidates.size() < ds.size();
  if (need_prediction) {
    if (candidates.empty()) throw ValidationError("propagation has no gold pairs to train on");
    attach_pair_vectors(ds, table);
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto labels = ds.labels_as(f, scheme);
    std::vector<int> y(ds.size(), 0);
    for (std::size_t i : candidates) y[i] = *labels[i];
    std::vector<int> pred;
    if (need_prediction) {
      const int m = ds.max_label(f, scheme);
      pred = fit_predict(method, ds.x, y, candidates, -m, m, spread);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) values[i][f] = is_gold[i] ? y[i] : pred[i];
  }
  for (std::size_t i = 0; i < ds.size(); ++i)
    out.values_.emplace(ds.pairs[i], PropagatedPairFeatures::Entry{std::move(values[i]), is_gold[i] != 0});
  return out;
}

}  // namespace semplaus
