#include "avid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "avid/rng.hpp"

namespace avid {

ProbeReport linear_probe(std::span<const Vector> features, std::span<const int> labels,
                         const ProbeSettings& settings) {
  if (features.size() != labels.size())
    fail(ErrorCode::LengthMismatch, "linear_probe: features and labels differ in count");
  if (!(settings.split_ratio > 0.0 && settings.split_ratio < 1.0))
    fail(ErrorCode::DegenerateSplit, "linear_probe: split ratio must lie in (0,1)");
  if (features.empty()) fail(ErrorCode::DegenerateSplit, "linear_probe: no samples");
  const std::size_t N = features.size();
  const std::size_t dim = features[0].size();
  for (const auto& f : features)
    if (f.size() != dim) fail(ErrorCode::LengthMismatch, "linear_probe: ragged features");
  for (int y : labels)
    if (y < 0) fail(ErrorCode::InvalidLabel, "linear_probe: negative label");
  const std::size_t C = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(settings.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(settings.split_ratio * static_cast<double>(N)));
  if (n_train == 0 || n_train >= N) fail(ErrorCode::DegenerateSplit, "linear_probe: empty split");
  const std::span<const std::size_t> train_idx(order.data(), n_train);
  const std::span<const std::size_t> test_idx(order.data() + n_train, N - n_train);

  std::vector<bool> present(C, false), seen(C, false);
  for (int y : labels) present[static_cast<std::size_t>(y)] = true;
  for (std::size_t i : train_idx) seen[static_cast<std::size_t>(labels[i])] = true;
  for (std::size_t c = 0; c < C; ++c) {
    if (present[c] && !seen[c]) {
      std::ostringstream msg;
      msg << "linear_probe: class " << c << " has no training sample";
      fail(ErrorCode::DegenerateSplit, msg.str());
    }
  }

  ClassifierParams probe = ClassifierParams::zeros(dim, C);
  OptimizerState opt = OptimizerState::for_params(probe.affine);
  const AdamSettings adam{settings.lr, 0.9, 0.999, 1e-8, 0.0};
  MlpParams grads = probe.affine.zeros_like();
  Vector logits(C);
  const double inv_n = 1.0 / static_cast<double>(n_train);

  auto compute_logits = [&](const Vector& x) {
    const Layer& layer = probe.affine.layers[0];
    for (std::size_t c = 0; c < C; ++c) {
      const double* w = layer.weight.row(c).data();
      double s = layer.bias[c];
      for (std::size_t k = 0; k < dim; ++k) s += w[k] * x[k];
      logits[c] = s;
    }
  };

  for (std::size_t step = 0; step < settings.steps; ++step) {
    Layer& g = grads.layers[0];
    std::fill(g.weight.values().begin(), g.weight.values().end(), 0.0);
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
    for (std::size_t i : train_idx) {
      const Vector& x = features[i];
      compute_logits(x);
      const double hi = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (double& l : logits) {
        l = std::exp(l - hi);
        total += l;
      }
      const auto y = static_cast<std::size_t>(labels[i]);
      for (std::size_t c = 0; c < C; ++c) {
        const double d = (logits[c] / total - (c == y ? 1.0 : 0.0)) * inv_n;
        g.bias[c] += d;
        double* gw = g.weight.row(c).data();
        for (std::size_t k = 0; k < dim; ++k) gw[k] += d * x[k];
      }
    }
    adam_step(probe.affine, grads, opt, adam);
  }

  auto predict = [&](const Vector& x) {
    compute_logits(x);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  };

  ProbeReport report;
  report.settings = settings;
  report.train_size = train_idx.size();
  report.test_size = test_idx.size();
  std::size_t correct = 0;
  for (std::size_t i : train_idx) correct += predict(features[i]) == labels[i];
  report.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());

  std::vector<std::size_t> hits(C, 0), totals(C, 0);
  correct = 0;
  for (std::size_t i : test_idx) {
    const auto y = static_cast<std::size_t>(labels[i]);
    totals[y] += 1;
    if (predict(features[i]) == labels[i]) {
      ++correct;
      hits[y] += 1;
    }
  }
  report.test_accuracy = static_cast<double>(correct) / static_cast<double>(test_idx.size());
  report.per_class_accuracy.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    report.per_class_accuracy[c] = totals[c] ? static_cast<double>(hits[c]) / static_cast<double>(totals[c])
                                             : std::numeric_limits<double>::quiet_NaN();
  return report;
}

namespace {

/// Dense relabeling of arbitrary integer labels to 0..k-1 (sorted order).
std::vector<std::size_t> compact(std::span<const int> labels, std::size_t& k) {
  std::map<int, std::size_t> ids;
  for (int l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, id] : ids) id = next++;
  k = next;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids.at(labels[i]);
  return out;
}

struct Contingency {
  std::vector<std::vector<double>> counts;  // [predicted][true]
  std::vector<double> row_sums, col_sums;
  double total = 0.0;
};

Contingency contingency(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    fail(ErrorCode::LengthMismatch, "cluster metrics: label sequences differ in length");
  if (predicted.empty()) fail(ErrorCode::EmptyCollection, "cluster metrics: no samples");
  std::size_t kp = 0, kt = 0;
  const auto p = compact(predicted, kp);
  const auto t = compact(truth, kt);
  Contingency c;
  c.counts.assign(kp, std::vector<double>(kt, 0.0));
  c.row_sums.assign(kp, 0.0);
  c.col_sums.assign(kt, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.counts[p[i]][t[i]] += 1.0;
    c.row_sums[p[i]] += 1.0;
    c.col_sums[t[i]] += 1.0;
  }
  c.total = static_cast<double>(p.size());
  return c;
}

double entropy(const std::vector<double>& sums, double total) {
  double h = 0.0;
  for (double s : sums)
    if (s > 0.0) h -= (s / total) * std::log(s / total);
  return h;
}

/// Minimum-cost assignment of rows to columns for an n x m matrix, n <= m.
/// Returns, for each row, its assigned column.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const std::size_t m = n ? cost[0].size() : 0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace

ClusterScores cluster_metrics(std::span<const int> predicted, std::span<const int> truth) {
  const Contingency c = contingency(predicted, truth);
  ClusterScores out;
  double majority = 0.0;
  for (const auto& row : c.counts) majority += *std::max_element(row.begin(), row.end());
  out.purity = majority / c.total;

  double mi = 0.0;
  for (std::size_t a = 0; a < c.counts.size(); ++a) {
    for (std::size_t b = 0; b < c.col_sums.size(); ++b) {
      const double nab = c.counts[a][b];
      if (nab <= 0.0) continue;
      mi += (nab / c.total) * std::log(c.total * nab / (c.row_sums[a] * c.col_sums[b]));
    }
  }
  const double hp = entropy(c.row_sums, c.total);
  const double ht = entropy(c.col_sums, c.total);
  if (hp == 0.0 && ht == 0.0) {
    out.nmi = 1.0;
  } else {
    out.nmi = std::clamp(2.0 * mi / (hp + ht), 0.0, 1.0);
  }
  return out;
}

double matched_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  const Contingency c = contingency(predicted, truth);
  const std::size_t n = std::max(c.counts.size(), c.col_sums.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < c.counts.size(); ++a)
    for (std::size_t b = 0; b < c.col_sums.size(); ++b) cost[a][b] = -c.counts[a][b];
  const auto assignment = hungarian(cost);
  double matched = 0.0;
  for (std::size_t a = 0; a < n; ++a) matched -= cost[a][assignment[a]];
  return matched / c.total;
}

void bucket_cosines(std::span<const SemanticLibrary* const> libraries, double& within,
                    double& cross) {
  double within_sum = 0.0, cross_sum = 0.0;
  double within_n = 0.0, cross_n = 0.0;
  for (const SemanticLibrary* lib : libraries) {
    const std::size_t C = lib->num_buckets();
    for (std::size_t b1 = 0; b1 < C; ++b1) {
      const auto& x = lib->bucket(b1);
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
          within_sum += cosine(x[i].embedding, x[j].embedding);
          within_n += 1.0;
        }
        for (std::size_t b2 = b1 + 1; b2 < C; ++b2) {
          for (const auto& e : lib->bucket(b2)) {
            cross_sum += cosine(x[i].embedding, e.embedding);
            cross_n += 1.0;
          }
        }
      }
    }
  }
  within = within_n > 0.0 ? within_sum / within_n : 0.0;
  cross = cross_n > 0.0 ? cross_sum / cross_n : 0.0;
}

MiningDiagnostics mining_diagnostics(const TrainState& state, std::span<const int> classes) {
  MiningDiagnostics d;
  for (std::size_t b = 0; b < state.library_a.num_buckets(); ++b)
    d.occupancy_a.push_back(state.library_a.bucket(b).size());
  for (std::size_t b = 0; b < state.library_v.num_buckets(); ++b)
    d.occupancy_v.push_back(state.library_v.bucket(b).size());

  const SemanticLibrary* libs[] = {&state.library_a, &state.library_v};
  bucket_cosines(libs, d.within_bucket_cosine, d.cross_bucket_cosine);

  if (!classes.empty()) {
    if (classes.size() != state.pseudo.size())
      fail(ErrorCode::LengthMismatch, "mining_diagnostics: labels do not match the state");
    // Mining depends only on the anchor's pseudo-label, so collect the
    // source classes of each label's contrastive set once.
    const std::size_t C = state.library_a.num_buckets();
    std::vector<std::vector<int>> sets(C);
    for (std::size_t y = 0; y < C; ++y) {
      for (const SemanticLibrary* lib : libs) {
        for (std::size_t b = 0; b < C; ++b) {
          if (b == y) continue;
          for (const auto& e : lib->bucket(b))
            if (e.source != kNoSource) sets[y].push_back(classes[static_cast<std::size_t>(e.source)]);
        }
      }
    }
    double sum = 0.0;
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const int y = state.pseudo.label(i);
      if (y < 0 || sets[static_cast<std::size_t>(y)].empty()) continue;
      sum += faulty_negative_rate(sets[static_cast<std::size_t>(y)], classes[i]);
      ++anchors;
    }
    if (anchors > 0) d.faulty_negative_rate = sum / static_cast<double>(anchors);
  }
  return d;
}

}  // namespace avid
