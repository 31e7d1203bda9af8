#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "avid/numeric.hpp"
#include "avid/trainer.hpp"

namespace avid {

struct ProbeSettings {
  double split_ratio = 0.8;
  double lr = 1e-2;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
};

struct ProbeReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // on the test split; NaN if a class is absent
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  ProbeSettings settings;
};

/// Linear softmax probe on frozen features: random train/test split, full
/// batch Adam on cross-entropy from zero weights. Labels are 0-based.
/// Throws DegenerateSplit if a class has no training sample.
ProbeReport linear_probe(std::span<const Vector> features, std::span<const int> labels,
                         const ProbeSettings& settings);

struct ClusterScores {
  double purity = 0.0;
  double nmi = 0.0;  // arithmetic-mean normalization, natural log
};

ClusterScores cluster_metrics(std::span<const int> predicted, std::span<const int> truth);

/// Accuracy of `predicted` under the best one-to-one relabeling onto
/// `truth` (Hungarian assignment on the contingency table).
double matched_accuracy(std::span<const int> predicted, std::span<const int> truth);

struct MiningDiagnostics {
  /// Mean over anchors of the faulty share among sourced negatives; empty when
  /// no anchor has a sourced negative.
  std::optional<double> faulty_negative_rate;
  std::vector<std::size_t> occupancy_a;
  std::vector<std::size_t> occupancy_v;
  /// Mean pairwise cosine of entries sharing a bucket, and across buckets,
  /// pooled over both libraries.
  double within_bucket_cosine = 0.0;
  double cross_bucket_cosine = 0.0;
};

MiningDiagnostics mining_diagnostics(const TrainState& state, std::span<const int> classes);

/// Pooled pairwise cosine statistics over a set of libraries.
void bucket_cosines(std::span<const SemanticLibrary* const> libraries, double& within,
                    double& cross);

}  // namespace avid
