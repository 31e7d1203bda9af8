#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "avid/config.hpp"
#include "avid/model.hpp"
#include "avid/semlib.hpp"
#include "avid/synthdata.hpp"

namespace avid {

/// Everything a run mutates. Encoders, classifiers, libraries and pseudo
/// labels are persisted by checkpoints; optimizer moments and generator
/// positions are not.
struct TrainState {
  TrainConfig config;
  ModalityEncoder audio;
  ModalityEncoder visual;
  ClassifierParams classifier_a;  // consumes audio queries
  ClassifierParams classifier_v;  // consumes visual queries
  SemanticLibrary library_a;      // audio keys
  SemanticLibrary library_v;      // visual keys
  PseudoState pseudo;
  OptimizerState opt_audio;
  OptimizerState opt_visual;
  OptimizerState opt_classifier_a;
  OptimizerState opt_classifier_v;
  std::size_t epoch = 0;  // completed epochs
  Rng shuffle_rng;
  Rng sampling_rng;

  /// Fresh state for `samples` training pairs of the given input dims.
  static TrainState initialize(const TrainConfig& cfg, std::size_t samples, std::size_t dim_a,
                               std::size_t dim_v);
};

struct StepMetrics {
  std::size_t samples = 0;
  double loss = 0.0;      // mean weighted objective
  double loss_v2a = 0.0;  // mean unweighted visual-to-audio term
  double loss_a2v = 0.0;
  double classifier_loss = 0.0;
  double mean_weight = 1.0;
  // faulty-negative bookkeeping (only with ground truth attached)
  double faulty_rate_sum = 0.0;
  std::size_t faulty_anchors = 0;
  std::size_t fallbacks = 0;  // samples that fell back to random negatives
};

/// Intermediate values of one step, captured on request for replay tests.
struct StepTrace {
  std::vector<Embedding> q_v, q_a, k_v, k_a;
  std::vector<std::vector<Embedding>> negatives_a, negatives_v;
  std::vector<double> weights;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based index of the finished epoch
  double loss_v2a = 0.0;
  double loss_a2v = 0.0;
  double mean_weight = 1.0;
  std::optional<double> faulty_neg_rate;
  std::optional<double> classifier_agreement;
  std::optional<double> purity;
  std::optional<double> nmi;
  std::optional<double> probe_acc;
};

/// Drives one run over a fixed set of pairs. Class labels, when attached,
/// are read only by metric code; the training path never sees them.
class Trainer {
 public:
  Trainer(TrainState state, PairedInputs inputs, std::span<const int> eval_classes = {});
  Trainer(const TrainConfig& cfg, PairedInputs inputs, std::span<const int> eval_classes = {});

  StepMetrics train_step(std::span<const std::size_t> batch, StepTrace* trace = nullptr);

  /// End-of-epoch relabeling: y_i = argmax of the two classifiers' averaged
  /// probabilities on fresh queries (lowest index wins ties), with the
  /// ambiguity counters updated.
  void refresh_pseudo_labels();

  EpochMetrics run_epoch();

  bool hard_mining_active() const;

  const TrainState& state() const noexcept { return state_; }
  TrainState& state() noexcept { return state_; }
  TrainState release() && { return std::move(state_); }

 private:
  int route_label(std::size_t sample) const;
  void assign_initial_labels();

  TrainState state_;
  PairedInputs inputs_;
  std::span<const int> eval_classes_;
};

/// Query embeddings of every pair under the current query encoders.
std::vector<Embedding> embed_audio(const TrainState& state, PairedInputs inputs);
std::vector<Embedding> embed_visual(const TrainState& state, PairedInputs inputs);

/// Pseudo-label predictions of the current classifiers (no state change).
std::vector<int> predict_labels(const TrainState& state, PairedInputs inputs);

struct TrainResult {
  std::vector<EpochMetrics> history;
  TrainState state;
};

using EpochCallback = std::function<void(const EpochMetrics&, const TrainState&)>;

/// Full run on a generated dataset; `on_epoch` sees each epoch's metrics.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {});

/// Probe accuracy (mean of the audio and visual linear probes) under the
/// run's probe settings.
double probe_accuracy(const TrainState& state, PairedInputs inputs, std::span<const int> classes);

}  // namespace avid
