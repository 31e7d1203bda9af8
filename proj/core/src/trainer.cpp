#include "avid/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "avid/eval.hpp"
#include "avid/loss.hpp"

namespace avid {

TrainState TrainState::initialize(const TrainConfig& cfg, std::size_t samples, std::size_t dim_a,
                                  std::size_t dim_v) {
  cfg.validate();
  const std::size_t C = cfg.num_libraries;
  const std::size_t d = cfg.embed_dim;

  Rng init_audio = make_rng(cfg.seed, "init/audio");
  Rng init_visual = make_rng(cfg.seed, "init/visual");
  Rng init_cls_a = make_rng(cfg.seed, "init/classifier_a");
  Rng init_cls_v = make_rng(cfg.seed, "init/classifier_v");
  Rng init_lib_a = make_rng(cfg.seed, "init/library_a");
  Rng init_lib_v = make_rng(cfg.seed, "init/library_v");

  TrainState s{
      cfg,
      ModalityEncoder::create(EncoderShape{dim_a, cfg.hidden_dim, d}, init_audio),
      ModalityEncoder::create(EncoderShape{dim_v, cfg.hidden_dim, d}, init_visual),
      ClassifierParams::create(d, C, init_cls_a, cfg.classifier_init),
      ClassifierParams::create(d, C, init_cls_v, cfg.classifier_init),
      SemanticLibrary(C, cfg.library_capacity(), d, cfg.library_mode, cfg.library_momentum),
      SemanticLibrary(C, cfg.library_capacity(), d, cfg.library_mode, cfg.library_momentum),
      PseudoState(samples),
      {},
      {},
      {},
      {},
      0,
      make_rng(cfg.seed, "shuffle"),
      make_rng(cfg.seed, "sampling"),
  };
  s.opt_audio = OptimizerState::for_params(s.audio.query);
  s.opt_visual = OptimizerState::for_params(s.visual.query);
  s.opt_classifier_a = OptimizerState::for_params(s.classifier_a.affine);
  s.opt_classifier_v = OptimizerState::for_params(s.classifier_v.affine);
  s.library_a.fill_random(init_lib_a);
  s.library_v.fill_random(init_lib_v);
  return s;
}

Trainer::Trainer(TrainState state, PairedInputs inputs, std::span<const int> eval_classes)
    : state_(std::move(state)), inputs_(inputs), eval_classes_(eval_classes) {
  if (inputs_.audio.size() != inputs_.visual.size())
    fail(ErrorCode::LengthMismatch, "Trainer: audio and visual counts differ");
  if (inputs_.size() != state_.pseudo.size()) {
    std::ostringstream msg;
    msg << "Trainer: state tracks " << state_.pseudo.size() << " samples, inputs have "
        << inputs_.size();
    fail(ErrorCode::LengthMismatch, msg.str());
  }
  if (!eval_classes_.empty() && eval_classes_.size() != inputs_.size())
    fail(ErrorCode::LengthMismatch, "Trainer: evaluation labels do not match inputs");
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    if (inputs_.audio[i].size() != state_.audio.input_dim() ||
        inputs_.visual[i].size() != state_.visual.input_dim())
      fail(ErrorCode::LengthMismatch, "Trainer: input dimension does not match the encoders");
  }
  // First assignment pass: every sample gets a label before mining starts.
  if (inputs_.size() > 0 && state_.pseudo.label(0) == PseudoState::kUnassigned)
    assign_initial_labels();
}

void Trainer::assign_initial_labels() {
  // Balanced random partition, so that every library is refreshed with real
  // keys during the first epoch.
  const std::size_t N = inputs_.size();
  const std::size_t C = state_.config.num_libraries;
  std::vector<int> labels(N);
  for (std::size_t i = 0; i < N; ++i) labels[i] = static_cast<int>(i % C);
  Rng rng = make_rng(state_.config.seed, "init/labels");
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < N; ++i)
    update_ambiguity(state_.pseudo, i, labels[i], static_cast<int>(state_.epoch));
}

Trainer::Trainer(const TrainConfig& cfg, PairedInputs inputs, std::span<const int> eval_classes)
    : Trainer(TrainState::initialize(cfg, inputs.size(),
                                     inputs.size() ? inputs.audio[0].size() : cfg.data.dim_a,
                                     inputs.size() ? inputs.visual[0].size() : cfg.data.dim_v),
              inputs, eval_classes) {}

bool Trainer::hard_mining_active() const {
  const auto& cfg = state_.config;
  return cfg.hard_mining == HardMining::Ambiguity && state_.epoch >= cfg.warmup_epochs();
}

int Trainer::route_label(std::size_t sample) const {
  // The random-sampling baseline keeps a semantically blind bank: keys are
  // spread over the buckets by sample index instead of by pseudo-label.
  if (state_.config.mining == MiningMode::Random)
    return static_cast<int>(sample % state_.config.num_libraries);
  return state_.pseudo.label(sample);
}

namespace {

NegativeSet negatives_for(const SemanticLibrary& lib, const TrainConfig& cfg, int label, Rng& rng,
                          std::size_t& fallbacks) {
  if (cfg.mining == MiningMode::Random) return random_negatives(lib, cfg.contrastive_size, rng);
  try {
    NegativeSet set = mine_contrastive_set(lib, label);
    for (int b : set.buckets)
      if (b == label) throw std::logic_error("mined negative from the anchor's own library");
    return set;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyNegativePool) throw;
    ++fallbacks;
    return random_negatives(lib, std::min(cfg.contrastive_size, lib.total_size()), rng);
  }
}

/// Faulty share among negatives that originate from a training sample, or
/// nullopt when none does.
std::optional<double> faulty_share(const NegativeSet& set, std::span<const int> classes,
                                   int anchor_class) {
  std::size_t sourced = 0, faulty = 0;
  for (std::int64_t src : set.sources) {
    if (src == kNoSource) continue;
    ++sourced;
    if (classes[static_cast<std::size_t>(src)] == anchor_class) ++faulty;
  }
  if (sourced == 0) return std::nullopt;
  return static_cast<double>(faulty) / static_cast<double>(sourced);
}

std::vector<Embedding> to_vectors(const NegativeSet& set) {
  std::vector<Embedding> out;
  out.reserve(set.size());
  for (auto k : set.keys) out.emplace_back(k.begin(), k.end());
  return out;
}

}  // namespace

StepMetrics Trainer::train_step(std::span<const std::size_t> batch, StepTrace* trace) {
  auto& s = state_;
  const auto& cfg = s.config;
  const std::size_t B = batch.size();
  StepMetrics m;
  m.samples = B;
  if (B == 0) return m;

  // (1) queries through theta, keys through delta
  std::vector<EncodedQuery> qv(B), qa(B);
  std::vector<Embedding> kv(B), ka(B);
  for (std::size_t n = 0; n < B; ++n) {
    const std::size_t i = batch[n];
    qv[n] = encode_query(s.visual, inputs_.visual[i]);
    qa[n] = encode_query(s.audio, inputs_.audio[i]);
    kv[n] = encode_key(s.visual, inputs_.visual[i]);
    ka[n] = encode_key(s.audio, inputs_.audio[i]);
  }

  const auto weights = sample_weights(s.pseudo, batch, static_cast<int>(s.epoch), cfg.alpha,
                                      hard_mining_active());
  if (trace) {
    *trace = StepTrace{};
    trace->weights = weights;
  }

  // (2)-(3) mining and loss; gradients averaged over the batch
  MlpParams grad_visual = s.visual.query.zeros_like();
  MlpParams grad_audio = s.audio.query.zeros_like();
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t n = 0; n < B; ++n) {
    const std::size_t i = batch[n];
    const int label = s.pseudo.label(i);
    const NegativeSet neg_a = negatives_for(s.library_a, cfg, label, s.sampling_rng, m.fallbacks);
    const NegativeSet neg_v = negatives_for(s.library_v, cfg, label, s.sampling_rng, m.fallbacks);

    AvidResult r = avid_loss(qv[n].q, qa[n].q, kv[n], ka[n], neg_a.keys, neg_v.keys, cfg.tau,
                             weights[n]);
    m.loss += r.loss * inv_b;
    m.loss_v2a += r.loss_v2a * inv_b;
    m.loss_a2v += r.loss_a2v * inv_b;
    m.mean_weight += (weights[n] - 1.0) * inv_b;

    for (double& g : r.grad_qv) g *= inv_b;
    for (double& g : r.grad_qa) g *= inv_b;
    accumulate_query_gradient(s.visual, qv[n], r.grad_qv, grad_visual);
    accumulate_query_gradient(s.audio, qa[n], r.grad_qa, grad_audio);

    if (!eval_classes_.empty()) {
      const int z = eval_classes_[i];
      for (const NegativeSet* set : {&neg_a, &neg_v}) {
        if (auto rate = faulty_share(*set, eval_classes_, z)) {
          m.faulty_rate_sum += *rate;
          m.faulty_anchors += 1;
        }
      }
    }
    if (trace) {
      trace->q_v.push_back(qv[n].q);
      trace->q_a.push_back(qa[n].q);
      trace->k_v.push_back(kv[n]);
      trace->k_a.push_back(ka[n]);
      trace->negatives_a.push_back(to_vectors(neg_a));
      trace->negatives_v.push_back(to_vectors(neg_v));
    }
  }

  // (4) optimizer step on the query encoders
  const AdamSettings encoder_opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  adam_step(s.visual.query, grad_visual, s.opt_visual, encoder_opt);
  adam_step(s.audio.query, grad_audio, s.opt_audio, encoder_opt);

  // (5) key encoders follow by momentum
  momentum_update(s.visual.key, s.visual.query, cfg.momentum);
  momentum_update(s.audio.key, s.audio.query, cfg.momentum);

  // (6)-(7) library update and classifier step
  auto update_libraries = [&] {
    for (std::size_t n = 0; n < B; ++n) {
      const std::size_t i = batch[n];
      const int label = route_label(i);
      s.library_v.update(label, kv[n], static_cast<std::int64_t>(i));
      s.library_a.update(label, ka[n], static_cast<std::int64_t>(i));
    }
  };
  auto update_classifiers = [&] {
    // Each query is assigned against the other modality's library, the same
    // library its negatives are mined from.
    std::vector<Embedding> queries_v, queries_a;
    std::vector<Vector> targets_v, targets_a;
    for (std::size_t n = 0; n < B; ++n) {
      try {
        Vector gv = assign_soft(s.library_a, qv[n].q, cfg.tau);
        Vector ga = assign_soft(s.library_v, qa[n].q, cfg.tau);
        queries_v.push_back(qv[n].q);
        targets_v.push_back(std::move(gv));
        queries_a.push_back(qa[n].q);
        targets_a.push_back(std::move(ga));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyBucket) throw;
      }
    }
    balance_assignments(targets_v, cfg.balance_iters);
    balance_assignments(targets_a, cfg.balance_iters);
    const AdamSettings cls_opt{cfg.classifier_lr, 0.9, 0.999, 1e-8, 0.0};
    m.classifier_loss =
        0.5 * (classifier_step(s.classifier_v, s.opt_classifier_v, queries_v, targets_v, cls_opt) +
               classifier_step(s.classifier_a, s.opt_classifier_a, queries_a, targets_a, cls_opt));
  };
  if (cfg.update_order == UpdateOrder::LibraryFirst) {
    update_libraries();
    update_classifiers();
  } else {
    update_classifiers();
    update_libraries();
  }
  return m;
}

std::vector<Embedding> embed_audio(const TrainState& state, PairedInputs inputs) {
  std::vector<Embedding> out;
  out.reserve(inputs.size());
  for (const auto& a : inputs.audio) out.push_back(l2_normalize(mlp_apply(state.audio.query, a)));
  return out;
}

std::vector<Embedding> embed_visual(const TrainState& state, PairedInputs inputs) {
  std::vector<Embedding> out;
  out.reserve(inputs.size());
  for (const auto& v : inputs.visual)
    out.push_back(l2_normalize(mlp_apply(state.visual.query, v)));
  return out;
}

std::vector<int> predict_labels(const TrainState& state, PairedInputs inputs) {
  const auto qa = embed_audio(state, inputs);
  const auto qv = embed_visual(state, inputs);
  std::vector<int> labels(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Vector pv = classify(state.classifier_v, qv[i]);
    const Vector pa = classify(state.classifier_a, qa[i]);
    int best = 0;
    double best_p = -1.0;
    for (std::size_t j = 0; j < pv.size(); ++j) {
      const double p = 0.5 * (pv[j] + pa[j]);
      if (p > best_p) {
        best_p = p;
        best = static_cast<int>(j);
      }
    }
    labels[i] = best;
  }
  return labels;
}

void Trainer::refresh_pseudo_labels() {
  const auto labels = predict_labels(state_, inputs_);
  const int epoch = static_cast<int>(state_.epoch);
  for (std::size_t i = 0; i < labels.size(); ++i)
    update_ambiguity(state_.pseudo, i, labels[i], epoch);
}

double probe_accuracy(const TrainState& state, PairedInputs inputs, std::span<const int> classes) {
  const auto& cfg = state.config;
  ProbeSettings settings{cfg.probe_split, cfg.probe_lr, cfg.probe_steps,
                         derive_seed(cfg.seed, "probe")};
  const auto qv = embed_visual(state, inputs);
  const auto qa = embed_audio(state, inputs);
  const double acc_v = linear_probe(qv, classes, settings).test_accuracy;
  const double acc_a = linear_probe(qa, classes, settings).test_accuracy;
  return 0.5 * (acc_v + acc_a);
}

EpochMetrics Trainer::run_epoch() {
  auto& s = state_;
  const auto& cfg = s.config;
  const std::size_t N = inputs_.size();

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), s.shuffle_rng);

  EpochMetrics em;
  double faulty_sum = 0.0, weight_sum = 0.0;
  std::size_t faulty_n = 0;
  for (std::size_t start = 0; start < N; start += cfg.batch_size) {
    const std::size_t stop = std::min(N, start + cfg.batch_size);
    const std::span<const std::size_t> batch(order.data() + start, stop - start);
    const StepMetrics sm = train_step(batch);
    const double share = static_cast<double>(sm.samples);
    em.loss_v2a += sm.loss_v2a * share;
    em.loss_a2v += sm.loss_a2v * share;
    weight_sum += sm.mean_weight * share;
    faulty_sum += sm.faulty_rate_sum;
    faulty_n += sm.faulty_anchors;
  }
  if (N > 0) {
    em.loss_v2a /= static_cast<double>(N);
    em.loss_a2v /= static_cast<double>(N);
    em.mean_weight = weight_sum / static_cast<double>(N);
  }

  s.epoch += 1;
  em.epoch = s.epoch;
  refresh_pseudo_labels();

  if (!eval_classes_.empty()) {
    if (faulty_n > 0) em.faulty_neg_rate = faulty_sum / static_cast<double>(faulty_n);
    const auto labels = s.pseudo.labels();
    em.classifier_agreement = matched_accuracy(labels, eval_classes_);
    const auto scores = cluster_metrics(labels, eval_classes_);
    em.purity = scores.purity;
    em.nmi = scores.nmi;
    if (cfg.probe_every > 0 && (s.epoch % cfg.probe_every == 0 || s.epoch == cfg.epochs))
      em.probe_acc = probe_accuracy(s, inputs_, eval_classes_);
  }
  return em;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const EpochCallback& on_epoch) {
  cfg.validate();
  Trainer trainer(cfg, data.inputs(), data.classes);
  std::vector<EpochMetrics> history;
  history.reserve(cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochMetrics m = trainer.run_epoch();
    if (on_epoch) on_epoch(m, trainer.state());
    history.push_back(m);
  }
  return TrainResult{std::move(history), std::move(trainer).release()};
}

}  // namespace avid
