#include "avid/model.hpp"

#include <cmath>
#include <sstream>

namespace avid {

ModalityEncoder ModalityEncoder::create(const EncoderShape& shape, Rng& rng) {
  const auto dims = shape.dims();
  ModalityEncoder enc;
  enc.query = make_mlp(std::span<const std::size_t>(dims), rng);
  enc.key = enc.query;
  return enc;
}

EncodedQuery encode_query(const ModalityEncoder& enc, ConstSpan x) {
  auto out = mlp_forward(enc.query, x);
  EncodedQuery eq;
  eq.raw_norm = norm(out.y);
  eq.q = l2_normalize(out.y);
  eq.cache = std::move(out.cache);
  return eq;
}

Embedding encode_key(const ModalityEncoder& enc, ConstSpan x) {
  return l2_normalize(mlp_apply(enc.key, x));
}

Vector normalize_backward(const EncodedQuery& eq, ConstSpan grad_q) {
  if (grad_q.size() != eq.q.size()) fail(ErrorCode::LengthMismatch, "normalize_backward");
  const double qg = dot(eq.q, grad_q);
  Vector dy(grad_q.size());
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = (grad_q[i] - qg * eq.q[i]) / eq.raw_norm;
  return dy;
}

void accumulate_query_gradient(const ModalityEncoder& enc, const EncodedQuery& eq,
                               ConstSpan grad_q, MlpParams& grads) {
  const Vector dy = normalize_backward(eq, grad_q);
  mlp_backward_accumulate(enc.query, eq.cache, dy, grads);
}

void momentum_update(MlpParams& key, const MlpParams& query, double m) {
  if (!(m >= 0.0 && m < 1.0)) {
    std::ostringstream msg;
    msg << "momentum_update: m=" << m << " outside [0,1)";
    fail(ErrorCode::MomentumOutOfRange, msg.str());
  }
  if (!key.same_shape(query)) fail(ErrorCode::ShapeMismatch, "momentum_update: shapes differ");
  auto dst = parameter_blocks(key);
  const auto src = parameter_blocks(query);
  for (std::size_t b = 0; b < dst.size(); ++b)
    for (std::size_t i = 0; i < dst[b].size(); ++i)
      dst[b][i] = m * dst[b][i] + (1.0 - m) * src[b][i];
}

ClassifierParams ClassifierParams::create(std::size_t embed_dim, std::size_t classes, Rng& rng,
                                          double init_scale) {
  ClassifierParams clf = zeros(embed_dim, classes);
  std::normal_distribution<double> normal(0.0, init_scale);
  for (double& w : clf.affine.layers[0].weight.values()) w = normal(rng);
  return clf;
}

ClassifierParams ClassifierParams::zeros(std::size_t embed_dim, std::size_t classes) {
  ClassifierParams clf;
  clf.affine.layers.push_back(
      Layer{Matrix(classes, embed_dim), Vector(classes, 0.0), Activation::Identity});
  return clf;
}

Vector classify(const ClassifierParams& clf, ConstSpan q) {
  return softmax_temp(mlp_apply(clf.affine, q), 1.0);
}

double classifier_step(ClassifierParams& clf, OptimizerState& state,
                       std::span<const Embedding> queries, std::span<const Vector> targets,
                       const AdamSettings& settings) {
  if (queries.size() != targets.size())
    fail(ErrorCode::LengthMismatch, "classifier_step: queries and targets differ in count");
  if (queries.empty()) return 0.0;

  const std::size_t classes = clf.classes();
  MlpParams grads = clf.affine.zeros_like();
  Layer& g = grads.layers[0];
  double loss = 0.0;
  for (std::size_t n = 0; n < queries.size(); ++n) {
    const auto& q = queries[n];
    const auto& target = targets[n];
    if (target.size() != classes) fail(ErrorCode::LengthMismatch, "classifier_step: target length");
    double total = 0.0;
    for (double t : target) total += t;
    if (std::abs(total - 1.0) > 1e-6)
      fail(ErrorCode::InvalidTarget, "classifier_step: target does not sum to 1");

    const Vector p = classify(clf, q);
    for (std::size_t j = 0; j < classes; ++j) {
      if (target[j] > 0.0) loss -= target[j] * std::log(p[j]);
      const double d = p[j] - target[j];
      g.bias[j] += d;
      auto row = g.weight.row(j);
      for (std::size_t c = 0; c < q.size(); ++c) row[c] += d * q[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(queries.size());
  scale(grads, inv);
  adam_step(clf.affine, grads, state, settings);
  return loss * inv;
}

double classifier_step(ClassifierParams& clf, OptimizerState& state, ConstSpan q, ConstSpan g,
                       const AdamSettings& settings) {
  const Embedding qs[] = {Embedding(q.begin(), q.end())};
  const Vector gs[] = {Vector(g.begin(), g.end())};
  return classifier_step(clf, state, qs, gs, settings);
}

}  // namespace avid
