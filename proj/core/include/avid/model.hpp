#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "avid/numeric.hpp"
#include "avid/rng.hpp"

namespace avid {

/// Layer widths of one encoder: input -> hidden -> hidden -> embedding.
struct EncoderShape {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 16;

  std::vector<std::size_t> dims() const { return {input_dim, hidden_dim, hidden_dim, embed_dim}; }
};

/// Query network (trained by gradients) and key network (same architecture,
/// moved only by momentum_update) for one modality. The shared head
/// L2-normalizes the MLP output.
struct ModalityEncoder {
  MlpParams query;
  MlpParams key;

  /// Random query parameters; key starts as an exact copy.
  static ModalityEncoder create(const EncoderShape& shape, Rng& rng);

  std::size_t input_dim() const { return query.input_dim(); }
  std::size_t embed_dim() const { return query.output_dim(); }
};

/// Query embedding plus what the backward pass needs.
struct EncodedQuery {
  Embedding q;
  double raw_norm = 0.0;
  MlpCache cache;
};

EncodedQuery encode_query(const ModalityEncoder& enc, ConstSpan x);
Embedding encode_key(const ModalityEncoder& enc, ConstSpan x);

/// Pulls dL/dq back through the normalization: (I - q q^T) dL/dq / |y|.
Vector normalize_backward(const EncodedQuery& eq, ConstSpan grad_q);

/// Backpropagates dL/dq into `grads` (shape of enc.query).
void accumulate_query_gradient(const ModalityEncoder& enc, const EncodedQuery& eq,
                               ConstSpan grad_q, MlpParams& grads);

/// key <- m * key + (1 - m) * query, coordinate-wise. Requires 0 <= m < 1.
void momentum_update(MlpParams& key, const MlpParams& query, double m);

/// Single affine layer mapping an embedding to C logits.
struct ClassifierParams {
  MlpParams affine;

  static ClassifierParams create(std::size_t embed_dim, std::size_t classes, Rng& rng,
                                 double init_scale);
  static ClassifierParams zeros(std::size_t embed_dim, std::size_t classes);

  std::size_t classes() const { return affine.output_dim(); }
  std::size_t embed_dim() const { return affine.input_dim(); }
};

/// p = softmax(W q + b).
Vector classify(const ClassifierParams& clf, ConstSpan q);

/// One Adam step on the mean cross-entropy H(g, p) over the batch. The
/// embeddings are constants here: nothing but the classifier is written.
/// Returns the mean loss evaluated before the step.
double classifier_step(ClassifierParams& clf, OptimizerState& state,
                       std::span<const Embedding> queries, std::span<const Vector> targets,
                       const AdamSettings& settings);

double classifier_step(ClassifierParams& clf, OptimizerState& state, ConstSpan q, ConstSpan g,
                       const AdamSettings& settings);

}  // namespace avid
