#pragma once

#include <span>

#include "avid/numeric.hpp"

namespace avid {

/// One NCE term: -log softmax over {k_pos} U negatives of cos(q, .) / tau,
/// evaluated at the positive. Keys are constants; only q receives a gradient.
struct NceResult {
  double loss = 0.0;
  Vector grad_q;
  double positive_prob = 1.0;  // softmax mass on the positive
};

NceResult nce_loss(ConstSpan q, ConstSpan k_pos, std::span<const ConstSpan> negatives, double tau);

/// d nce_loss / d q, including the dependence of cos(q, .) on |q|.
Vector nce_grad_q(ConstSpan q, ConstSpan k_pos, std::span<const ConstSpan> negatives, double tau);

/// Bidirectional objective for one pair: the visual query against the audio
/// key and audio negatives plus the audio query against the visual key and
/// visual negatives, scaled by the sample weight.
struct AvidResult {
  double loss = 0.0;
  double loss_v2a = 0.0;  // unweighted
  double loss_a2v = 0.0;  // unweighted
  Vector grad_qv;
  Vector grad_qa;
};

AvidResult avid_loss(ConstSpan q_v, ConstSpan q_a, ConstSpan k_v, ConstSpan k_a,
                     std::span<const ConstSpan> negatives_a,
                     std::span<const ConstSpan> negatives_v, double tau, double weight = 1.0);

}  // namespace avid
