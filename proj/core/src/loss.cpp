#include "avid/loss.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>

namespace avid {

namespace {

void check_length(ConstSpan q, ConstSpan k) {
  if (q.size() != k.size()) fail(ErrorCode::LengthMismatch, "nce_loss: embedding lengths differ");
}

}  // namespace

NceResult nce_loss(ConstSpan q, ConstSpan k_pos, std::span<const ConstSpan> negatives, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::NonPositiveTemperature, "nce_loss: tau must be > 0");
  check_length(q, k_pos);
  const std::size_t d = q.size();
  const double q_norm = norm(q);
  if (q_norm < 1e-12) fail(ErrorCode::ZeroNorm, "nce_loss: zero-norm query");

  // Candidate 0 is the positive.
  const std::size_t n = negatives.size() + 1;
  auto key = [&](std::size_t j) { return j == 0 ? k_pos : negatives[j - 1]; };
  Vector logits(n), inv_k(n);
  for (std::size_t j = 0; j < n; ++j) {
    const ConstSpan k = key(j);
    check_length(q, k);
    const double qk = kernels::dot(q.data(), k.data(), d);
    const double kk = kernels::dot(k.data(), k.data(), d);
    const double k_norm = std::sqrt(kk);
    if (k_norm < 1e-12) fail(ErrorCode::ZeroNorm, "nce_loss: zero-norm key");
    inv_k[j] = 1.0 / k_norm;
    logits[j] = std::clamp(qk * inv_k[j] / q_norm, -1.0, 1.0) / tau;
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  Vector sigma(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += sigma[j] = std::exp(logits[j] - hi);
  const double lse = hi + std::log(total);

  NceResult out;
  out.loss = lse - logits[0];
  out.positive_prob = std::exp(-out.loss);

  // dL/dq = (1/tau) sum_j (sigma_j - [j == 0]) dcos(q, k_j)/dq,
  // dcos/dq = (k_j/|k_j| - cos_j q/|q|) / |q|.
  out.grad_q.assign(d, 0.0);
  double coef_q = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double c = (sigma[j] / total - (j == 0 ? 1.0 : 0.0)) / tau;
    coef_q += c * (logits[j] * tau) / (q_norm * q_norm);
    const double ck = c * inv_k[j] / q_norm;
    if (ck == 0.0) continue;
    const ConstSpan k = key(j);
    for (std::size_t i = 0; i < d; ++i) out.grad_q[i] += ck * k[i];
  }
  for (std::size_t i = 0; i < d; ++i) out.grad_q[i] -= coef_q * q[i];
  return out;
}

Vector nce_grad_q(ConstSpan q, ConstSpan k_pos, std::span<const ConstSpan> negatives, double tau) {
  return nce_loss(q, k_pos, negatives, tau).grad_q;
}

AvidResult avid_loss(ConstSpan q_v, ConstSpan q_a, ConstSpan k_v, ConstSpan k_a,
                     std::span<const ConstSpan> negatives_a,
                     std::span<const ConstSpan> negatives_v, double tau, double weight) {
  auto v2a = nce_loss(q_v, k_a, negatives_a, tau);
  auto a2v = nce_loss(q_a, k_v, negatives_v, tau);
  AvidResult out;
  out.loss_v2a = v2a.loss;
  out.loss_a2v = a2v.loss;
  out.loss = weight * (v2a.loss + a2v.loss);
  out.grad_qv = std::move(v2a.grad_q);
  out.grad_qa = std::move(a2v.grad_q);
  for (double& g : out.grad_qv) g *= weight;
  for (double& g : out.grad_qa) g *= weight;
  return out;
}

}  // namespace avid
