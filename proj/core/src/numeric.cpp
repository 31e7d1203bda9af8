#include "avid/numeric.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace avid {

namespace {

constexpr double kMinNorm = 1e-12;

void require_same_length(ConstSpan u, ConstSpan v, const char* where) {
  if (u.size() != v.size()) {
    std::ostringstream msg;
    msg << where << ": length mismatch (" << u.size() << " vs " << v.size() << ")";
    fail(ErrorCode::LengthMismatch, msg.str());
  }
}

}  // namespace

double dot(ConstSpan u, ConstSpan v) {
  require_same_length(u, v, "dot");
  return kernels::dot(u.data(), v.data(), u.size());
}

double norm(ConstSpan v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(ConstSpan u, ConstSpan v) {
  require_same_length(u, v, "cosine");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kMinNorm || nv < kMinNorm) fail(ErrorCode::ZeroNorm, "cosine: zero-norm argument");
  return std::clamp(uv / (nu * nv), -1.0, 1.0);
}

Vector l2_normalize(ConstSpan v) {
  const double n = norm(v);
  if (n < kMinNorm) fail(ErrorCode::ZeroNorm, "l2_normalize: zero-norm argument");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Vector softmax_temp(ConstSpan scores, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::NonPositiveTemperature, "softmax_temp: tau must be > 0");
  if (scores.empty()) return {};
  const double hi = *std::max_element(scores.begin(), scores.end());
  Vector out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - hi) / tau);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

double log_sum_exp(ConstSpan x) {
  if (x.empty()) fail(ErrorCode::EmptyCollection, "log_sum_exp: empty input");
  const double hi = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += std::exp(v - hi);
  return hi + std::log(total);
}

bool all_finite(ConstSpan v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) fail(ErrorCode::ShapeMismatch, "MlpParams: no layers");
  return layers.front().input_dim();
}

std::size_t MlpParams::output_dim() const {
  if (layers.empty()) fail(ErrorCode::ShapeMismatch, "MlpParams: no layers");
  return layers.back().output_dim();
}

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back(
        Layer{Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0), l.activation});
  }
  return z;
}

bool MlpParams::same_shape(const MlpParams& other) const noexcept {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size() || a.activation != b.activation)
      return false;
  }
  return true;
}

std::vector<std::span<double>> parameter_blocks(MlpParams& p) {
  std::vector<std::span<double>> blocks;
  blocks.reserve(2 * p.layers.size());
  for (auto& l : p.layers) {
    blocks.push_back(l.weight.values());
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

std::vector<std::span<const double>> parameter_blocks(const MlpParams& p) {
  std::vector<std::span<const double>> blocks;
  blocks.reserve(2 * p.layers.size());
  for (const auto& l : p.layers) {
    blocks.push_back(l.weight.values());
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

namespace {

void affine(const Layer& layer, ConstSpan x, Vector& out) {
  const std::size_t rows = layer.weight.rows();
  const std::size_t cols = layer.weight.cols();
  out.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = layer.weight.row(r).data();
    out[r] = layer.bias[r] + kernels::dot(w, x.data(), cols);
  }
}

void activate(Activation act, Vector& v) {
  if (act == Activation::Relu)
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void check_input(const MlpParams& p, ConstSpan x) {
  if (p.layers.empty()) fail(ErrorCode::ShapeMismatch, "mlp_forward: no layers");
  if (x.size() != p.input_dim()) {
    std::ostringstream msg;
    msg << "mlp_forward: input length " << x.size() << ", expected " << p.input_dim();
    fail(ErrorCode::LengthMismatch, msg.str());
  }
}

}  // namespace

MlpOutput mlp_forward(const MlpParams& p, ConstSpan x) {
  check_input(p, x);
  MlpOutput out;
  out.cache.inputs.reserve(p.layers.size());
  out.cache.pre.reserve(p.layers.size());
  Vector current(x.begin(), x.end());
  for (const auto& layer : p.layers) {
    Vector pre;
    affine(layer, current, pre);
    out.cache.inputs.push_back(std::move(current));
    current = pre;
    activate(layer.activation, current);
    out.cache.pre.push_back(std::move(pre));
  }
  out.y = std::move(current);
  return out;
}

Vector mlp_apply(const MlpParams& p, ConstSpan x) {
  check_input(p, x);
  Vector current(x.begin(), x.end());
  Vector next;
  for (const auto& layer : p.layers) {
    affine(layer, current, next);
    activate(layer.activation, next);
    std::swap(current, next);
  }
  return current;
}

Vector mlp_backward_accumulate(const MlpParams& p, const MlpCache& cache, ConstSpan dy,
                               MlpParams& grads) {
  const std::size_t n = p.layers.size();
  if (cache.inputs.size() != n || cache.pre.size() != n)
    fail(ErrorCode::StaleCache, "mlp_backward: cache has wrong layer count");
  for (std::size_t l = 0; l < n; ++l) {
    if (cache.inputs[l].size() != p.layers[l].input_dim() ||
        cache.pre[l].size() != p.layers[l].output_dim())
      fail(ErrorCode::StaleCache, "mlp_backward: cache does not match parameters");
  }
  if (!grads.same_shape(p)) fail(ErrorCode::ShapeMismatch, "mlp_backward: gradient shape");
  if (dy.size() != p.output_dim()) fail(ErrorCode::LengthMismatch, "mlp_backward: dy length");

  Vector delta(dy.begin(), dy.end());
  for (std::size_t li = n; li-- > 0;) {
    const Layer& layer = p.layers[li];
    Layer& g = grads.layers[li];
    if (layer.activation == Activation::Relu) {
      for (std::size_t r = 0; r < delta.size(); ++r)
        if (!(cache.pre[li][r] > 0.0)) delta[r] = 0.0;
    }
    const Vector& in = cache.inputs[li];
    const std::size_t rows = layer.weight.rows();
    const std::size_t cols = layer.weight.cols();
    Vector dx(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = delta[r];
      g.bias[r] += d;
      if (d == 0.0) continue;
      double* gw = g.weight.row(r).data();
      const double* w = layer.weight.row(r).data();
      for (std::size_t c = 0; c < cols; ++c) {
        gw[c] += d * in[c];
        dx[c] += d * w[c];
      }
    }
    delta = std::move(dx);
  }
  return delta;
}

MlpGradients mlp_backward(const MlpParams& p, const MlpCache& cache, ConstSpan dy) {
  MlpGradients out;
  out.dparams = p.zeros_like();
  out.dx = mlp_backward_accumulate(p, cache, dy, out.dparams);
  return out;
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::for_params(const MlpParams& p) {
  return OptimizerState{p.zeros_like(), p.zeros_like(), 0};
}

void adam_step(MlpParams& p, const MlpParams& grads, OptimizerState& state,
               const AdamSettings& s) {
  if (!p.same_shape(grads) || !p.same_shape(state.first_moment) ||
      !p.same_shape(state.second_moment))
    fail(ErrorCode::ShapeMismatch, "adam_step: parameter, gradient and state shapes differ");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);

  auto params = parameter_blocks(p);
  auto g = parameter_blocks(grads);
  auto m = parameter_blocks(state.first_moment);
  auto v = parameter_blocks(state.second_moment);
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double gi = g[b][i];
      m[b][i] = s.beta1 * m[b][i] + (1.0 - s.beta1) * gi;
      v[b][i] = s.beta2 * v[b][i] + (1.0 - s.beta2) * gi * gi;
      const double mhat = m[b][i] / c1;
      const double vhat = v[b][i] / c2;
      params[b][i] -= s.lr * (mhat / (std::sqrt(vhat) + s.eps) + s.weight_decay * params[b][i]);
    }
  }
}

void scale(MlpParams& grads, double factor) {
  for (auto block : parameter_blocks(grads))
    for (double& x : block) x *= factor;
}

// ---------------------------------------------------------------------------

namespace {

void record(GradCheckResult& r, double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  r.max_abs_error = std::max(r.max_abs_error, diff);
  r.max_relative_error = std::max(r.max_relative_error, diff / denom);
  r.coordinates += 1;
}

}  // namespace

GradCheckResult finite_diff_check(const ParamObjective& f, const MlpParams& p, double eps,
                                  double floor) {
  MlpParams analytic = p.zeros_like();
  f(p, &analytic);
  const auto analytic_blocks = parameter_blocks(std::as_const(analytic));

  MlpParams probe = p;
  auto blocks = parameter_blocks(probe);
  GradCheckResult result;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double saved = blocks[b][i];
      blocks[b][i] = saved + eps;
      const double up = f(probe, nullptr);
      blocks[b][i] = saved - eps;
      const double down = f(probe, nullptr);
      blocks[b][i] = saved;
      record(result, analytic_blocks[b][i], (up - down) / (2.0 * eps), floor);
    }
  }
  return result;
}

GradCheckResult finite_diff_check(const std::function<double(ConstSpan)>& f, ConstSpan x,
                                  ConstSpan analytic, double eps, double floor) {
  if (x.size() != analytic.size())
    fail(ErrorCode::LengthMismatch, "finite_diff_check: gradient length");
  Vector probe(x.begin(), x.end());
  GradCheckResult result;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(probe);
    probe[i] = saved - eps;
    const double down = f(probe);
    probe[i] = saved;
    record(result, analytic[i], (up - down) / (2.0 * eps), floor);
  }
  return result;
}

}  // namespace avid
