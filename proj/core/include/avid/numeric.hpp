#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "avid/error.hpp"

namespace avid {

/// Dense 64-bit vector. Embeddings are vectors whose norm is kept at 1.
using Vector = std::vector<double>;
using Embedding = Vector;
using ConstSpan = std::span<const double>;

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(ConstSpan u, ConstSpan v);
double norm(ConstSpan v);

/// dot(u,v) / (|u| |v|). Throws ZeroNorm if either norm is below 1e-12.
double cosine(ConstSpan u, ConstSpan v);

Vector l2_normalize(ConstSpan v);

/// softmax(scores / tau), evaluated with max subtraction.
Vector softmax_temp(ConstSpan scores, double tau);

/// log(sum(exp(x))) with max subtraction. Empty input is an error.
double log_sum_exp(ConstSpan x);

bool all_finite(ConstSpan v) noexcept;

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

enum class Activation { Identity, Relu };

/// One affine layer y = act(W x + b); W has shape (out, in).
struct Layer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::Identity;

  std::size_t input_dim() const noexcept { return weight.cols(); }
  std::size_t output_dim() const noexcept { return weight.rows(); }
  bool operator==(const Layer&) const = default;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const noexcept;

  /// Same shapes and activations, all coordinates zero.
  MlpParams zeros_like() const;
  bool same_shape(const MlpParams& other) const noexcept;

  bool operator==(const MlpParams&) const = default;
};

/// Builds an MLP over `dims` (dims.size() - 1 layers). Hidden layers use ReLU
/// and the output layer is identity. Weights are He-scaled Gaussians and
/// biases start at zero.
template <class Rng>
MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng);

/// Flat views of every weight and bias block, in layer order.
std::vector<std::span<double>> parameter_blocks(MlpParams& p);
std::vector<std::span<const double>> parameter_blocks(const MlpParams& p);

/// Activations saved by a forward pass; `inputs[l]` is the input to layer l
/// and `pre[l]` its pre-activation.
struct MlpCache {
  std::vector<Vector> inputs;
  std::vector<Vector> pre;
};

struct MlpOutput {
  Vector y;
  MlpCache cache;
};

MlpOutput mlp_forward(const MlpParams& p, ConstSpan x);

/// Output only; skips building a cache.
Vector mlp_apply(const MlpParams& p, ConstSpan x);

struct MlpGradients {
  Vector dx;
  MlpParams dparams;
};

MlpGradients mlp_backward(const MlpParams& p, const MlpCache& cache, ConstSpan dy);

/// Adds the parameter gradient into `grads` (which must have p's shape) and
/// returns dL/dx. Used to accumulate over a batch without reallocation.
Vector mlp_backward_accumulate(const MlpParams& p, const MlpCache& cache, ConstSpan dy,
                               MlpParams& grads);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const MlpParams& p);
};

void adam_step(MlpParams& p, const MlpParams& grads, OptimizerState& state,
               const AdamSettings& settings);

/// Scales every gradient coordinate in place.
void scale(MlpParams& grads, double factor);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Scalar objective that also writes its analytic gradient (same shape as the
/// argument) when `grad` is non-null.
using ParamObjective = std::function<double(const MlpParams& p, MlpParams* grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

/// Central differences over every coordinate of `p`. The relative error of
/// a coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult finite_diff_check(const ParamObjective& f, const MlpParams& p,
                                  double eps = 1e-5, double floor = 1e-6);

/// Same check for a function of a plain vector.
GradCheckResult finite_diff_check(const std::function<double(ConstSpan)>& f, ConstSpan x,
                                  ConstSpan analytic, double eps = 1e-5, double floor = 1e-6);

}  // namespace avid

#include "avid/detail/numeric_impl.hpp"
