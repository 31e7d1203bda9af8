#pragma once

#include <cmath>
#include <random>

namespace avid {

template <class Rng>
MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) fail(ErrorCode::ShapeMismatch, "make_mlp: need at least two dims");
  MlpParams p;
  p.layers.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = l + 2 == dims.size();
    Layer layer{Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1], 0.0),
                last ? Activation::Identity : Activation::Relu};
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(dims[l])));
    for (double& w : layer.weight.values()) w = normal(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace avid
