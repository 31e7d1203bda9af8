#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "avid/numeric.hpp"

namespace avid {

/// Generator settings for paired two-modality data with hidden classes.
///
/// Each sample draws a latent u = mu_z + noise * N(0, I) around its class
/// mean, then emits audio = P_a u + modality_noise * N(0, I) and
/// visual = P_v u + modality_noise * N(0, I) through fixed random linear maps.
/// Class means have length `separation` and are mutually orthogonal when
/// latent_dim >= n_classes (random directions otherwise).
struct SyntheticConfig {
  std::size_t n_classes = 10;
  std::size_t n_samples = 2000;
  std::size_t dim_a = 32;
  std::size_t dim_v = 32;
  std::size_t latent_dim = 16;
  double separation = 4.0;
  double noise = 1.0;
  double modality_noise = 0.5;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const SyntheticConfig&) const = default;
};

/// Inputs as the training path sees them: no class labels.
struct PairedInputs {
  std::span<const Vector> audio;
  std::span<const Vector> visual;

  std::size_t size() const noexcept { return audio.size(); }
};

struct Dataset {
  SyntheticConfig config;
  std::vector<Vector> audio;
  std::vector<Vector> visual;
  std::vector<int> classes;  // 0-based, evaluation only

  std::size_t size() const noexcept { return classes.size(); }
  PairedInputs inputs() const { return {audio, visual}; }
};

/// Class labels are a shuffled balanced assignment (every class gets
/// floor(N/C) or ceil(N/C) samples). Sample i draws its noise from its own
/// substream, so the output does not depend on generation order.
Dataset generate(const SyntheticConfig& cfg);

/// Fraction of negatives whose class equals the anchor's. Throws
/// EmptyCollection on an empty input.
double faulty_negative_rate(std::span<const int> negative_classes, int anchor_class);

/// Text format: a `dataset v1` header echoing the config, then one
/// tab-separated record per sample (index, class, audio..., visual...).
void save_dataset(const Dataset& data, const std::filesystem::path& path);
void save_dataset(const Dataset& data, std::ostream& out);
Dataset load_dataset(const std::filesystem::path& path);
Dataset load_dataset(std::istream& in);

}  // namespace avid
