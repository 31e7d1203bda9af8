#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avid/semlib.hpp"
#include "avid/synthdata.hpp"

namespace avid {

enum class MiningMode { Random, Acsm };
enum class HardMining { Off, Ambiguity };
enum class UpdateOrder { LibraryFirst, ClassifierFirst };

/// Every knob of a training run. Defaults are the desk-scale settings; the
/// flat key names accepted by `set_value` are listed by `config_entries`.
struct TrainConfig {
  // objective
  double tau = 0.07;
  double momentum = 0.9;

  // libraries and mining
  std::size_t num_libraries = 10;      // key "C"
  std::size_t contrastive_size = 504;  // key "K"; must be divisible by C - 1
  MiningMode mining = MiningMode::Acsm;
  LibraryMode library_mode = LibraryMode::Queue;
  double library_momentum = 0.9;
  UpdateOrder update_order = UpdateOrder::LibraryFirst;

  // hard-sample mining
  HardMining hard_mining = HardMining::Off;
  double warmup_fraction = 0.5;
  double alpha = 1.0;

  // optimization
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double classifier_lr = 1e-2;
  double classifier_init = 0.1;
  std::size_t balance_iters = 3;

  // architecture
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 16;

  // evaluation during training
  std::size_t probe_every = 10;
  std::size_t probe_steps = 500;
  double probe_lr = 1e-2;
  double probe_split = 0.8;

  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t seed = 0;

  /// Generator settings; `data.seed` is ignored and derived from `seed`.
  SyntheticConfig data;

  /// Throws InvalidConfig naming the offending key.
  void validate() const;

  std::size_t library_capacity() const { return contrastive_size / (num_libraries - 1); }
  std::size_t warmup_epochs() const;
  SyntheticConfig data_config() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Sets one key. Hyphens in `key` are read as underscores. Throws
/// InvalidConfig for unknown keys or unparsable values.
void set_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// All keys with their current values, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);

/// key=value lines; blank lines and '#' comments are skipped, as are keys in
/// the `run.` namespace (manifest metadata), so a manifest is a valid config.
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

void write_config(std::ostream& out, const TrainConfig& cfg);

std::string_view to_string(MiningMode m);
std::string_view to_string(HardMining h);
std::string_view to_string(LibraryMode m);
std::string_view to_string(UpdateOrder o);

}  // namespace avid
