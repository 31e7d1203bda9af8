#pragma once

#include <filesystem>
#include <iosfwd>

#include "avid/trainer.hpp"

namespace avid {

/// Versioned text checkpoint: config echo, epoch counter, every layer of the
/// four encoders and two classifiers, both libraries and the pseudo-label
/// state. Doubles are written in shortest round-trip form, so save/load is
/// exact. Optimizer moments are not stored; a loaded state restarts them.
void save_checkpoint(const TrainState& state, std::ostream& out);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

TrainState load_checkpoint(std::istream& in);
TrainState load_checkpoint(const std::filesystem::path& path);

void write_mlp(std::ostream& out, std::string_view name, const MlpParams& p);
MlpParams read_mlp(std::istream& in, std::string_view name);

}  // namespace avid
