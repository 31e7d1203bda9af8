#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "avid/config.hpp"
#include "avid/trainer.hpp"

namespace avid::cli {

/// Runs the tool on `args` (without the program name). Returns the exit
/// status; diagnostics go to `err` as single lines.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path manifest, metrics, checkpoint, dataset;
  explicit RunPaths(std::filesystem::path d);
};

/// One JSON line per epoch.
std::string metrics_record(const EpochMetrics& m);

/// Trains into `paths.dir`, writing manifest, metrics, dataset and
/// checkpoint(s). The manifest goes out before the first epoch.
TrainResult train_run(const TrainConfig& cfg, const RunPaths& paths, std::ostream* progress);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::optional<std::uint64_t> seed;  // defaults to the checkpoint's run seed
  std::filesystem::path record;       // appended to
  std::filesystem::path embeddings;   // empty: no dump
};

/// Evaluation record as a single JSON line.
std::string eval_run(const EvalOptions& opt, std::ostream* summary);

/// Keys accepted by `sweep`, in canonical spelling.
const std::vector<std::string>& sweep_keys();
std::string canonical_sweep_key(const std::string& key);

struct SweepRow {
  std::string value;
  std::size_t runs = 0;
  double mean_probe = 0.0;
  double std_probe = 0.0;
  double faulty_neg_rate = 0.0;
  std::string status;  // "ok" or "invalid"
};

std::filesystem::path sweep_run_dir(const std::filesystem::path& root, const std::string& key,
                                    const std::string& value, std::uint64_t seed);

/// Rebuilds the table from the per-run files under `root`.
std::vector<SweepRow> consolidate(const std::filesystem::path& root, const std::string& key,
                                  const std::vector<std::string>& values,
                                  const std::vector<std::uint64_t>& seeds);

void write_sweep_table(std::ostream& out, const std::string& key, const std::vector<SweepRow>& rows);

}  // namespace avid::cli
