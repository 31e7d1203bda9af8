#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "avid/numeric.hpp"
#include "avid/rng.hpp"

namespace avid {

enum class LibraryMode { Queue, Momentum };

/// Source index of entries that did not come from a training sample (the
/// random fill a library starts with).
inline constexpr std::int64_t kNoSource = -1;

struct LibraryEntry {
  Embedding embedding;
  std::int64_t source = kNoSource;
  std::uint64_t counter = 0;  // insertion order; smaller is older
};

/// C buckets of unit-norm key embeddings, one per pseudo-label. Each bucket
/// is ordered oldest-first and never holds more than `capacity` entries.
///
/// Queue mode appends and evicts the oldest entry. Momentum mode keeps one
/// slot per source sample: a sample already present is blended into its slot
/// (moving to the new bucket if its label changed), otherwise it is appended.
class SemanticLibrary {
 public:
  SemanticLibrary(std::size_t buckets, std::size_t capacity, std::size_t dim, LibraryMode mode,
                  double momentum = 0.9);

  /// Fills every bucket to capacity with unit vectors uniform on the sphere.
  void fill_random(Rng& rng);

  /// Stores key `k` of sample `source` under `label` (0-based).
  void update(int label, ConstSpan k, std::int64_t source);

  std::size_t num_buckets() const noexcept { return buckets_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  LibraryMode mode() const noexcept { return mode_; }
  double momentum() const noexcept { return momentum_; }
  std::uint64_t next_counter() const noexcept { return counter_; }

  const std::deque<LibraryEntry>& bucket(std::size_t b) const { return buckets_.at(b); }
  std::size_t total_size() const noexcept;

  /// Line-oriented text dump; `load` reads it back exactly.
  void dump(std::ostream& out) const;
  static SemanticLibrary load(std::istream& in);

  bool operator==(const SemanticLibrary& other) const;

 private:
  void push(std::size_t b, LibraryEntry entry);
  void check_label(int label) const;

  std::vector<std::deque<LibraryEntry>> buckets_;
  std::size_t capacity_;
  std::size_t dim_;
  LibraryMode mode_;
  double momentum_;
  std::uint64_t counter_ = 0;
  std::unordered_map<std::int64_t, std::size_t> slot_bucket_;  // momentum mode only
};

/// Soft assignment of q over the buckets: the share of total
/// exp(cos(q, m) / tau) mass contributed by each bucket's entries.
/// Throws EmptyBucket if any bucket is empty.
Vector assign_soft(const SemanticLibrary& lib, ConstSpan q, double tau);

/// Sinkhorn passes over a batch of soft assignments: alternately rescale
/// bucket totals to batch/C and rows back to 1. Rows stay distributions.
void balance_assignments(std::span<Vector> targets, std::size_t iterations);

/// Negatives handed to the loss: views into library storage plus where each
/// came from. Views stay valid until the library is next modified.
struct NegativeSet {
  std::vector<ConstSpan> keys;
  std::vector<std::int64_t> sources;
  std::vector<int> buckets;

  std::size_t size() const noexcept { return keys.size(); }
};

/// Every entry of every bucket other than `label`. Throws EmptyNegativePool
/// when all of those buckets are empty.
NegativeSet mine_contrastive_set(const SemanticLibrary& lib, int label);

/// `count` entries drawn uniformly without replacement from all buckets,
/// the anchor's own included. Throws InsufficientPool if fewer are stored.
NegativeSet random_negatives(const SemanticLibrary& lib, std::size_t count, Rng& rng);

/// Per-sample pseudo-labels and semantic-ambiguity counters.
class PseudoState {
 public:
  static constexpr int kUnassigned = -1;
  static constexpr int kNever = -1;

  explicit PseudoState(std::size_t samples = 0)
      : labels_(samples, kUnassigned), ambiguity_(samples, 0), last_epoch_(samples, kNever) {}

  std::size_t size() const noexcept { return labels_.size(); }
  int label(std::size_t i) const { return labels_.at(i); }
  std::uint32_t ambiguity(std::size_t i) const { return ambiguity_.at(i); }
  int last_update_epoch(std::size_t i) const { return last_epoch_.at(i); }
  std::span<const int> labels() const noexcept { return labels_; }
  std::span<const std::uint32_t> ambiguities() const noexcept { return ambiguity_; }

  bool operator==(const PseudoState&) const = default;

 private:
  friend void update_ambiguity(PseudoState& state, std::size_t i, int label, int epoch);
  friend PseudoState restore_pseudo_state(std::vector<int> labels,
                                          std::vector<std::uint32_t> ambiguity,
                                          std::vector<int> last_epoch);

  std::vector<int> labels_;
  std::vector<std::uint32_t> ambiguity_;
  std::vector<int> last_epoch_;
};

/// Records sample i's label for `epoch`; the ambiguity counter grows by one
/// whenever the label differs from the previous one. A sample's first label
/// is not a change. Throws DuplicateEpochUpdate on a second call in one epoch.
void update_ambiguity(PseudoState& state, std::size_t i, int label, int epoch);

PseudoState restore_pseudo_state(std::vector<int> labels, std::vector<std::uint32_t> ambiguity,
                                 std::vector<int> last_epoch);

/// Hard-sample weights for a batch: 1 + alpha * s_i / (epoch + 1), rescaled
/// to mean 1. All ones when disabled.
std::vector<double> sample_weights(const PseudoState& state, std::span<const std::size_t> batch,
                                   int epoch, double alpha, bool enabled);

}  // namespace avid
