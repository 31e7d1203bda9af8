#include "avid/semlib.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kernels.hpp"
#include "text_io.hpp"

namespace avid {

SemanticLibrary::SemanticLibrary(std::size_t buckets, std::size_t capacity, std::size_t dim,
                                 LibraryMode mode, double momentum)
    : buckets_(buckets), capacity_(capacity), dim_(dim), mode_(mode), momentum_(momentum) {
  if (buckets == 0 || capacity == 0 || dim == 0)
    fail(ErrorCode::InvalidConfig, "SemanticLibrary: buckets, capacity and dim must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    fail(ErrorCode::MomentumOutOfRange, "SemanticLibrary: momentum outside [0,1)");
}

void SemanticLibrary::fill_random(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    while (buckets_[b].size() < capacity_) {
      Vector v(dim_);
      double n = 0.0;
      do {
        for (double& x : v) x = normal(rng);
        n = norm(v);
      } while (n < 1e-12);
      for (double& x : v) x /= n;
      push(b, LibraryEntry{std::move(v), kNoSource, 0});
    }
  }
}

void SemanticLibrary::check_label(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= buckets_.size()) {
    std::ostringstream msg;
    msg << "label " << label << " outside [0, " << buckets_.size() << ")";
    fail(ErrorCode::InvalidLabel, msg.str());
  }
}

void SemanticLibrary::push(std::size_t b, LibraryEntry entry) {
  entry.counter = counter_++;
  auto& bucket = buckets_[b];
  if (mode_ == LibraryMode::Momentum && entry.source != kNoSource)
    slot_bucket_[entry.source] = b;
  bucket.push_back(std::move(entry));
  while (bucket.size() > capacity_) {
    const auto evicted = bucket.front().source;
    bucket.pop_front();
    if (mode_ == LibraryMode::Momentum && evicted != kNoSource) {
      auto it = slot_bucket_.find(evicted);
      if (it != slot_bucket_.end() && it->second == b) slot_bucket_.erase(it);
    }
  }
}

void SemanticLibrary::update(int label, ConstSpan k, std::int64_t source) {
  check_label(label);
  if (k.size() != dim_) fail(ErrorCode::LengthMismatch, "SemanticLibrary::update: key length");
  const auto b = static_cast<std::size_t>(label);

  if (mode_ == LibraryMode::Momentum && source != kNoSource) {
    auto it = slot_bucket_.find(source);
    if (it != slot_bucket_.end()) {
      auto& old_bucket = buckets_[it->second];
      auto pos = std::find_if(old_bucket.begin(), old_bucket.end(),
                              [&](const LibraryEntry& e) { return e.source == source; });
      Vector blended(dim_);
      for (std::size_t i = 0; i < dim_; ++i)
        blended[i] = momentum_ * pos->embedding[i] + (1.0 - momentum_) * k[i];
      blended = l2_normalize(blended);
      if (it->second == b) {
        pos->embedding = std::move(blended);
        return;
      }
      old_bucket.erase(pos);
      slot_bucket_.erase(it);
      push(b, LibraryEntry{std::move(blended), source, 0});
      return;
    }
  }
  push(b, LibraryEntry{Embedding(k.begin(), k.end()), source, 0});
}

std::size_t SemanticLibrary::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& b : buckets_) n += b.size();
  return n;
}

void SemanticLibrary::dump(std::ostream& out) const {
  out << "library v1 buckets=" << buckets_.size() << " capacity=" << capacity_
      << " dim=" << dim_ << " mode=" << (mode_ == LibraryMode::Queue ? "queue" : "momentum")
      << " momentum=";
  textio::write_double(out, momentum_);
  out << " counter=" << counter_ << '\n';
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    out << "bucket " << b << " size=" << buckets_[b].size() << '\n';
    for (const auto& e : buckets_[b]) {
      out << e.source << ' ' << e.counter;
      for (double x : e.embedding) {
        out << ' ';
        textio::write_double(out, x);
      }
      out << '\n';
    }
  }
}

SemanticLibrary SemanticLibrary::load(std::istream& in) {
  using namespace textio;
  const std::string header = next_line(in, "library header");
  const auto tok = split_ws(header);
  if (tok.size() != 8 || tok[0] != "library" || tok[1] != "v1")
    fail(ErrorCode::Parse, "bad library header: " + header);
  const auto buckets = parse_int<std::size_t>(field(tok[2], "buckets"));
  const auto capacity = parse_int<std::size_t>(field(tok[3], "capacity"));
  const auto dim = parse_int<std::size_t>(field(tok[4], "dim"));
  const auto mode_name = field(tok[5], "mode");
  LibraryMode mode;
  if (mode_name == "queue") mode = LibraryMode::Queue;
  else if (mode_name == "momentum") mode = LibraryMode::Momentum;
  else fail(ErrorCode::Parse, "bad library mode: " + std::string(mode_name));
  SemanticLibrary lib(buckets, capacity, dim, mode, parse_double(field(tok[6], "momentum")));
  lib.counter_ = parse_int<std::uint64_t>(field(tok[7], "counter"));

  for (std::size_t b = 0; b < buckets; ++b) {
    const std::string line = next_line(in, "bucket header");
    const auto bt = split_ws(line);
    if (bt.size() != 3 || bt[0] != "bucket" || parse_int<std::size_t>(bt[1]) != b)
      fail(ErrorCode::Parse, "bad bucket header: " + line);
    const auto size = parse_int<std::size_t>(field(bt[2], "size"));
    if (size > capacity) fail(ErrorCode::Parse, "bucket exceeds capacity");
    for (std::size_t e = 0; e < size; ++e) {
      const std::string row = next_line(in, "library entry");
      const auto et = split_ws(row);
      if (et.size() != dim + 2) fail(ErrorCode::Parse, "bad library entry: " + row);
      LibraryEntry entry;
      entry.source = parse_int<std::int64_t>(et[0]);
      entry.counter = parse_int<std::uint64_t>(et[1]);
      entry.embedding.reserve(dim);
      for (std::size_t i = 0; i < dim; ++i) entry.embedding.push_back(parse_double(et[i + 2]));
      if (mode == LibraryMode::Momentum && entry.source != kNoSource)
        lib.slot_bucket_[entry.source] = b;
      lib.buckets_[b].push_back(std::move(entry));
    }
  }
  return lib;
}

bool SemanticLibrary::operator==(const SemanticLibrary& other) const {
  if (capacity_ != other.capacity_ || dim_ != other.dim_ || mode_ != other.mode_ ||
      momentum_ != other.momentum_ || counter_ != other.counter_ ||
      buckets_.size() != other.buckets_.size())
    return false;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    const auto& x = buckets_[b];
    const auto& y = other.buckets_[b];
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].source != y[i].source || x[i].counter != y[i].counter ||
          x[i].embedding != y[i].embedding)
        return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

Vector assign_soft(const SemanticLibrary& lib, ConstSpan q, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::NonPositiveTemperature, "assign_soft: tau must be > 0");
  const std::size_t C = lib.num_buckets();
  const double q_norm = norm(q);
  if (q_norm < 1e-12) fail(ErrorCode::ZeroNorm, "assign_soft: zero-norm query");
  std::vector<Vector> scaled(C);
  double hi = -INFINITY;
  for (std::size_t b = 0; b < C; ++b) {
    const auto& bucket = lib.bucket(b);
    if (bucket.empty()) {
      std::ostringstream msg;
      msg << "assign_soft: bucket " << b << " is empty";
      fail(ErrorCode::EmptyBucket, msg.str());
    }
    scaled[b].reserve(bucket.size());
    for (const auto& e : bucket) {
      if (e.embedding.size() != q.size()) fail(ErrorCode::LengthMismatch, "assign_soft: length");
      const double* k = e.embedding.data();
      const double qk = kernels::dot(q.data(), k, q.size());
      const double kk = kernels::dot(k, k, q.size());
      if (kk < 1e-24) fail(ErrorCode::ZeroNorm, "assign_soft: zero-norm entry");
      const double s = std::clamp(qk / (q_norm * std::sqrt(kk)), -1.0, 1.0) / tau;
      scaled[b].push_back(s);
      hi = std::max(hi, s);
    }
  }
  Vector g(C, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < C; ++b) {
    for (double s : scaled[b]) g[b] += std::exp(s - hi);
    total += g[b];
  }
  for (double& x : g) x /= total;
  return g;
}

void balance_assignments(std::span<Vector> targets, std::size_t iterations) {
  if (targets.empty() || iterations == 0) return;
  const std::size_t C = targets[0].size();
  for (const auto& t : targets)
    if (t.size() != C) fail(ErrorCode::LengthMismatch, "balance_assignments: ragged targets");
  const double want = static_cast<double>(targets.size()) / static_cast<double>(C);
  Vector col(C);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(col.begin(), col.end(), 0.0);
    for (const auto& t : targets)
      for (std::size_t j = 0; j < C; ++j) col[j] += t[j];
    for (auto& t : targets) {
      double row = 0.0;
      for (std::size_t j = 0; j < C; ++j) {
        if (col[j] > 0.0) t[j] *= want / col[j];
        row += t[j];
      }
      for (double& v : t) v /= row;
    }
  }
}

NegativeSet mine_contrastive_set(const SemanticLibrary& lib, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= lib.num_buckets())
    fail(ErrorCode::InvalidLabel, "mine_contrastive_set: label out of range");
  NegativeSet out;
  const std::size_t reserve = lib.capacity() * (lib.num_buckets() - 1);
  out.keys.reserve(reserve);
  out.sources.reserve(reserve);
  out.buckets.reserve(reserve);
  for (std::size_t b = 0; b < lib.num_buckets(); ++b) {
    if (static_cast<int>(b) == label) continue;
    for (const auto& e : lib.bucket(b)) {
      out.keys.emplace_back(e.embedding);
      out.sources.push_back(e.source);
      out.buckets.push_back(static_cast<int>(b));
    }
  }
  if (out.keys.empty())
    fail(ErrorCode::EmptyNegativePool, "mine_contrastive_set: every other bucket is empty");
  return out;
}

NegativeSet random_negatives(const SemanticLibrary& lib, std::size_t count, Rng& rng) {
  const std::size_t total = lib.total_size();
  if (total < count) {
    std::ostringstream msg;
    msg << "random_negatives: need " << count << " entries, library holds " << total;
    fail(ErrorCode::InsufficientPool, msg.str());
  }
  std::vector<std::size_t> flat(total);
  std::iota(flat.begin(), flat.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::sample(flat.begin(), flat.end(), std::back_inserter(picked), count, rng);

  NegativeSet out;
  out.keys.reserve(count);
  out.sources.reserve(count);
  out.buckets.reserve(count);
  // picked is ascending, so walk buckets once
  std::size_t b = 0, offset = 0;
  for (std::size_t idx : picked) {
    while (idx >= offset + lib.bucket(b).size()) offset += lib.bucket(b++).size();
    const auto& e = lib.bucket(b)[idx - offset];
    out.keys.emplace_back(e.embedding);
    out.sources.push_back(e.source);
    out.buckets.push_back(static_cast<int>(b));
  }
  return out;
}

// ---------------------------------------------------------------------------

void update_ambiguity(PseudoState& state, std::size_t i, int label, int epoch) {
  if (i >= state.size()) fail(ErrorCode::InvalidLabel, "update_ambiguity: sample index out of range");
  if (label < 0) fail(ErrorCode::InvalidLabel, "update_ambiguity: negative label");
  if (state.last_epoch_[i] == epoch) {
    std::ostringstream msg;
    msg << "update_ambiguity: sample " << i << " already updated in epoch " << epoch;
    fail(ErrorCode::DuplicateEpochUpdate, msg.str());
  }
  const int previous = state.labels_[i];
  if (previous != PseudoState::kUnassigned && previous != label) state.ambiguity_[i] += 1;
  state.labels_[i] = label;
  state.last_epoch_[i] = epoch;
}

PseudoState restore_pseudo_state(std::vector<int> labels, std::vector<std::uint32_t> ambiguity,
                                 std::vector<int> last_epoch) {
  if (labels.size() != ambiguity.size() || labels.size() != last_epoch.size())
    fail(ErrorCode::LengthMismatch, "restore_pseudo_state: column lengths differ");
  PseudoState s;
  s.labels_ = std::move(labels);
  s.ambiguity_ = std::move(ambiguity);
  s.last_epoch_ = std::move(last_epoch);
  return s;
}

std::vector<double> sample_weights(const PseudoState& state, std::span<const std::size_t> batch,
                                   int epoch, double alpha, bool enabled) {
  std::vector<double> w(batch.size(), 1.0);
  if (!enabled || batch.empty()) return w;
  const double denom = static_cast<double>(epoch + 1);
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    w[n] = 1.0 + alpha * static_cast<double>(state.ambiguity(batch[n])) / denom;
    total += w[n];
  }
  const double mean = total / static_cast<double>(batch.size());
  for (double& x : w) x /= mean;
  return w;
}

}  // namespace avid
