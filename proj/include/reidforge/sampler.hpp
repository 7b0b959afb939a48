#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "reidforge/dataset.hpp"
#include "reidforge/rng.hpp"

namespace reidforge {

// Metadata grouping levels, from tightest to loosest:
//   I    same action
//   II   same match
//   III  same unordered team pair, same year
//   IV   same unordered team pair, any year
//   V    at least one shared team, same year
//   VI   at least one shared team, any year
//   VII  everything
// Levels are cumulative: a pair that groups at some level also groups at
// every looser level, so the predicates are monotone in the level.
enum class Level : int {
  I = 1,
  II = 2,
  III = 3,
  IV = 4,
  V = 5,
  VI = 6,
  VII = 7,
};

// Tightest level at which the two samples group together.
Level min_level(const Dataset& dataset, std::size_t seed_sample,
                std::size_t candidate_sample);

bool level_predicate(Level level, const Dataset& dataset,
                     std::size_t seed_sample, std::size_t candidate_sample);

struct BatchSpec {
  int k = 4;  // samples per identity
  int m = 8;  // identities per batch

  void validate() const;
};

struct BatchEntry {
  std::size_t sample;  // index into Dataset::samples()
  int player_id;
};

struct Batch {
  std::vector<BatchEntry> entries;  // k*m entries, grouped by identity
  std::optional<std::size_t> seed_sample;  // hierarchical only
  std::vector<Level> level_trace;          // per entry, hierarchical only
};

// Samples still available in the current epoch.
struct EpochPool {
  std::vector<std::size_t> available;  // sorted sample indices
};

// Conventional random identity sampling: per epoch, identities are
// permuted and consumed in chunks of M, so no identity repeats within an
// epoch and an epoch yields floor(n_ids / M) batches.
class RandomBatcher {
 public:
  RandomBatcher(const Dataset& dataset, BatchSpec spec, std::uint64_t seed);

  Batch next();
  std::vector<Batch> next_epoch();
  int batches_per_epoch() const { return batches_per_epoch_; }
  int epoch() const { return epoch_; }

 private:
  void start_epoch();

  const Dataset* dataset_;
  BatchSpec spec_;
  Rng rng_;
  std::map<int, std::vector<std::size_t>> samples_by_id_;
  std::vector<int> id_order_;
  std::size_t next_id_ = 0;
  int batches_per_epoch_ = 0;
  int emitted_this_epoch_ = 0;
  int epoch_ = 0;
};

// Metadata-driven sampling: each batch grows outward from a random seed
// sample, escalating through the levels until M identities are gathered;
// batch samples are then discarded from the epoch pool.
class HierarchicalBatcher {
 public:
  HierarchicalBatcher(const Dataset& dataset, BatchSpec spec,
                      std::uint64_t seed);

  Batch next();
  // Batches until the pool drops below M distinct identities.
  std::vector<Batch> next_epoch();
  int epoch() const { return epoch_; }
  const EpochPool& pool() const { return pool_; }

 private:
  void start_epoch();
  std::size_t distinct_pool_ids() const;

  const Dataset* dataset_;
  BatchSpec spec_;
  Rng rng_;
  std::vector<std::size_t> train_samples_;
  EpochPool pool_;
  int epoch_ = 0;
};

struct BatchStats {
  double same_action = 0.0;
  double same_match = 0.0;
  double team_intersect = 0.0;
  // the same fractions over pairs with different identities only
  double cross_id_same_action = 0.0;
  double cross_id_same_match = 0.0;
  double cross_id_team_intersect = 0.0;
  std::size_t n_batches = 0;

  std::string to_key_values() const;
};

// Fractions of within-batch sample pairs sharing metadata, averaged over
// batches.
BatchStats batch_stats(const std::vector<Batch>& batches,
                       const Dataset& dataset);

}  // namespace reidforge
