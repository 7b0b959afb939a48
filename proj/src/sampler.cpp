#include "reidforge/sampler.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace reidforge {

Level min_level(const Dataset& dataset, std::size_t seed_sample,
                std::size_t candidate_sample) {
  const auto& a = dataset.samples().at(seed_sample);
  const auto& b = dataset.samples().at(candidate_sample);
  if (a.action_index == b.action_index) return Level::I;
  const auto& action_a = dataset.actions()[a.action_index];
  const auto& action_b = dataset.actions()[b.action_index];
  if (action_a.match_index == action_b.match_index) return Level::II;
  const auto& match_a = dataset.matches()[action_a.match_index];
  const auto& match_b = dataset.matches()[action_b.match_index];
  if (match_a.same_pair(match_b)) {
    return match_a.year == match_b.year ? Level::III : Level::IV;
  }
  if (match_a.teams_intersect(match_b)) {
    return match_a.year == match_b.year ? Level::V : Level::VI;
  }
  return Level::VII;
}

bool level_predicate(Level level, const Dataset& dataset,
                     std::size_t seed_sample, std::size_t candidate_sample) {
  return static_cast<int>(min_level(dataset, seed_sample, candidate_sample)) <=
         static_cast<int>(level);
}

void BatchSpec::validate() const {
  if (k < 1) throw DataError("batch spec: K must be >= 1");
  if (m < 2) throw DataError("batch spec: M must be >= 2");
}

namespace {

std::map<int, std::vector<std::size_t>> group_by_id(
    const Dataset& dataset, const std::vector<std::size_t>& sample_indices) {
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t s : sample_indices) {
    by_id[dataset.samples()[s].player_id].push_back(s);
  }
  return by_id;
}

// K samples of one identity: all of `candidates` in order, topped up with
// replacement when the identity has fewer than K left.
std::vector<std::size_t> take_k(const std::vector<std::size_t>& candidates,
                                int k, Rng& rng) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size() && out.size() < std::size_t(k);
       ++i) {
    out.push_back(candidates[i]);
  }
  while (out.size() < std::size_t(k)) {
    out.push_back(candidates[rng.index(candidates.size())]);
  }
  return out;
}

}  // namespace

RandomBatcher::RandomBatcher(const Dataset& dataset, BatchSpec spec,
                             std::uint64_t seed)
    : dataset_(&dataset), spec_(spec), rng_(seed) {
  spec_.validate();
  samples_by_id_ = group_by_id(dataset, dataset.split_sample_indices(Split::Train));
  if (samples_by_id_.size() < std::size_t(spec_.m)) {
    throw DataError("random sampler: train split has " +
                    std::to_string(samples_by_id_.size()) +
                    " identities, need at least " + std::to_string(spec_.m));
  }
  for (const auto& [id, v] : samples_by_id_) id_order_.push_back(id);
  batches_per_epoch_ =
      static_cast<int>(samples_by_id_.size() / std::size_t(spec_.m));
  start_epoch();
  epoch_ = 0;
}

void RandomBatcher::start_epoch() {
  rng_.shuffle(id_order_);
  next_id_ = 0;
  emitted_this_epoch_ = 0;
}

Batch RandomBatcher::next() {
  if (emitted_this_epoch_ == batches_per_epoch_) {
    ++epoch_;
    start_epoch();
  }
  Batch batch;
  for (int i = 0; i < spec_.m; ++i) {
    int id = id_order_[next_id_++];
    const auto& all = samples_by_id_.at(id);
    std::vector<std::size_t> picks;
    if (all.size() >= std::size_t(spec_.k)) {
      // K distinct samples, uniform without replacement
      std::vector<std::size_t> copy = all;
      for (int j = 0; j < spec_.k; ++j) {
        std::size_t r = j + rng_.index(copy.size() - std::size_t(j));
        std::swap(copy[std::size_t(j)], copy[r]);
        picks.push_back(copy[std::size_t(j)]);
      }
    } else {
      picks = take_k(all, spec_.k, rng_);
    }
    for (std::size_t s : picks) batch.entries.push_back(BatchEntry{s, id});
  }
  ++emitted_this_epoch_;
  return batch;
}

std::vector<Batch> RandomBatcher::next_epoch() {
  std::vector<Batch> out;
  out.reserve(std::size_t(batches_per_epoch_));
  for (int i = 0; i < batches_per_epoch_; ++i) out.push_back(next());
  return out;
}

HierarchicalBatcher::HierarchicalBatcher(const Dataset& dataset,
                                         BatchSpec spec, std::uint64_t seed)
    : dataset_(&dataset), spec_(spec), rng_(seed) {
  spec_.validate();
  train_samples_ = dataset.split_sample_indices(Split::Train);
  auto by_id = group_by_id(dataset, train_samples_);
  if (by_id.size() < std::size_t(spec_.m)) {
    throw DataError("hierarchical sampler: train split has " +
                    std::to_string(by_id.size()) +
                    " identities, need at least " + std::to_string(spec_.m));
  }
  start_epoch();
  epoch_ = 0;
}

void HierarchicalBatcher::start_epoch() { pool_.available = train_samples_; }

std::size_t HierarchicalBatcher::distinct_pool_ids() const {
  std::set<int> ids;
  for (std::size_t s : pool_.available) {
    ids.insert(dataset_->samples()[s].player_id);
  }
  return ids.size();
}

Batch HierarchicalBatcher::next() {
  if (distinct_pool_ids() < std::size_t(spec_.m)) {
    ++epoch_;
    start_epoch();
  }

  Batch batch;
  const auto& pool = pool_.available;
  std::size_t seed_sample = pool[rng_.index(pool.size())];
  batch.seed_sample = seed_sample;
  const int seed_id = dataset_->samples()[seed_sample].player_id;

  // Pool samples of each identity with their level relative to the seed.
  auto by_id = group_by_id(*dataset_, pool);
  std::map<std::size_t, Level> sample_level;
  std::map<int, Level> id_level;
  for (const auto& [id, samples] : by_id) {
    Level best = Level::VII;
    for (std::size_t s : samples) {
      Level l = min_level(*dataset_, seed_sample, s);
      sample_level[s] = l;
      if (static_cast<int>(l) < static_cast<int>(best)) best = l;
    }
    id_level[id] = best;
  }

  // Identity selection: the seed's identity first, then escalate level by
  // level, shuffling the new candidates of each level, until M identities.
  std::vector<std::pair<int, Level>> selected;
  selected.emplace_back(seed_id, Level::I);
  std::set<int> selected_ids{seed_id};
  for (int l = 1; l <= 7 && selected.size() < std::size_t(spec_.m); ++l) {
    std::vector<int> candidates;
    for (const auto& [id, lvl] : id_level) {
      if (static_cast<int>(lvl) == l && !selected_ids.count(id)) {
        candidates.push_back(id);
      }
    }
    rng_.shuffle(candidates);
    for (int id : candidates) {
      if (selected.size() == std::size_t(spec_.m)) break;
      selected.emplace_back(id, static_cast<Level>(l));
      selected_ids.insert(id);
    }
  }

  // K samples per selected identity, preferring the tightest levels; ties
  // within a level are broken by a shuffle of that identity's samples.
  std::set<std::size_t> used;
  for (const auto& [id, tag] : selected) {
    std::vector<std::size_t> candidates = by_id.at(id);
    rng_.shuffle(candidates);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) {
                       return static_cast<int>(sample_level.at(a)) <
                              static_cast<int>(sample_level.at(b));
                     });
    if (id == seed_id) {
      auto it = std::find(candidates.begin(), candidates.end(), seed_sample);
      std::rotate(candidates.begin(), it, it + 1);
    }
    for (std::size_t s : take_k(candidates, spec_.k, rng_)) {
      batch.entries.push_back(BatchEntry{s, id});
      batch.level_trace.push_back(tag);
      used.insert(s);
    }
  }

  // consume the pool
  std::vector<std::size_t> remaining;
  remaining.reserve(pool.size());
  for (std::size_t s : pool) {
    if (!used.count(s)) remaining.push_back(s);
  }
  pool_.available = std::move(remaining);
  return batch;
}

std::vector<Batch> HierarchicalBatcher::next_epoch() {
  std::vector<Batch> out;
  if (distinct_pool_ids() < std::size_t(spec_.m)) {
    ++epoch_;
    start_epoch();
  }
  while (distinct_pool_ids() >= std::size_t(spec_.m)) {
    out.push_back(next());
  }
  return out;
}

BatchStats batch_stats(const std::vector<Batch>& batches,
                       const Dataset& dataset) {
  if (batches.empty()) throw DataError("batch_stats: no batches");
  BatchStats stats;
  for (const auto& batch : batches) {
    std::size_t pairs = 0, cross = 0;
    std::size_t action = 0, match = 0, teams = 0;
    std::size_t c_action = 0, c_match = 0, c_teams = 0;
    const auto& e = batch.entries;
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t j = i + 1; j < e.size(); ++j) {
        Level l = min_level(dataset, e[i].sample, e[j].sample);
        bool same_action = l == Level::I;
        bool same_match = static_cast<int>(l) <= 2;
        bool intersect = static_cast<int>(l) <= 6;
        ++pairs;
        action += same_action;
        match += same_match;
        teams += intersect;
        if (e[i].player_id != e[j].player_id) {
          ++cross;
          c_action += same_action;
          c_match += same_match;
          c_teams += intersect;
        }
      }
    }
    if (pairs == 0) continue;
    stats.same_action += double(action) / double(pairs);
    stats.same_match += double(match) / double(pairs);
    stats.team_intersect += double(teams) / double(pairs);
    if (cross > 0) {
      stats.cross_id_same_action += double(c_action) / double(cross);
      stats.cross_id_same_match += double(c_match) / double(cross);
      stats.cross_id_team_intersect += double(c_teams) / double(cross);
    }
    ++stats.n_batches;
  }
  if (stats.n_batches == 0) throw DataError("batch_stats: only empty batches");
  double n = double(stats.n_batches);
  stats.same_action /= n;
  stats.same_match /= n;
  stats.team_intersect /= n;
  stats.cross_id_same_action /= n;
  stats.cross_id_same_match /= n;
  stats.cross_id_team_intersect /= n;
  return stats;
}

std::string BatchStats::to_key_values() const {
  std::ostringstream os;
  os.precision(10);
  os << "n_batches=" << n_batches << "\n"
     << "same_action_frac=" << same_action << "\n"
     << "same_match_frac=" << same_match << "\n"
     << "team_intersect_frac=" << team_intersect << "\n"
     << "cross_id_same_action_frac=" << cross_id_same_action << "\n"
     << "cross_id_same_match_frac=" << cross_id_same_match << "\n"
     << "cross_id_team_intersect_frac=" << cross_id_team_intersect << "\n";
  return os.str();
}

}  // namespace reidforge
