#include "doctest.h"

#include <map>
#include <set>

#include "reidforge/sampler.hpp"
#include "reidforge/synthgen.hpp"
#include "test_support.hpp"

using namespace reidforge;

namespace {

// m0: 2020 red-blue   m1: 2021 red-blue   m2: 2020 red-green
// m3: 2021 red-green  m4: 2020 yellow-purple
Dataset metadata_fixture() {
  std::vector<MatchMeta> matches{
      {"m0", 2020, "red", "blue", "", ""},
      {"m1", 2021, "blue", "red", "", ""},  // same unordered pair as m0
      {"m2", 2020, "red", "green", "", ""},
      {"m3", 2021, "red", "green", "", ""},
      {"m4", 2020, "yellow", "purple", "", ""},
  };
  std::vector<ActionRef> actions;
  std::vector<Sample> samples;
  // two actions in m0, one in each other match; one sample per action+id
  auto add_action = [&](const std::string& aid, const std::string& mid) {
    actions.push_back({aid, mid, 0});
  };
  add_action("a0", "m0");
  add_action("a1", "m0");
  add_action("a2", "m1");
  add_action("a3", "m2");
  add_action("a4", "m3");
  add_action("a5", "m4");
  int fi = 0;
  auto add_sample = [&](const std::string& sid, int player,
                        const std::string& aid) {
    samples.push_back(
        {sid, player, aid, Role::Train, std::size_t(fi++), Split::Train, 0});
  };
  add_sample("s0", 0, "a0");
  add_sample("s1", 1, "a0");
  add_sample("s2", 2, "a1");
  add_sample("s3", 3, "a2");
  add_sample("s4", 4, "a3");
  add_sample("s5", 5, "a4");
  add_sample("s6", 6, "a5");
  Matrixd features = Matrixd::Zero(fi, 2);
  return Dataset(matches, actions, samples, features);
}

std::size_t sample_index(const Dataset& ds, const std::string& id) {
  for (std::size_t i = 0; i < ds.samples().size(); ++i) {
    if (ds.samples()[i].sample_id == id) return i;
  }
  FAIL("no sample " << id);
  return 0;
}

}  // namespace

TEST_CASE("level predicates follow the grouping table") {
  Dataset ds = metadata_fixture();
  auto idx = [&](const char* s) { return sample_index(ds, s); };

  SUBCASE("same action is level I and every looser level") {
    CHECK(min_level(ds, idx("s0"), idx("s1")) == Level::I);
    for (int l = 1; l <= 7; ++l) {
      CHECK(level_predicate(Level(l), ds, idx("s0"), idx("s1")));
    }
  }
  SUBCASE("same match, different action is level II") {
    CHECK(min_level(ds, idx("s0"), idx("s2")) == Level::II);
    CHECK_FALSE(level_predicate(Level::I, ds, idx("s0"), idx("s2")));
  }
  SUBCASE("same pair in a different year fails III, holds IV") {
    CHECK(min_level(ds, idx("s0"), idx("s3")) == Level::IV);
    CHECK_FALSE(level_predicate(Level::III, ds, idx("s0"), idx("s3")));
    CHECK(level_predicate(Level::IV, ds, idx("s0"), idx("s3")));
  }
  SUBCASE("one shared team in the same year fails IV, holds V") {
    CHECK(min_level(ds, idx("s0"), idx("s4")) == Level::V);
    CHECK_FALSE(level_predicate(Level::IV, ds, idx("s0"), idx("s4")));
    CHECK(level_predicate(Level::V, ds, idx("s0"), idx("s4")));
  }
  SUBCASE("one shared team in another year is level VI") {
    CHECK(min_level(ds, idx("s0"), idx("s5")) == Level::VI);
  }
  SUBCASE("unrelated matches only group at level VII") {
    CHECK(min_level(ds, idx("s0"), idx("s6")) == Level::VII);
  }
  SUBCASE("same team pair in the same year but a different match is III") {
    // m0 vs another 2020 red-blue match
    auto matches = ds.matches();
    matches.push_back({"m9", 2020, "red", "blue", "", ""});
    auto actions = ds.actions();
    actions.push_back({"a9", "m9", 0});
    auto samples = ds.samples();
    samples.push_back(
        {"s9", 9, "a9", Role::Train, std::size_t(ds.features().rows()),
         Split::Train, 0});
    Matrixd features = Matrixd::Zero(ds.features().rows() + 1, 2);
    features.topRows(ds.features().rows()) = ds.features();
    Dataset bigger(matches, actions, samples, features);
    CHECK(min_level(bigger, sample_index(bigger, "s0"),
                    sample_index(bigger, "s9")) == Level::III);
  }
}

TEST_CASE("level predicates are monotone on random pairs") {
  Dataset ds = generate(GenConfig{});
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t a = rng.index(ds.samples().size());
    std::size_t b = rng.index(ds.samples().size());
    for (int l = 1; l <= 7; ++l) {
      for (int m = l; m <= 7; ++m) {
        if (level_predicate(Level(l), ds, a, b)) {
          CHECK(level_predicate(Level(m), ds, a, b));
        }
      }
    }
    CHECK(level_predicate(Level::VII, ds, a, b));
  }
}

TEST_CASE("random batches use each identity once per epoch") {
  // 10 identities, M=4: two batches per epoch over 8 distinct ids
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}};
  std::vector<Sample> samples;
  for (int id = 0; id < 10; ++id) {
    for (int j = 0; j < 3; ++j) {
      samples.push_back({"s" + std::to_string(id) + "_" + std::to_string(j),
                         id, "a0", Role::Train,
                         std::size_t(id * 3 + j), Split::Train, 0});
    }
  }
  Dataset ds(matches, actions, samples, Matrixd::Zero(30, 2));

  RandomBatcher batcher(ds, BatchSpec{2, 4}, 1);
  CHECK(batcher.batches_per_epoch() == 2);
  auto epoch = batcher.next_epoch();
  REQUIRE(epoch.size() == 2);
  std::set<int> ids;
  for (const auto& batch : epoch) {
    CHECK(batch.entries.size() == 8);
    for (const auto& e : batch.entries) ids.insert(e.player_id);
  }
  CHECK(ids.size() == 8);
}

TEST_CASE("identities short of K repeat their samples") {
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}};
  std::vector<Sample> samples{
      {"only", 0, "a0", Role::Train, 0, Split::Train, 0},
      {"b0", 1, "a0", Role::Train, 1, Split::Train, 0},
      {"b1", 1, "a0", Role::Train, 2, Split::Train, 0},
      {"b2", 1, "a0", Role::Train, 3, Split::Train, 0},
      {"b3", 1, "a0", Role::Train, 4, Split::Train, 0},
  };
  Dataset ds(matches, actions, samples, Matrixd::Zero(5, 2));
  RandomBatcher batcher(ds, BatchSpec{4, 2}, 3);
  Batch batch = batcher.next();
  int only_count = 0;
  for (const auto& e : batch.entries) only_count += e.player_id == 0;
  CHECK(only_count == 4);
  for (const auto& e : batch.entries) {
    if (e.player_id == 0) CHECK(ds.samples()[e.sample].sample_id == "only");
  }
}

TEST_CASE("fewer than M identities is an error") {
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}};
  std::vector<Sample> samples{
      {"x", 0, "a0", Role::Train, 0, Split::Train, 0},
      {"y", 1, "a0", Role::Train, 1, Split::Train, 0},
  };
  Dataset ds(matches, actions, samples, Matrixd::Zero(2, 2));
  CHECK_THROWS_AS(RandomBatcher(ds, BatchSpec{1, 4}, 1), DataError);
  CHECK_THROWS_AS(HierarchicalBatcher(ds, BatchSpec{1, 4}, 1), DataError);
}

TEST_CASE("hierarchical batch drawn inside one action stays at level I") {
  // one action holding 6 identities, M=4
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}};
  std::vector<Sample> samples;
  for (int id = 0; id < 6; ++id) {
    samples.push_back({"s" + std::to_string(id), id, "a0", Role::Train,
                       std::size_t(id), Split::Train, 0});
  }
  Dataset ds(matches, actions, samples, Matrixd::Zero(6, 2));
  HierarchicalBatcher batcher(ds, BatchSpec{1, 4}, 2);
  Batch batch = batcher.next();
  REQUIRE(batch.level_trace.size() == 4);
  for (Level l : batch.level_trace) CHECK(l == Level::I);
  CHECK(batch.seed_sample.has_value());
  CHECK(batch.entries[0].sample == *batch.seed_sample);
}

TEST_CASE("escalation fills from the next level when the action runs out") {
  // action a0 holds ids {0,1}; a1 holds {2,3,4}; same match; M=4, K=1
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}, {"a1", "m0", 0}};
  std::vector<Sample> samples;
  samples.push_back({"s0", 0, "a0", Role::Train, 0, Split::Train, 0});
  samples.push_back({"s1", 1, "a0", Role::Train, 1, Split::Train, 0});
  samples.push_back({"s2", 2, "a1", Role::Train, 2, Split::Train, 0});
  samples.push_back({"s3", 3, "a1", Role::Train, 3, Split::Train, 0});
  samples.push_back({"s4", 4, "a1", Role::Train, 4, Split::Train, 0});
  Dataset ds(matches, actions, samples, Matrixd::Zero(5, 2));

  bool saw_two_one_split = false;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    HierarchicalBatcher batcher(ds, BatchSpec{1, 4}, seed);
    Batch batch = batcher.next();
    std::map<Level, int> by_level;
    for (Level l : batch.level_trace) by_level[l]++;
    std::size_t seed_action = ds.samples()[*batch.seed_sample].action_index;
    if (seed_action == 0) {
      CHECK(by_level[Level::I] == 2);
      CHECK(by_level[Level::II] == 2);
      saw_two_one_split = true;
    } else {
      CHECK(by_level[Level::I] == 3);
      CHECK(by_level[Level::II] == 1);
    }
  }
  CHECK(saw_two_one_split);
}

TEST_CASE("hierarchical epochs consume the pool without sample reuse") {
  Dataset ds = generate(GenConfig{});
  BatchSpec spec{4, 8};
  HierarchicalBatcher batcher(ds, spec, 11);
  for (int epoch = 0; epoch < 3; ++epoch) {
    auto batches = batcher.next_epoch();
    CHECK(!batches.empty());
    std::set<std::size_t> seen;
    for (const auto& batch : batches) {
      CHECK(batch.entries.size() == std::size_t(spec.k) * std::size_t(spec.m));
      std::map<int, int> per_id;
      std::set<std::size_t> distinct;
      for (const auto& e : batch.entries) {
        per_id[e.player_id]++;
        distinct.insert(e.sample);
      }
      CHECK(per_id.size() == std::size_t(spec.m));
      for (const auto& [id, count] : per_id) CHECK(count == spec.k);
      // no cross-batch reuse inside an epoch
      for (std::size_t s : distinct) CHECK(seen.insert(s).second);
      // every entry is a train-split sample
      for (const auto& e : batch.entries) {
        CHECK(ds.samples()[e.sample].split == Split::Train);
      }
    }
  }
}

TEST_CASE("random batches keep the K/M structure over an epoch") {
  Dataset ds = generate(GenConfig{});
  BatchSpec spec{4, 8};
  RandomBatcher batcher(ds, spec, 11);
  for (const auto& batch : batcher.next_epoch()) {
    std::map<int, int> per_id;
    for (const auto& e : batch.entries) per_id[e.player_id]++;
    CHECK(per_id.size() == std::size_t(spec.m));
    for (const auto& [id, count] : per_id) CHECK(count == spec.k);
  }
}

TEST_CASE("batch sequences are deterministic in the seed") {
  Dataset ds = generate(GenConfig{});
  BatchSpec spec{3, 6};
  HierarchicalBatcher a(ds, spec, 21), b(ds, spec, 21);
  for (int i = 0; i < 20; ++i) {
    Batch ba = a.next(), bb = b.next();
    REQUIRE(ba.entries.size() == bb.entries.size());
    CHECK(ba.seed_sample == bb.seed_sample);
    for (std::size_t j = 0; j < ba.entries.size(); ++j) {
      CHECK(ba.entries[j].sample == bb.entries[j].sample);
      CHECK(ba.level_trace[j] == bb.level_trace[j]);
    }
  }
  RandomBatcher c(ds, spec, 21), d(ds, spec, 21);
  for (int i = 0; i < 20; ++i) {
    Batch bc = c.next(), bd = d.next();
    for (std::size_t j = 0; j < bc.entries.size(); ++j) {
      CHECK(bc.entries[j].sample == bd.entries[j].sample);
    }
  }
}

TEST_CASE("epochs differ in composition") {
  Dataset ds = generate(GenConfig{});
  HierarchicalBatcher batcher(ds, BatchSpec{4, 8}, 31);
  auto first = batcher.next_epoch();
  auto second = batcher.next_epoch();
  REQUIRE(!first.empty());
  REQUIRE(!second.empty());
  bool differs = first.size() != second.size();
  for (std::size_t i = 0; !differs && i < first.size(); ++i) {
    for (std::size_t j = 0; j < first[i].entries.size(); ++j) {
      if (first[i].entries[j].sample != second[i].entries[j].sample) {
        differs = true;
        break;
      }
    }
  }
  CHECK(differs);
}

TEST_CASE("level minimality holds against a replayed pool") {
  Dataset ds = generate(GenConfig{});
  BatchSpec spec{4, 8};
  HierarchicalBatcher batcher(ds, spec, 41);
  std::set<std::size_t> pool;
  for (std::size_t s : ds.split_sample_indices(Split::Train)) pool.insert(s);

  for (int b = 0; b < 30; ++b) {
    std::set<int> pool_ids;
    for (std::size_t s : pool) pool_ids.insert(ds.samples()[s].player_id);
    if (pool_ids.size() < std::size_t(spec.m)) {
      pool.clear();
      for (std::size_t s : ds.split_sample_indices(Split::Train)) pool.insert(s);
    }
    Batch batch = batcher.next();
    REQUIRE(batch.seed_sample.has_value());

    // the tightest level available to each pool identity
    std::map<int, Level> id_level;
    for (std::size_t s : pool) {
      Level l = min_level(ds, *batch.seed_sample, s);
      auto [it, inserted] = id_level.emplace(ds.samples()[s].player_id, l);
      if (!inserted && int(l) < int(it->second)) it->second = l;
    }
    Level max_used = Level::I;
    std::set<int> batch_ids;
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
      batch_ids.insert(batch.entries[i].player_id);
      if (int(batch.level_trace[i]) > int(max_used)) {
        max_used = batch.level_trace[i];
      }
    }
    // every skipped identity sits at the max level or looser
    for (const auto& [id, lvl] : id_level) {
      if (!batch_ids.count(id)) CHECK(int(lvl) >= int(max_used));
    }
    // each identity's K picks prefer the tightest level available to it
    std::map<int, std::vector<std::size_t>> chosen;
    for (const auto& e : batch.entries) chosen[e.player_id].push_back(e.sample);
    for (auto& [id, picks] : chosen) {
      std::set<std::size_t> picked(picks.begin(), picks.end());
      Level worst_pick = Level::I;
      for (std::size_t s : picked) {
        Level l = min_level(ds, *batch.seed_sample, s);
        if (int(l) > int(worst_pick)) worst_pick = l;
      }
      for (std::size_t s : pool) {
        if (ds.samples()[s].player_id != id || picked.count(s)) continue;
        if (picked.size() < std::size_t(spec.k)) continue;  // all were taken
        CHECK(int(min_level(ds, *batch.seed_sample, s)) >= int(worst_pick));
      }
    }
    for (const auto& e : batch.entries) pool.erase(e.sample);
  }
}

TEST_CASE("batch stats on a single action are all ones") {
  std::vector<MatchMeta> matches{{"m0", 2020, "red", "blue", "", ""}};
  std::vector<ActionRef> actions{{"a0", "m0", 0}};
  std::vector<Sample> samples;
  for (int id = 0; id < 6; ++id) {
    samples.push_back({"s" + std::to_string(id), id, "a0", Role::Train,
                       std::size_t(id), Split::Train, 0});
  }
  Dataset ds(matches, actions, samples, Matrixd::Zero(6, 2));
  RandomBatcher batcher(ds, BatchSpec{1, 4}, 7);
  auto stats = batch_stats(batcher.next_epoch(), ds);
  CHECK(stats.same_action == 1.0);
  CHECK(stats.same_match == 1.0);
  CHECK(stats.team_intersect == 1.0);
}

TEST_CASE("cross-identity same-match fraction matches the closed form") {
  // two teams only: every player appears in every match, so two distinct
  // players' samples share a match with probability 1/n_train_matches
  GenConfig config;
  config.n_teams = 2;
  config.matches_per_pair = 4;  // match 3 becomes the test split
  config.players_per_team = 5;
  config.occlusion_prob = 0.0;
  Dataset ds = generate(config);

  std::set<std::size_t> train_matches;
  for (const auto& s : ds.samples()) {
    if (s.split == Split::Train) {
      train_matches.insert(ds.action_of(s).match_index);
    }
  }
  REQUIRE(train_matches.size() == 3);

  RandomBatcher batcher(ds, BatchSpec{4, 5}, 17);
  std::vector<Batch> batches;
  for (int e = 0; e < 100; ++e) {
    auto epoch = batcher.next_epoch();
    batches.insert(batches.end(), epoch.begin(), epoch.end());
  }
  auto stats = batch_stats(batches, ds);
  CHECK(stats.cross_id_same_match ==
        doctest::Approx(1.0 / 3.0).epsilon(0.12));
}

TEST_CASE("hierarchical batches share matches far more than random ones") {
  Dataset ds = generate(GenConfig{});
  BatchSpec spec{4, 8};
  RandomBatcher random(ds, spec, 5);
  HierarchicalBatcher hier(ds, spec, 5);
  std::vector<Batch> rb, hb;
  while (rb.size() < 100) {
    auto epoch = random.next_epoch();
    rb.insert(rb.end(), epoch.begin(), epoch.end());
  }
  while (hb.size() < 100) {
    auto epoch = hier.next_epoch();
    hb.insert(hb.end(), epoch.begin(), epoch.end());
  }
  auto rs = batch_stats(rb, ds);
  auto hs = batch_stats(hb, ds);
  CHECK(hs.same_match > rs.same_match);
  CHECK(hs.same_action > rs.same_action);
}
