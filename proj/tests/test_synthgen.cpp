#include "doctest.h"

#include <map>
#include <set>

#include "reidforge/synthgen.hpp"
#include "test_support.hpp"

using namespace reidforge;

TEST_CASE("generation is deterministic in the seed") {
  GenConfig config;
  config.seed = 7;
  Dataset a = generate(config);
  Dataset b = generate(config);
  CHECK(a == b);
  config.seed = 8;
  Dataset c = generate(config);
  CHECK_FALSE(a == c);
}

TEST_CASE("zero noise and no occlusion give identical per-player vectors") {
  GenConfig config;
  config.view_noise = 0.0;
  config.occlusion_prob = 0.0;
  config.n_teams = 2;
  config.players_per_team = 3;
  config.actions_per_match = 2;
  Dataset ds = generate(config);
  // all samples of one player within one match are the same vector
  std::map<std::pair<int, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.samples().size(); ++i) {
    const auto& s = ds.samples()[i];
    groups[{s.player_id, ds.action_of(s).match_index}].push_back(i);
  }
  for (const auto& [key, members] : groups) {
    const auto first =
        ds.features().row(Index(ds.samples()[members[0]].feature_index));
    for (std::size_t m : members) {
      CHECK(ds.features()
                .row(Index(ds.samples()[m].feature_index))
                .isApprox(first, 0.0));
    }
  }
}

TEST_CASE("hand-counted sample structure for a one-match config") {
  GenConfig config;
  config.n_teams = 2;
  config.players_per_team = 3;
  config.actions_per_match = 1;
  config.replays_per_action = 2;
  config.matches_per_pair = 1;
  Dataset ds = generate(config);

  REQUIRE(ds.matches().size() == 1);
  std::set<int> identities;
  int queries = 0, galleries = 0;
  for (const auto& s : ds.samples()) {
    identities.insert(s.player_id);
    queries += s.role == Role::Query;
    galleries += s.role == Role::Gallery;
  }
  CHECK(identities.size() == 6);
  CHECK(queries == 6);
  CHECK(galleries == 12);
}

TEST_CASE("nearest-centroid on raw features is perfect without occlusion") {
  GenConfig config;
  config.occlusion_prob = 0.0;
  config.view_noise = 0.05;  // small relative to player_scale = 1
  Dataset ds = generate(config);

  // group per (action, player), classify each sample by nearest centroid
  std::map<std::pair<std::size_t, int>, std::vector<Index>> groups;
  for (const auto& s : ds.samples()) {
    groups[{s.action_index, s.player_id}].push_back(Index(s.feature_index));
  }
  std::map<std::size_t, std::vector<std::pair<int, Eigen::RowVectorXd>>>
      centroids_by_action;
  for (const auto& [key, rows] : groups) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(ds.feature_dim());
    for (Index r : rows) c += ds.features().row(r);
    c /= double(rows.size());
    centroids_by_action[key.first].emplace_back(key.second, c);
  }
  for (const auto& s : ds.samples()) {
    const auto& centroids = centroids_by_action[s.action_index];
    int best_id = -1;
    double best = 0;
    for (const auto& [id, c] : centroids) {
      double d = (ds.features().row(Index(s.feature_index)) - c).squaredNorm();
      if (best_id < 0 || d < best) {
        best = d;
        best_id = id;
      }
    }
    CHECK(best_id == s.player_id);
  }
}

TEST_CASE("within-team distances fall below between-team distances") {
  GenConfig config;
  config.team_scale = 3.0;
  config.player_scale = 1.0;
  Dataset ds = generate(config);

  // player -> team from the generator's id layout
  auto team_of = [&](int player) { return player / config.players_per_team; };
  Rng rng(5);
  double within = 0, between = 0;
  int n_within = 0, n_between = 0;
  while (n_within < 1000 || n_between < 1000) {
    std::size_t a = rng.index(ds.samples().size());
    std::size_t b = rng.index(ds.samples().size());
    const auto& sa = ds.samples()[a];
    const auto& sb = ds.samples()[b];
    if (sa.player_id == sb.player_id) continue;
    double d = (ds.features().row(Index(sa.feature_index)) -
                ds.features().row(Index(sb.feature_index)))
                   .norm();
    if (team_of(sa.player_id) == team_of(sb.player_id)) {
      within += d;
      ++n_within;
    } else {
      between += d;
      ++n_between;
    }
  }
  double mean_within = within / n_within;
  double mean_between = between / n_between;
  CHECK(mean_within < mean_between - 0.5);
}

TEST_CASE("train and test splits hold disjoint matches") {
  GenConfig config;
  Dataset ds = generate(config);
  std::set<std::size_t> train_matches, test_matches;
  for (const auto& s : ds.samples()) {
    std::size_t mi = ds.action_of(s).match_index;
    (s.split == Split::Train ? train_matches : test_matches).insert(mi);
  }
  CHECK(!train_matches.empty());
  CHECK(!test_matches.empty());
  for (std::size_t m : train_matches) CHECK(test_matches.count(m) == 0);
}

TEST_CASE("same team pair appears in two different years") {
  GenConfig config;
  config.matches_per_pair = 2;
  Dataset ds = generate(config);
  bool repeat_across_years = false;
  for (std::size_t i = 0; i < ds.matches().size(); ++i) {
    for (std::size_t j = i + 1; j < ds.matches().size(); ++j) {
      if (ds.matches()[i].same_pair(ds.matches()[j]) &&
          ds.matches()[i].year != ds.matches()[j].year) {
        repeat_across_years = true;
      }
    }
  }
  CHECK(repeat_across_years);
}

TEST_CASE("referees join matches as extra identities") {
  GenConfig config;
  config.referees_per_match = 1;
  Dataset ds = generate(config);
  const int n_players = config.n_teams * config.players_per_team;
  int referee_samples = 0;
  for (const auto& s : ds.samples()) referee_samples += s.player_id >= n_players;
  CHECK(referee_samples > 0);
}

TEST_CASE("invalid configs are rejected") {
  GenConfig config;
  SUBCASE("bad probability") {
    config.occlusion_prob = 1.5;
    CHECK_THROWS_AS(generate(config), DataError);
  }
  SUBCASE("too few teams") {
    config.n_teams = 1;
    CHECK_THROWS_AS(generate(config), DataError);
  }
  SUBCASE("tiny feature dim") {
    config.feature_dim = 1;
    CHECK_THROWS_AS(generate(config), DataError);
  }
}
