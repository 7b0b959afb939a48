#include "reidforge/synthgen.hpp"

#include <string>
#include <utility>
#include <vector>

#include "reidforge/rng.hpp"

namespace reidforge {

void GenConfig::validate() const {
  if (n_teams < 1 || matches_per_pair < 1 || actions_per_match < 1 ||
      players_per_team < 1 || replays_per_action < 1) {
    throw DataError("gen config: all counts must be >= 1");
  }
  if (n_teams < 2) {
    throw DataError("gen config: need at least 2 teams to form a match");
  }
  if (feature_dim < 2) throw DataError("gen config: feature_dim must be >= 2");
  if (team_scale < 0 || player_scale < 0 || view_noise < 0) {
    throw DataError("gen config: scales and noise must be non-negative");
  }
  if (occlusion_prob < 0 || occlusion_prob > 1 || occlusion_blend < 0 ||
      occlusion_blend > 1) {
    throw DataError("gen config: occlusion controls must lie in [0, 1]");
  }
  if (referees_per_match < 0) {
    throw DataError("gen config: referees_per_match must be >= 0");
  }
}

GenConfig parse_gen_config(KeyValueConfig& cfg) {
  GenConfig defaults;
  GenConfig out;
  out.n_teams = cfg.get_int("n_teams", defaults.n_teams);
  out.matches_per_pair =
      cfg.get_int("matches_per_pair", defaults.matches_per_pair);
  out.actions_per_match =
      cfg.get_int("actions_per_match", defaults.actions_per_match);
  out.players_per_team =
      cfg.get_int("players_per_team", defaults.players_per_team);
  out.replays_per_action =
      cfg.get_int("replays_per_action", defaults.replays_per_action);
  out.feature_dim = static_cast<Index>(
      cfg.get_int("feature_dim", static_cast<int>(defaults.feature_dim)));
  out.team_scale = cfg.get_double("team_scale", defaults.team_scale);
  out.player_scale = cfg.get_double("player_scale", defaults.player_scale);
  out.view_noise = cfg.get_double("view_noise", defaults.view_noise);
  out.occlusion_prob =
      cfg.get_double("occlusion_prob", defaults.occlusion_prob);
  out.occlusion_blend =
      cfg.get_double("occlusion_blend", defaults.occlusion_blend);
  out.referees_per_match =
      cfg.get_int("referees_per_match", defaults.referees_per_match);
  out.seed = cfg.get_u64("seed", defaults.seed);
  out.validate();
  return out;
}

namespace {

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

Dataset generate(const GenConfig& config) {
  config.validate();
  Rng rng(config.seed);

  const int n_players = config.n_teams * config.players_per_team;
  const int referee_pool =
      config.referees_per_match > 0 ? config.referees_per_match * 2 : 0;

  // Base geometry: one sphere point per team (plus one shared base for the
  // referee pool), then per-player Gaussian offsets around their base.
  std::vector<Eigen::RowVectorXd> team_base;
  for (int t = 0; t < config.n_teams; ++t) {
    team_base.push_back(rng.sphere(config.feature_dim, config.team_scale));
  }
  Eigen::RowVectorXd referee_base;
  if (referee_pool > 0) {
    referee_base = rng.sphere(config.feature_dim, config.team_scale);
  }

  auto draw_offset = [&]() {
    Eigen::RowVectorXd v(config.feature_dim);
    for (Index i = 0; i < config.feature_dim; ++i) {
      v(i) = config.player_scale * rng.normal();
    }
    return v;
  };

  std::vector<Eigen::RowVectorXd> player_vec(
      static_cast<std::size_t>(n_players + referee_pool));
  for (int t = 0; t < config.n_teams; ++t) {
    for (int p = 0; p < config.players_per_team; ++p) {
      player_vec[static_cast<std::size_t>(t * config.players_per_team + p)] =
          team_base[static_cast<std::size_t>(t)] + draw_offset();
    }
  }
  for (int r = 0; r < referee_pool; ++r) {
    player_vec[static_cast<std::size_t>(n_players + r)] =
        referee_base + draw_offset();
  }

  // Match schedule: every unordered team pair, matches_per_pair times.
  // Alternating years make the same pair meet in two different years, so
  // the same-pair-any-year and shared-team-any-year groupings are populated.
  std::vector<MatchMeta> matches;
  std::vector<std::pair<int, int>> match_teams;
  for (int a = 0; a < config.n_teams; ++a) {
    for (int b = a + 1; b < config.n_teams; ++b) {
      for (int k = 0; k < config.matches_per_pair; ++k) {
        MatchMeta m;
        m.match_id = "m" + std::to_string(matches.size());
        m.year = 2020 + (k % 2);
        m.team_a = "team" + std::to_string(a);
        m.team_b = "team" + std::to_string(b);
        matches.push_back(m);
        match_teams.emplace_back(a, b);
      }
    }
  }
  const std::size_t n_matches = matches.size();

  // Roughly a quarter of the matches are held out as the test split.
  std::vector<Split> match_split(n_matches, Split::Train);
  bool any_test = false;
  for (std::size_t i = 0; i < n_matches; ++i) {
    if (i % 4 == 3) {
      match_split[i] = Split::Test;
      any_test = true;
    }
  }
  if (!any_test && n_matches >= 2) match_split[n_matches - 1] = Split::Test;

  std::vector<ActionRef> actions;
  std::vector<Sample> samples;
  std::vector<Eigen::RowVectorXd> feature_rows;

  for (std::size_t mi = 0; mi < n_matches; ++mi) {
    // visible identities: both rosters, plus referees rotated through the pool
    std::vector<int> visible;
    auto [ta, tb] = match_teams[mi];
    for (int p = 0; p < config.players_per_team; ++p) {
      visible.push_back(ta * config.players_per_team + p);
    }
    for (int p = 0; p < config.players_per_team; ++p) {
      visible.push_back(tb * config.players_per_team + p);
    }
    for (int r = 0; r < config.referees_per_match; ++r) {
      visible.push_back(n_players +
                        static_cast<int>(
                            (mi * static_cast<std::size_t>(
                                      config.referees_per_match) +
                             static_cast<std::size_t>(r)) %
                            static_cast<std::size_t>(referee_pool)));
    }

    for (int ai = 0; ai < config.actions_per_match; ++ai) {
      ActionRef action;
      action.action_id = "a" + std::to_string(actions.size());
      action.match_id = matches[mi].match_id;
      actions.push_back(action);

      auto noise = [&]() {
        Eigen::RowVectorXd n(config.feature_dim);
        for (Index i = 0; i < config.feature_dim; ++i) {
          n(i) = config.view_noise * rng.normal();
        }
        return n;
      };

      // Clean features first: frame 0 is the action frame; replay frames
      // perturb the action frame, not the player vector.
      const int n_frames = 1 + config.replays_per_action;
      std::vector<std::vector<Eigen::RowVectorXd>> frames(visible.size());
      for (std::size_t v = 0; v < visible.size(); ++v) {
        Eigen::RowVectorXd action_frame =
            player_vec[static_cast<std::size_t>(visible[v])] + noise();
        frames[v].push_back(action_frame);
        for (int f = 1; f < n_frames; ++f) {
          frames[v].push_back(action_frame + noise());
        }
      }

      for (std::size_t v = 0; v < visible.size(); ++v) {
        for (int f = 0; f < n_frames; ++f) {
          Eigen::RowVectorXd x = frames[v][static_cast<std::size_t>(f)];
          if (rng.uniform() < config.occlusion_prob && visible.size() >= 2) {
            std::size_t other = rng.index(visible.size() - 1);
            if (other >= v) ++other;
            x = (1.0 - config.occlusion_blend) * x +
                config.occlusion_blend *
                    frames[other][static_cast<std::size_t>(f)];
          }
          Sample s;
          s.sample_id = "s" + std::to_string(samples.size());
          s.player_id = visible[v];
          s.action_id = actions.back().action_id;
          s.role = f == 0 ? Role::Query : Role::Gallery;
          s.feature_index = samples.size();
          s.split = match_split[mi];
          samples.push_back(s);
          feature_rows.push_back(x);
        }
      }
    }
  }

  Matrixd features(static_cast<Index>(feature_rows.size()),
                   config.feature_dim);
  for (std::size_t i = 0; i < feature_rows.size(); ++i) {
    for (Index j = 0; j < config.feature_dim; ++j) {
      // quantize to float32 so the on-disk interchange format round-trips
      // bit-exactly from the moment of generation
      features(static_cast<Index>(i), j) = f32(feature_rows[i](j));
    }
  }

  return Dataset(std::move(matches), std::move(actions), std::move(samples),
                 std::move(features));
}

}  // namespace reidforge
