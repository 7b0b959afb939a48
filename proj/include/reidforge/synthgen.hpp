#pragma once

#include <cstdint>

#include "reidforge/config.hpp"
#include "reidforge/dataset.hpp"

namespace reidforge {

// Controls for the synthetic dataset generator. The geometry knobs shape
// how separable teams and players are: team base vectors sit on a sphere of
// radius team_scale, player offsets are Gaussian with std player_scale, and
// every sample adds Gaussian view noise. Occlusion blends a sample with a
// co-action player's vector, which is the main source of hard cases.
struct GenConfig {
  int n_teams = 4;
  int matches_per_pair = 2;
  int actions_per_match = 3;
  int players_per_team = 10;
  int replays_per_action = 2;
  Index feature_dim = 16;
  double team_scale = 3.0;
  double player_scale = 1.0;
  double view_noise = 0.4;
  double occlusion_prob = 0.2;
  double occlusion_blend = 0.5;
  int referees_per_match = 0;  // extra identities with a shared team token
  std::uint64_t seed = 17;

  void validate() const;
};

Dataset generate(const GenConfig& config);

// Reads every GenConfig key (with the struct defaults as fallbacks) so the
// parsed KeyValueConfig can echo the materialized configuration.
GenConfig parse_gen_config(KeyValueConfig& cfg);

}  // namespace reidforge
