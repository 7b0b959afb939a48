#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "reidforge/common.hpp"

namespace reidforge {

// Player detections grouped into actions (moments of interest) within
// matches. Query samples are action-frame detections, gallery samples come
// from replay frames of the same action, and identity labels are only
// comparable between samples of the same action on the evaluation side.

enum class Role { Train, Query, Gallery };
enum class Split { Train, Test };

std::string to_string(Role role);
std::string to_string(Split split);
Role parse_role(const std::string& s);
Split parse_split(const std::string& s);

// Lowercase, trimmed; team identity is compared on this form.
std::string normalize_team(const std::string& name);

struct MatchMeta {
  std::string match_id;
  int year = 0;
  std::string team_a;
  std::string team_b;

  std::string team_a_norm;  // filled by Dataset construction
  std::string team_b_norm;

  bool same_pair(const MatchMeta& other) const;
  bool teams_intersect(const MatchMeta& other) const;
};

struct ActionRef {
  std::string action_id;
  std::string match_id;
  std::size_t match_index = 0;  // resolved by Dataset construction
};

struct Sample {
  std::string sample_id;
  int player_id = 0;
  std::string action_id;
  Role role = Role::Train;
  std::size_t feature_index = 0;
  Split split = Split::Train;

  std::size_t action_index = 0;  // resolved by Dataset construction
};

// Immutable after construction; construction resolves all cross-references
// and enforces every structural invariant.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<MatchMeta> matches, std::vector<ActionRef> actions,
          std::vector<Sample> samples, Matrixd features);

  const std::vector<MatchMeta>& matches() const { return matches_; }
  const std::vector<ActionRef>& actions() const { return actions_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Matrixd& features() const { return features_; }
  Index feature_dim() const { return features_.cols(); }

  const ActionRef& action_of(const Sample& s) const {
    return actions_[s.action_index];
  }
  const MatchMeta& match_of(const Sample& s) const {
    return matches_[actions_[s.action_index].match_index];
  }

  std::size_t action_index(const std::string& action_id) const;
  std::size_t match_index(const std::string& match_id) const;

  std::vector<std::size_t> split_sample_indices(Split split) const;
  // Sorted distinct player ids within a split.
  std::vector<int> split_player_ids(Split split) const;

  bool operator==(const Dataset& other) const;

 private:
  void validate() const;

  std::vector<MatchMeta> matches_;
  std::vector<ActionRef> actions_;
  std::vector<Sample> samples_;
  Matrixd features_;
  std::unordered_map<std::string, std::size_t> match_lookup_;
  std::unordered_map<std::string, std::size_t> action_lookup_;
};

Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& dataset, const std::string& dir);

// Raw little-endian float32 matrix files ("RF1 <rows> <dim>\n" header).
Matrixd load_feature_matrix(const std::string& path);
void save_feature_matrix(const Matrixd& m, const std::string& path);

struct QueryGallery {
  std::vector<std::size_t> query;    // sample indices
  std::vector<std::size_t> gallery;  // sample indices
};

// Query/gallery samples of every action; train-role samples are excluded.
std::unordered_map<std::string, QueryGallery> index_by_action(
    const Dataset& dataset);

}  // namespace reidforge
