#pragma once

#include <string>
#include <vector>

#include "reidforge/dataset.hpp"
#include "reidforge/losses.hpp"

namespace reidforge {

// One query ranked against its own action's gallery, ascending distance,
// ties broken by gallery index order.
struct RankingResult {
  std::string query_id;
  std::vector<std::string> gallery_ids;
  std::vector<char> relevance;     // same player within the same action
  std::vector<double> distances;   // non-decreasing
};

struct ActionEval {
  std::string action_id;
  double map = 0.0;  // 0-100 over this action's valid queries
  double r1 = 0.0;
  int n_queries = 0;
  int n_excluded = 0;
};

struct EvalReport {
  double map = 0.0;  // 0-100
  double r1 = 0.0;   // 0-100
  int n_queries = 0;
  int n_excluded = 0;  // queries with no relevant gallery sample
  std::vector<ActionEval> per_action;
};

// Sort order of gallery rows by distance to the query; stable in the
// original gallery index on ties.
std::vector<Index> rank_by_distance(const std::vector<double>& distances);

RankingResult rank_action(const Eigen::RowVectorXd& query_emb,
                          const Matrixd& gallery_embs, Metric metric,
                          const std::string& query_id,
                          const std::vector<std::string>& gallery_ids,
                          const std::vector<char>& relevance);

// AP = (1/R) * sum_k Precision@k * rel(k); requires >= 1 relevant item.
double average_precision(const RankingResult& result);

// Per-action retrieval metrics over one split: every query is ranked only
// against the gallery of its own action.
EvalReport evaluate_split(const Dataset& dataset, const Matrixd& embeddings,
                          Metric metric, Split split = Split::Test);

// Independent brute-force evaluation path used to cross-check
// evaluate_split; plain loops, no shared ranking machinery.
EvalReport oracle_evaluate(const Dataset& dataset, const Matrixd& embeddings,
                           Metric metric, Split split = Split::Test);

}  // namespace reidforge
