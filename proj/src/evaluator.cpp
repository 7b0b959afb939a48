#include "reidforge/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace reidforge {

std::vector<Index> rank_by_distance(const std::vector<double>& distances) {
  std::vector<Index> order(distances.size());
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return distances[std::size_t(a)] < distances[std::size_t(b)];
  });
  return order;
}

namespace {

std::vector<double> distances_to_gallery(const Eigen::RowVectorXd& q,
                                         const Matrixd& gallery, Metric metric,
                                         const std::string& query_id,
                                         const std::vector<std::string>& ids) {
  if (gallery.cols() != q.cols()) {
    throw ShapeError("rank_action: query dim " + std::to_string(q.cols()) +
                     " vs gallery dim " + std::to_string(gallery.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(gallery.rows()));
  if (metric == Metric::Euclidean) {
    for (Index i = 0; i < gallery.rows(); ++i) {
      out[std::size_t(i)] = (gallery.row(i) - q).norm();
    }
    return out;
  }
  double qn = q.norm();
  if (qn == 0.0) {
    throw NumericError("rank_action: zero-norm query \"" + query_id +
                       "\" under cosine metric");
  }
  for (Index i = 0; i < gallery.rows(); ++i) {
    double gn = gallery.row(i).norm();
    if (gn == 0.0) {
      throw NumericError("rank_action: zero-norm gallery row \"" +
                         ids[std::size_t(i)] + "\" under cosine metric");
    }
    out[std::size_t(i)] = 1.0 - q.dot(gallery.row(i)) / (qn * gn);
  }
  return out;
}

}  // namespace

RankingResult rank_action(const Eigen::RowVectorXd& query_emb,
                          const Matrixd& gallery_embs, Metric metric,
                          const std::string& query_id,
                          const std::vector<std::string>& gallery_ids,
                          const std::vector<char>& relevance) {
  if (gallery_embs.rows() < 1) {
    throw ShapeError("rank_action: empty gallery");
  }
  auto dists = distances_to_gallery(query_emb, gallery_embs, metric, query_id,
                                    gallery_ids);
  auto order = rank_by_distance(dists);
  RankingResult out;
  out.query_id = query_id;
  for (Index i : order) {
    out.gallery_ids.push_back(gallery_ids[std::size_t(i)]);
    out.relevance.push_back(relevance[std::size_t(i)]);
    out.distances.push_back(dists[std::size_t(i)]);
  }
  return out;
}

double average_precision(const RankingResult& result) {
  int relevant = 0;
  for (char r : result.relevance) relevant += r != 0;
  if (relevant == 0) {
    throw DataError("average_precision: no relevant gallery item for query \"" +
                    result.query_id + "\"");
  }
  double ap = 0.0;
  int hits = 0;
  for (std::size_t k = 0; k < result.relevance.size(); ++k) {
    if (result.relevance[k]) {
      ++hits;
      ap += double(hits) / double(k + 1);
    }
  }
  return ap / double(relevant);
}

EvalReport evaluate_split(const Dataset& dataset, const Matrixd& embeddings,
                          Metric metric, Split split) {
  const auto& samples = dataset.samples();
  if (embeddings.rows() != static_cast<Index>(samples.size())) {
    throw DataError("evaluate_split: embeddings cover " +
                    std::to_string(embeddings.rows()) + " rows but dataset has " +
                    std::to_string(samples.size()) + " samples");
  }

  // per-action query and gallery sample indices, in sample order
  std::vector<std::vector<std::size_t>> queries(dataset.actions().size());
  std::vector<std::vector<std::size_t>> galleries(dataset.actions().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.split != split) continue;
    if (s.role == Role::Query) queries[s.action_index].push_back(i);
    if (s.role == Role::Gallery) galleries[s.action_index].push_back(i);
  }

  EvalReport report;
  // (sample index, ap) pairs; the global mAP sum runs in sample-index order
  // so it matches the oracle bit for bit
  std::vector<std::pair<std::size_t, double>> query_aps;
  for (std::size_t ai = 0; ai < dataset.actions().size(); ++ai) {
    if (queries[ai].empty()) continue;
    ActionEval action;
    action.action_id = dataset.actions()[ai].action_id;
    double ap_sum = 0.0;
    int r1_hits = 0;

    Matrixd gallery_embs(static_cast<Index>(galleries[ai].size()),
                         embeddings.cols());
    std::vector<std::string> gallery_ids;
    for (std::size_t gi = 0; gi < galleries[ai].size(); ++gi) {
      gallery_embs.row(static_cast<Index>(gi)) =
          embeddings.row(static_cast<Index>(galleries[ai][gi]));
      gallery_ids.push_back(samples[galleries[ai][gi]].sample_id);
    }

    for (std::size_t q : queries[ai]) {
      std::vector<char> relevance;
      int n_relevant = 0;
      for (std::size_t g : galleries[ai]) {
        char rel = samples[g].player_id == samples[q].player_id;
        relevance.push_back(rel);
        n_relevant += rel;
      }
      if (n_relevant == 0) {
        ++action.n_excluded;
        continue;
      }
      RankingResult ranked =
          rank_action(embeddings.row(static_cast<Index>(q)), gallery_embs,
                      metric, samples[q].sample_id, gallery_ids, relevance);
      double ap = average_precision(ranked);
      ap_sum += ap;
      query_aps.emplace_back(q, ap);
      r1_hits += ranked.relevance.front() != 0;
      ++action.n_queries;
    }

    if (action.n_queries > 0) {
      action.map = 100.0 * ap_sum / double(action.n_queries);
      action.r1 = 100.0 * double(r1_hits) / double(action.n_queries);
    }
    report.r1 += double(r1_hits);
    report.n_queries += action.n_queries;
    report.n_excluded += action.n_excluded;
    report.per_action.push_back(std::move(action));
  }
  std::sort(query_aps.begin(), query_aps.end());
  double ap_total = 0.0;
  for (const auto& [q, ap] : query_aps) ap_total += ap;
  if (report.n_queries > 0) {
    report.map = 100.0 * ap_total / double(report.n_queries);
    report.r1 = 100.0 * report.r1 / double(report.n_queries);
  } else {
    report.map = 0.0;
    report.r1 = 0.0;
  }
  return report;
}

// Everything below is the deliberately naive cross-check: exhaustive
// distance table, plain sorts, direct AP summation.
EvalReport oracle_evaluate(const Dataset& dataset, const Matrixd& embeddings,
                           Metric metric, Split split) {
  const auto& samples = dataset.samples();
  if (embeddings.rows() != static_cast<Index>(samples.size())) {
    throw DataError("oracle_evaluate: embeddings cover " +
                    std::to_string(embeddings.rows()) + " rows but dataset has " +
                    std::to_string(samples.size()) + " samples");
  }
  const Index dim = embeddings.cols();

  auto naive_distance = [&](std::size_t a, std::size_t b) {
    if (metric == Metric::Euclidean) {
      double acc = 0.0;
      for (Index j = 0; j < dim; ++j) {
        double d = embeddings(static_cast<Index>(a), j) -
                   embeddings(static_cast<Index>(b), j);
        acc += d * d;
      }
      return std::sqrt(acc);
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Index j = 0; j < dim; ++j) {
      double xa = embeddings(static_cast<Index>(a), j);
      double xb = embeddings(static_cast<Index>(b), j);
      dot += xa * xb;
      na += xa * xa;
      nb += xb * xb;
    }
    if (na == 0.0 || nb == 0.0) {
      throw NumericError("oracle_evaluate: zero-norm row under cosine metric");
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::map<std::size_t, ActionEval> per_action;
  std::map<std::size_t, double> action_ap;
  std::map<std::size_t, int> action_r1;
  double ap_total = 0.0;
  int r1_total = 0, n_queries = 0, n_excluded = 0;

  for (std::size_t q = 0; q < samples.size(); ++q) {
    if (samples[q].split != split || samples[q].role != Role::Query) continue;
    std::size_t ai = samples[q].action_index;
    if (!per_action.count(ai)) {
      per_action[ai].action_id = dataset.actions()[ai].action_id;
    }

    std::vector<std::size_t> gallery;
    for (std::size_t g = 0; g < samples.size(); ++g) {
      if (samples[g].split == split && samples[g].role == Role::Gallery &&
          samples[g].action_index == ai) {
        gallery.push_back(g);
      }
    }
    int relevant = 0;
    for (std::size_t g : gallery) {
      relevant += samples[g].player_id == samples[q].player_id;
    }
    if (relevant == 0) {
      ++per_action[ai].n_excluded;
      ++n_excluded;
      continue;
    }

    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t g : gallery) ranked.emplace_back(naive_distance(q, g), g);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       return a.first < b.first;
                     });

    double ap = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      if (samples[ranked[k].second].player_id == samples[q].player_id) {
        ++hits;
        ap += double(hits) / double(k + 1);
      }
    }
    ap /= double(relevant);
    int top1 = samples[ranked.front().second].player_id ==
               samples[q].player_id;

    action_ap[ai] += ap;
    action_r1[ai] += top1;
    ++per_action[ai].n_queries;
    ap_total += ap;
    r1_total += top1;
    ++n_queries;
  }

  EvalReport report;
  for (auto& [ai, action] : per_action) {
    if (action.n_queries > 0) {
      action.map = 100.0 * action_ap[ai] / double(action.n_queries);
      action.r1 = 100.0 * double(action_r1[ai]) / double(action.n_queries);
    }
    report.per_action.push_back(action);
  }
  report.n_queries = n_queries;
  report.n_excluded = n_excluded;
  report.map = n_queries > 0 ? 100.0 * ap_total / double(n_queries) : 0.0;
  report.r1 = n_queries > 0 ? 100.0 * double(r1_total) / double(n_queries) : 0.0;
  return report;
}

}  // namespace reidforge
