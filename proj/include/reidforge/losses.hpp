#pragma once

#include <map>
#include <string>
#include <vector>

#include "reidforge/tensor.hpp"

// The embedding losses: batch-hard triplet mining and loss, the
// triplet-centroid hinge, the euclidean centroid loss over per-identity
// cluster centroids, softmax classification, and their weighted
// combination. Everything is differentiable through the tensor graph;
// mining itself operates on detached distance values.

namespace reidforge {

enum class Metric { Euclidean, Cosine };

inline std::string to_string(Metric metric) {
  return metric == Metric::Euclidean ? "euclidean" : "cosine";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::Euclidean;
  if (s == "cosine") return Metric::Cosine;
  throw DataError("unknown metric: \"" + s + "\"");
}

enum class CentroidMode { AsWritten, Separation };

struct LossWeights {
  double alpha = 0.9;   // triplet loss weight
  double beta = 0.5;    // classification loss weight
  double gamma = 0.5;   // centroid loss weight
  double delta = 0.0;   // triplet-centroid loss weight; 0 disables
  double margin = 0.3;     // triplet margin
  double margin_tc = 0.3;  // triplet-centroid margin
  CentroidMode centroid_mode = CentroidMode::Separation;
  double separation_margin = 1.0;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0) {
      throw DataError("loss weights must be non-negative");
    }
    if (margin < 0 || margin_tc < 0 || separation_margin < 0) {
      throw DataError("loss margins must be non-negative");
    }
  }
};

struct MiningResult {
  std::vector<Index> positive;  // hardest positive per anchor
  std::vector<Index> negative;  // hardest negative per anchor
  Eigen::VectorXd d_pos;
  Eigen::VectorXd d_neg;
};

namespace detail {

constexpr double kDistanceEps = 1e-12;

template <class Scalar>
void check_labels(const TensorT<Scalar>& emb, const std::vector<int>& labels,
                  const char* op) {
  if (static_cast<Index>(labels.size()) != emb.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                     " labels for " + emb.shape_str() + " tensor");
  }
}

inline std::map<int, std::vector<Index>> label_groups(
    const std::vector<int>& labels) {
  std::map<int, std::vector<Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i]].push_back(static_cast<Index>(i));
  }
  return groups;
}

// Per-anchor differentiable euclidean distance between emb rows and the
// rows of `other` gathered at `pick`.
template <class Scalar>
TensorT<Scalar> row_distances(const TensorT<Scalar>& emb,
                              const TensorT<Scalar>& other,
                              const std::vector<Index>& pick) {
  auto diff = sub(emb, gather_rows(other, pick));
  return sqrt_guarded(squared_norm_rows(diff), Scalar(kDistanceEps));
}

}  // namespace detail

// Full differentiable pairwise distance matrix. Euclidean entries are
// sqrt-guarded; cosine distance is 1 - cosine similarity on normalized
// rows. The diagonal is masked to exactly zero in both metrics.
template <class Scalar>
TensorT<Scalar> pairwise_distances(const TensorT<Scalar>& emb, Metric metric) {
  if (emb.rows() < 1) throw ShapeError("pairwise_distances: empty tensor");
  const Index n = emb.rows();
  DenseMatrix<Scalar> mask =
      DenseMatrix<Scalar>::Ones(n, n) - DenseMatrix<Scalar>::Identity(n, n);
  if (metric == Metric::Euclidean) {
    auto gram = matmul(emb, transpose(emb));
    auto sq = squared_norm_rows(emb);  // n x 1
    auto d2 = add(add(scale(gram, Scalar(-2)), transpose(sq)), sq);
    auto d = sqrt_guarded(relu(d2), Scalar(detail::kDistanceEps));
    return hadamard(d, TensorT<Scalar>(mask));
  }
  for (Index i = 0; i < n; ++i) {
    if (emb.value().row(i).squaredNorm() == Scalar(0)) {
      throw NumericError("pairwise_distances: zero-norm row " +
                         std::to_string(i) + " under cosine metric");
    }
  }
  auto inv_norm =
      reciprocal(sqrt_guarded(squared_norm_rows(emb), Scalar(detail::kDistanceEps)));
  auto unit = hadamard(emb, inv_norm);  // column broadcast
  auto sim = matmul(unit, transpose(unit));
  auto dist = sub(TensorT<Scalar>::constant(n, n, Scalar(1)), sim);
  return hadamard(dist, TensorT<Scalar>(mask));
}

// BATCH HARD mining on a detached distance matrix: per anchor, the
// farthest same-id sample (self excluded unless the id is a singleton) and
// the nearest different-id sample. Ties break toward the lowest index.
inline MiningResult batch_hard_mine(const Matrixd& distances,
                                    const std::vector<int>& labels) {
  const Index n = distances.rows();
  if (distances.cols() != n) {
    throw ShapeError("batch_hard_mine: distance matrix is not square");
  }
  if (static_cast<Index>(labels.size()) != n) {
    throw ShapeError("batch_hard_mine: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " samples");
  }
  bool two_ids = false;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    two_ids = two_ids || labels[i] != labels[0];
  }
  if (!two_ids) {
    throw DataError("batch_hard_mine: batch contains a single identity");
  }
  MiningResult out;
  out.positive.resize(static_cast<std::size_t>(n));
  out.negative.resize(static_cast<std::size_t>(n));
  out.d_pos.resize(n);
  out.d_neg.resize(n);
  for (Index a = 0; a < n; ++a) {
    Index best_p = a;  // singleton ids fall back to the anchor itself
    double best_pd = 0.0;
    bool has_p = false;
    Index best_n = -1;
    double best_nd = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[std::size_t(j)] == labels[std::size_t(a)]) {
        if (!has_p || distances(a, j) > best_pd) {
          has_p = true;
          best_p = j;
          best_pd = distances(a, j);
        }
      } else {
        if (best_n < 0 || distances(a, j) < best_nd) {
          best_n = j;
          best_nd = distances(a, j);
        }
      }
    }
    out.positive[std::size_t(a)] = best_p;
    out.negative[std::size_t(a)] = best_n;
    out.d_pos(a) = has_p ? best_pd : 0.0;
    out.d_neg(a) = best_nd;
  }
  return out;
}

template <class Scalar>
struct TripletLossResult {
  TensorT<Scalar> total;       // 1x1
  TensorT<Scalar> per_anchor;  // n x 1 hinge terms
  MiningResult mining;
};

// Sum over anchors of [margin + D(A,P) - D(A,N)]_+ with batch-hard P, N.
template <class Scalar>
TripletLossResult<Scalar> triplet_loss_detailed(const TensorT<Scalar>& emb,
                                                const std::vector<int>& labels,
                                                Scalar margin) {
  detail::check_labels(emb, labels, "triplet_loss");
  auto dist = pairwise_distances(emb, Metric::Euclidean);
  MiningResult mining = batch_hard_mine(dist.value(), labels);
  auto d_pos = detail::row_distances(emb, emb, mining.positive);
  auto d_neg = detail::row_distances(emb, emb, mining.negative);
  auto per_anchor = relu(add_scalar(sub(d_pos, d_neg), margin));
  TripletLossResult<Scalar> out{sum(per_anchor), per_anchor, std::move(mining)};
  return out;
}

template <class Scalar>
TensorT<Scalar> triplet_loss(const TensorT<Scalar>& emb,
                             const std::vector<int>& labels, Scalar margin) {
  return triplet_loss_detailed(emb, labels, margin).total;
}

namespace detail {

// Rows of per-identity centroids, one row per group in sorted label order,
// plus the centroid of each group's complement.
template <class Scalar>
struct GroupCentroids {
  std::vector<int> group_labels;
  std::vector<Index> group_of_row;  // anchor row -> group position
  TensorT<Scalar> own;              // G x d cluster-I centroids
  TensorT<Scalar> rest;             // G x d cluster-II centroids
};

template <class Scalar>
GroupCentroids<Scalar> group_centroids(const TensorT<Scalar>& emb,
                                       const std::vector<int>& labels) {
  auto groups = label_groups(labels);
  const Index n = emb.rows();
  auto total_sum = scale(mean_rows(emb), Scalar(n));  // 1 x d

  GroupCentroids<Scalar> out;
  std::map<int, Index> group_pos;
  std::vector<TensorT<Scalar>> own_rows, rest_rows;
  for (const auto& [label, rows] : groups) {
    group_pos[label] = static_cast<Index>(own_rows.size());
    out.group_labels.push_back(label);
    const Index k = static_cast<Index>(rows.size());
    auto own = mean_rows(gather_rows(emb, rows));  // 1 x d
    own_rows.push_back(own);
    if (n == k) {
      throw DataError("centroid loss: batch contains a single identity");
    }
    auto rest = scale(sub(total_sum, scale(own, Scalar(k))),
                      Scalar(1) / Scalar(n - k));
    rest_rows.push_back(rest);
  }
  out.own = concat_rows(own_rows);
  out.rest = concat_rows(rest_rows);
  out.group_of_row.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.group_of_row[i] = group_pos.at(labels[i]);
  }
  return out;
}

}  // namespace detail

// Sum over anchors of [margin + D(A, Centroid_P) - D(A, Centroid_N)]_+,
// where Centroid_P is the mean embedding of the anchor's identity and
// Centroid_N the mean of all other samples in the batch.
template <class Scalar>
TripletLossResult<Scalar> triplet_centroid_loss_detailed(
    const TensorT<Scalar>& emb, const std::vector<int>& labels,
    Scalar margin_tc) {
  detail::check_labels(emb, labels, "triplet_centroid_loss");
  auto centroids = detail::group_centroids(emb, labels);
  auto d_pos =
      detail::row_distances(emb, centroids.own, centroids.group_of_row);
  auto d_neg =
      detail::row_distances(emb, centroids.rest, centroids.group_of_row);
  auto per_anchor = relu(add_scalar(sub(d_pos, d_neg), margin_tc));
  TripletLossResult<Scalar> out{sum(per_anchor), per_anchor, {}};
  return out;
}

template <class Scalar>
TensorT<Scalar> triplet_centroid_loss(const TensorT<Scalar>& emb,
                                      const std::vector<int>& labels,
                                      Scalar margin_tc) {
  return triplet_centroid_loss_detailed(emb, labels, margin_tc).total;
}

template <class Scalar>
struct CentroidLossResult {
  TensorT<Scalar> total;   // 1x1
  TensorT<Scalar> per_id;  // G x 1 terms in sorted label order
  std::vector<int> group_labels;
};

// Per identity, cluster-I is the identity's samples and cluster-II the
// rest of the batch. As written, the loss is the squared norm of the
// centroid difference, summed over identities; separation mode applies the
// hinge [separation_margin - ||C_I - C_II||]_+ instead, so that minimizing
// it pushes the two centroids apart.
template <class Scalar>
CentroidLossResult<Scalar> centroid_loss_detailed(
    const TensorT<Scalar>& emb, const std::vector<int>& labels,
    CentroidMode mode, Scalar separation_margin) {
  detail::check_labels(emb, labels, "centroid_loss");
  auto centroids = detail::group_centroids(emb, labels);
  auto diff = sub(centroids.own, centroids.rest);  // G x d
  auto sq = squared_norm_rows(diff);               // G x 1
  TensorT<Scalar> per_id;
  if (mode == CentroidMode::AsWritten) {
    per_id = sq;
  } else {
    auto dist = sqrt_guarded(sq, Scalar(detail::kDistanceEps));
    per_id = relu(add_scalar(scale(dist, Scalar(-1)), separation_margin));
  }
  CentroidLossResult<Scalar> out{sum(per_id), per_id, centroids.group_labels};
  return out;
}

template <class Scalar>
TensorT<Scalar> centroid_loss(const TensorT<Scalar>& emb,
                              const std::vector<int>& labels, CentroidMode mode,
                              Scalar separation_margin) {
  return centroid_loss_detailed(emb, labels, mode, separation_margin).total;
}

// Mean negative log softmax probability of the true class.
template <class Scalar>
TensorT<Scalar> classification_loss(const TensorT<Scalar>& logits,
                                    const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw ShapeError("classification_loss: " + std::to_string(labels.size()) +
                     " labels for " + logits.shape_str() + " tensor");
  }
  const Index n = logits.rows(), c = logits.cols();
  DenseMatrix<Scalar> onehot = DenseMatrix<Scalar>::Zero(n, c);
  for (Index i = 0; i < n; ++i) {
    int label = labels[std::size_t(i)];
    if (label < 0 || label >= c) {
      throw DataError("classification_loss: label " + std::to_string(label) +
                      " out of range for " + std::to_string(c) + " classes");
    }
    onehot(i, label) = Scalar(1);
  }
  auto probs = softmax_rows(logits);
  auto picked = matmul(hadamard(probs, TensorT<Scalar>(onehot)),
                       TensorT<Scalar>::constant(c, 1, Scalar(1)));
  return scale(sum(log(picked)), Scalar(-1) / Scalar(n));
}

template <class Scalar>
struct CombinedLoss {
  TensorT<Scalar> total;  // 1x1, alpha*L_T + beta*L_C + gamma*L_Cen + delta*L_TC
  Scalar triplet = 0;     // unweighted term values
  Scalar classification = 0;
  Scalar centroid = 0;
  Scalar triplet_centroid = 0;
};

template <class Scalar>
CombinedLoss<Scalar> combined_loss(const TensorT<Scalar>& emb,
                                   const TensorT<Scalar>& logits,
                                   const std::vector<int>& labels,
                                   const LossWeights& w) {
  w.validate();
  CombinedLoss<Scalar> out;
  auto lt = triplet_loss(emb, labels, Scalar(w.margin));
  auto lc = classification_loss(logits, labels);
  auto lcen = centroid_loss(emb, labels, w.centroid_mode,
                            Scalar(w.separation_margin));
  auto ltc = triplet_centroid_loss(emb, labels, Scalar(w.margin_tc));
  out.triplet = lt.scalar();
  out.classification = lc.scalar();
  out.centroid = lcen.scalar();
  out.triplet_centroid = ltc.scalar();
  out.total = TensorT<Scalar>::constant(1, 1, Scalar(0));
  if (w.alpha > 0) out.total = add(out.total, scale(lt, Scalar(w.alpha)));
  if (w.beta > 0) out.total = add(out.total, scale(lc, Scalar(w.beta)));
  if (w.gamma > 0) out.total = add(out.total, scale(lcen, Scalar(w.gamma)));
  if (w.delta > 0) out.total = add(out.total, scale(ltc, Scalar(w.delta)));
  return out;
}

}  // namespace reidforge
