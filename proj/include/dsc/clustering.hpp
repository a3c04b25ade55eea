#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/mat.hpp"

namespace dsc {

struct ClusterState {
  std::size_t k = 0;
  Mat centroids;    // K x D
  Mat memberships;  // N x K, rows sum to 1 (one-hot for hard assignments)
  double gamma = 0.1;
  std::vector<int> pseudo_labels;  // cluster index -> class id

  int predicted_class(std::size_t row) const;
};

// Events where a cluster lost all support and was re-seeded.
struct RepairEvent {
  std::size_t cluster = 0;
  std::size_t reseeded_to_point = 0;
};

// Hard assignment to the nearest centroid by squared distance; ties break
// to the lowest cluster index.
std::vector<std::size_t> kmeans_assign(const Mat& points, const Mat& centroids);

// Mean of member points. Empty clusters are re-seeded to the point
// farthest from its nearest centroid and reported.
Mat kmeans_update(const Mat& points, const std::vector<std::size_t>& assignments, std::size_t k,
                  std::vector<RepairEvent>* repairs = nullptr);

double kmeans_loss(const Mat& points, const Mat& centroids,
                   const std::vector<std::size_t>& assignments);

// d_tk at a given point-to-centroid norm: (norm + 2) / (norm + 1)^2.
double fuzzy_distance_weight(double norm);

// Row-wise stabilized softmax of -(2/gamma) q.
Mat membership_from_q(const Mat& q, double gamma);

// u_tk = softmax over k of -(2/gamma) q_tk, q = d2/(1+d2).
Mat cmeans_membership(const Mat& points, const Mat& centroids, double gamma);

// mu_k = sum_t d_tk u_tk x_t / sum_s d_sk u_sk with d_tk evaluated against
// prev_centroids; zero-support clusters re-seeded as in k-means.
Mat cmeans_centroids(const Mat& points, const Mat& u, const Mat& prev_centroids,
                     std::vector<RepairEvent>* repairs = nullptr);

struct CmeansLoss {
  double normalized = 0.0;    // divided by N, the term used in the joint loss
  double unnormalized = 0.0;  // plain double sum
};
CmeansLoss cmeans_loss(const Mat& points, const Mat& centroids, const Mat& u);

// One-hot memberships from seed labels; pseudo_labels is the identity map
// onto the K seed classes; centroids from the weighted-mean rule.
ClusterState seed(const std::vector<int>& window_labels, std::size_t k, const Mat& points,
                  double gamma);

struct SilhouetteResult {
  std::vector<double> per_point;
  double mean = 0.0;
  double median = 0.0;
};
SilhouetteResult silhouette(const Mat& points, const std::vector<std::size_t>& assignments);

inline constexpr const char* kClusterFormatTag = "dsc.clusters/1";
nlohmann::json cluster_state_to_json(const ClusterState& cs);
ClusterState cluster_state_from_json(const nlohmann::json& j);

}  // namespace dsc
