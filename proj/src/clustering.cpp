#include "dsc/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

double sq_dist(const Mat& a, std::size_t i, const Mat& b, std::size_t j) {
  const double* x = a.row(i);
  const double* y = b.row(j);
  double acc = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    const double d = x[c] - y[c];
    acc += d * d;
  }
  return acc;
}

// Farthest point from its nearest live centroid, for re-seeding.
std::size_t farthest_point(const Mat& points, const Mat& centroids,
                           const std::vector<bool>& live) {
  std::size_t best_point = 0;
  double best = -1.0;
  for (std::size_t t = 0; t < points.rows; ++t) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.rows; ++k) {
      if (!live[k]) continue;
      nearest = std::min(nearest, sq_dist(points, t, centroids, k));
    }
    if (nearest > best) {
      best = nearest;
      best_point = t;
    }
  }
  return best_point;
}

}  // namespace

int ClusterState::predicted_class(std::size_t row) const {
  std::size_t arg = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (memberships.at(row, c) > memberships.at(row, arg)) arg = c;
  }
  return pseudo_labels[arg];
}

std::vector<std::size_t> kmeans_assign(const Mat& points, const Mat& centroids) {
  if (centroids.rows == 0 || points.cols != centroids.cols) {
    throw DataError("kmeans_assign: points " + std::to_string(points.cols) +
                    "-dim vs centroids " + std::to_string(centroids.cols) + "-dim, K=" +
                    std::to_string(centroids.rows));
  }
  std::vector<std::size_t> out(points.rows);
  for (std::size_t t = 0; t < points.rows; ++t) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < centroids.rows; ++k) {
      const double d2 = sq_dist(points, t, centroids, k);
      if (d2 < best) {
        best = d2;
        arg = k;
      }
    }
    out[t] = arg;
  }
  return out;
}

Mat kmeans_update(const Mat& points, const std::vector<std::size_t>& assignments, std::size_t k,
                  std::vector<RepairEvent>* repairs) {
  if (assignments.size() != points.rows) {
    throw DataError("kmeans_update: assignment count mismatch");
  }
  Mat mu(k, points.cols);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t t = 0; t < points.rows; ++t) {
    const std::size_t c = assignments[t];
    count[c]++;
    for (std::size_t j = 0; j < points.cols; ++j) mu.at(c, j) += points.at(t, j);
  }
  std::vector<bool> live(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    live[c] = true;
    for (std::size_t j = 0; j < points.cols; ++j) mu.at(c, j) /= static_cast<double>(count[c]);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (live[c]) continue;
    const std::size_t p = farthest_point(points, mu, live);
    for (std::size_t j = 0; j < points.cols; ++j) mu.at(c, j) = points.at(p, j);
    live[c] = true;
    if (repairs) repairs->push_back(RepairEvent{c, p});
  }
  return mu;
}

double kmeans_loss(const Mat& points, const Mat& centroids,
                   const std::vector<std::size_t>& assignments) {
  double acc = 0.0;
  for (std::size_t t = 0; t < points.rows; ++t) {
    acc += sq_dist(points, t, centroids, assignments[t]);
  }
  return acc;
}

double fuzzy_distance_weight(double norm) {
  return (norm + 2.0) / ((norm + 1.0) * (norm + 1.0));
}

Mat membership_from_q(const Mat& q, double gamma) {
  if (gamma <= 0.0) throw DataError("membership: gamma must be positive");
  Mat u(q.rows, q.cols);
  const double scale = -2.0 / gamma;
  for (std::size_t t = 0; t < q.rows; ++t) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < q.cols; ++k) hi = std::max(hi, scale * q.at(t, k));
    double denom = 0.0;
    for (std::size_t k = 0; k < q.cols; ++k) {
      u.at(t, k) = std::exp(scale * q.at(t, k) - hi);
      denom += u.at(t, k);
    }
    for (std::size_t k = 0; k < q.cols; ++k) u.at(t, k) /= denom;
  }
  return u;
}

Mat cmeans_membership(const Mat& points, const Mat& centroids, double gamma) {
  if (centroids.rows == 0 || points.cols != centroids.cols) {
    throw DataError("cmeans_membership: dimension mismatch");
  }
  Mat q(points.rows, centroids.rows);
  for (std::size_t t = 0; t < points.rows; ++t) {
    for (std::size_t k = 0; k < centroids.rows; ++k) {
      const double d2 = sq_dist(points, t, centroids, k);
      q.at(t, k) = d2 / (1.0 + d2);
    }
  }
  return membership_from_q(q, gamma);
}

Mat cmeans_centroids(const Mat& points, const Mat& u, const Mat& prev_centroids,
                     std::vector<RepairEvent>* repairs) {
  if (u.rows != points.rows || u.cols != prev_centroids.rows ||
      points.cols != prev_centroids.cols) {
    throw DataError("cmeans_centroids: shape mismatch");
  }
  const std::size_t k = prev_centroids.rows;
  Mat mu(k, points.cols);
  std::vector<bool> live(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    double denom = 0.0;
    std::vector<double> num(points.cols, 0.0);
    for (std::size_t t = 0; t < points.rows; ++t) {
      const double nrm = std::sqrt(sq_dist(points, t, prev_centroids, c));
      const double w = fuzzy_distance_weight(nrm) * u.at(t, c);
      denom += w;
      for (std::size_t j = 0; j < points.cols; ++j) num[j] += w * points.at(t, j);
    }
    if (denom > 0.0) {
      live[c] = true;
      for (std::size_t j = 0; j < points.cols; ++j) mu.at(c, j) = num[j] / denom;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (live[c]) continue;
    const std::size_t p = farthest_point(points, mu, live);
    for (std::size_t j = 0; j < points.cols; ++j) mu.at(c, j) = points.at(p, j);
    live[c] = true;
    if (repairs) repairs->push_back(RepairEvent{c, p});
  }
  return mu;
}

CmeansLoss cmeans_loss(const Mat& points, const Mat& centroids, const Mat& u) {
  if (u.rows != points.rows || u.cols != centroids.rows || points.cols != centroids.cols) {
    throw DataError("cmeans_loss: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t t = 0; t < points.rows; ++t) {
    for (std::size_t k = 0; k < centroids.rows; ++k) {
      acc += u.at(t, k) * sq_dist(points, t, centroids, k);
    }
  }
  CmeansLoss out;
  out.unnormalized = acc;
  out.normalized = points.rows > 0 ? acc / static_cast<double>(points.rows) : 0.0;
  return out;
}

ClusterState seed(const std::vector<int>& window_labels, std::size_t k, const Mat& points,
                  double gamma) {
  if (k < 2) throw DataError("seed: need at least 2 clusters for classification");
  if (window_labels.size() != points.rows) {
    throw DataError("seed: label count " + std::to_string(window_labels.size()) +
                    " does not match point count " + std::to_string(points.rows));
  }
  std::set<int> distinct(window_labels.begin(), window_labels.end());
  if (distinct.size() != k) {
    throw DataError("seed: labels span " + std::to_string(distinct.size()) +
                    " classes, expected " + std::to_string(k));
  }
  for (int lab : window_labels) {
    if (lab < 0 || static_cast<std::size_t>(lab) >= k) {
      throw DataError("seed: label " + std::to_string(lab) + " outside [0," + std::to_string(k) +
                      ")");
    }
  }
  ClusterState cs;
  cs.k = k;
  cs.gamma = gamma;
  cs.memberships = Mat(points.rows, k);
  std::vector<std::size_t> count(k, 0);
  cs.centroids = Mat(k, points.cols);
  for (std::size_t t = 0; t < points.rows; ++t) {
    const auto c = static_cast<std::size_t>(window_labels[t]);
    cs.memberships.at(t, c) = 1.0;
    count[c]++;
    for (std::size_t j = 0; j < points.cols; ++j) cs.centroids.at(c, j) += points.at(t, j);
  }
  // no prior centroids exist, so the distance weight is uniform and the
  // seeded centroid reduces to the plain class mean
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < points.cols; ++j) {
      cs.centroids.at(c, j) /= static_cast<double>(count[c]);
    }
  }
  cs.pseudo_labels.resize(k);
  for (std::size_t c = 0; c < k; ++c) cs.pseudo_labels[c] = static_cast<int>(c);
  return cs;
}

SilhouetteResult silhouette(const Mat& points, const std::vector<std::size_t>& assignments) {
  if (assignments.size() != points.rows) {
    throw DataError("silhouette: assignment count mismatch");
  }
  std::size_t k = 0;
  for (auto a : assignments) k = std::max(k, a + 1);
  std::vector<std::size_t> count(k, 0);
  for (auto a : assignments) count[a]++;
  std::size_t non_empty = 0;
  for (auto c : count) {
    if (c > 0) non_empty++;
  }
  if (non_empty < 2) {
    throw DataError("silhouette: need at least 2 non-empty clusters, got " +
                    std::to_string(non_empty));
  }

  SilhouetteResult res;
  res.per_point.assign(points.rows, 0.0);
  for (std::size_t i = 0; i < points.rows; ++i) {
    if (count[assignments[i]] <= 1) continue;  // singleton scores 0
    std::vector<double> sum_dist(k, 0.0);
    for (std::size_t j = 0; j < points.rows; ++j) {
      if (i == j) continue;
      sum_dist[assignments[j]] += std::sqrt(sq_dist(points, i, points, j));
    }
    const double a = sum_dist[assignments[i]] / static_cast<double>(count[assignments[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c == assignments[i] || count[c] == 0) continue;
      b = std::min(b, sum_dist[c] / static_cast<double>(count[c]));
    }
    const double m = std::max(a, b);
    res.per_point[i] = (m == 0.0) ? 0.0 : (b - a) / m;
  }

  double total = 0.0;
  for (double s : res.per_point) total += s;
  res.mean = total / static_cast<double>(points.rows);
  std::vector<double> sorted = res.per_point;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  res.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return res;
}

nlohmann::json cluster_state_to_json(const ClusterState& cs) {
  return {{"format", kClusterFormatTag},
          {"k", cs.k},
          {"gamma", cs.gamma},
          {"pseudo_labels", cs.pseudo_labels},
          {"centroid_rows", cs.centroids.rows},
          {"centroid_values", cs.centroids.d},
          {"membership_rows", cs.memberships.rows},
          {"membership_values", cs.memberships.d}};
}

ClusterState cluster_state_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kClusterFormatTag) {
    throw DataError("cluster state: missing or unsupported format tag");
  }
  ClusterState cs;
  cs.k = j.at("k").get<std::size_t>();
  cs.gamma = j.at("gamma").get<double>();
  cs.pseudo_labels = j.at("pseudo_labels").get<std::vector<int>>();
  const auto cr = j.at("centroid_rows").get<std::size_t>();
  cs.centroids.d = j.at("centroid_values").get<std::vector<double>>();
  cs.centroids.rows = cr;
  cs.centroids.cols = cr > 0 ? cs.centroids.d.size() / cr : 0;
  const auto mr = j.at("membership_rows").get<std::size_t>();
  cs.memberships.d = j.at("membership_values").get<std::vector<double>>();
  cs.memberships.rows = mr;
  cs.memberships.cols = mr > 0 ? cs.memberships.d.size() / mr : 0;
  return cs;
}

}  // namespace dsc
