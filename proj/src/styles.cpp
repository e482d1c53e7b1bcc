#include "drivestyle/styles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "drivestyle/error.hpp"

namespace drivestyle {

RiskMetrics compute_risk_metrics(const std::optional<LeadGap>& lead, double v_ego) {
  RiskMetrics m;
  if (!lead) return m;
  if (lead->distance <= 0.0) {
    throw DataError("non-positive gap " + std::to_string(lead->distance) + " m to the lead vehicle");
  }
  if (v_ego >= kThwMinSpeed) m.thw = lead->distance / v_ego;
  m.ittc = std::max(lead->closing_speed, 0.0) / lead->distance;
  return m;
}

RiskLevel classify_risk(const RiskMetrics& metrics, const RiskThresholds& thresholds) {
  const bool short_headway = metrics.thw < thresholds.thw;
  const bool closing_fast = metrics.ittc > thresholds.ittc;
  if (!short_headway && !closing_fast) return RiskLevel::kLow;
  if (short_headway && closing_fast) return RiskLevel::kHigh;
  return RiskLevel::kMedium;
}

std::optional<LeadGap> lead_gap(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout) {
  const NeighborSet slots = find_neighbors(scene, ego, layout);
  const auto& front = slots[static_cast<std::size_t>(NeighborSlot::kSameFront)];
  if (!front) return std::nullopt;
  return LeadGap{scene[*front].x - scene[ego].x, scene[ego].speed - scene[*front].speed};
}

namespace {

RiskProfile profile_of_track(const Episode& episode, std::size_t track_index, const RiskThresholds& thresholds) {
  const AgentTrack& track = episode.tracks[track_index];
  std::array<int, 3> counts{};
  for (int step = track.start_step; step < track.end_step(); ++step) {
    const Scene scene = scene_at(episode, step);
    const auto pos = std::find(scene.track_indices.begin(), scene.track_indices.end(), track_index);
    const auto ego = static_cast<std::size_t>(pos - scene.track_indices.begin());
    const RiskMetrics m = compute_risk_metrics(lead_gap(scene.states, ego, episode.layout), scene.states[ego].speed);
    ++counts[static_cast<std::size_t>(classify_risk(m, thresholds))];
  }
  RiskProfile p;
  p.agent_id = track.agent_id;
  const double total = static_cast<double>(track.states.size());
  for (std::size_t i = 0; i < 3; ++i) p.ratios[i] = counts[i] / total;
  return p;
}

}  // namespace

RiskProfile risk_profile(const Episode& episode, std::string_view agent_id, const RiskThresholds& thresholds) {
  const auto idx = episode.track_index(agent_id);
  if (!idx) throw DataError("episode '" + episode.id + "' has no agent '" + std::string(agent_id) + "'");
  return profile_of_track(episode, *idx, thresholds);
}

std::vector<RiskProfile> risk_profiles(const Episode& episode, const RiskThresholds& thresholds) {
  const auto n = static_cast<std::ptrdiff_t>(episode.tracks.size());
  std::vector<RiskProfile> out(episode.tracks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = profile_of_track(episode, static_cast<std::size_t>(i), thresholds);
  }
  return out;
}

std::vector<RiskProfile> risk_profiles_serial(const Episode& episode, const RiskThresholds& thresholds) {
  std::vector<RiskProfile> out;
  out.reserve(episode.tracks.size());
  for (std::size_t i = 0; i < episode.tracks.size(); ++i) out.push_back(profile_of_track(episode, i, thresholds));
  return out;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(const RatioPoint& a, const RatioPoint& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<RatioPoint> kmeanspp_init(std::span<const RatioPoint> points, int k, std::mt19937_64& rng) {
  std::vector<RatioPoint> centroids;
  centroids.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(points[i], centroids.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      centroids.push_back(points[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      target -= d2[i];
      if (target <= 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    centroids.push_back(points[chosen]);
  }
  return centroids;
}

// Returns the inertia of the new assignment.
double assign(std::span<const RatioPoint> points, const std::vector<RatioPoint>& centroids,
              std::vector<int>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    int best = 0;
    double best_d = sq_dist(points[i], centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      const double d = sq_dist(points[i], centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignments[i] = best;
    inertia += best_d;
  }
  return inertia;
}

std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  std::array<std::uint64_t, 1> out{};
  seq.generate(reinterpret_cast<std::uint32_t*>(out.data()), reinterpret_cast<std::uint32_t*>(out.data() + 1));
  return out[0];
}

void check_kmeans_input(std::span<const RatioPoint> points, const KMeansOptions& options) {
  if (options.k < 1) throw UsageError("k must be >= 1");
  if (static_cast<int>(points.size()) < options.k) {
    throw UsageError("k-means needs at least k = " + std::to_string(options.k) + " points, got " +
                     std::to_string(points.size()));
  }
  if (options.restarts < 1) throw UsageError("k-means needs at least one restart");
}

ClusteringModel merge_runs(std::vector<KMeansRun>&& runs, int k) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  ClusteringModel model;
  model.k = k;
  model.centroids = runs[best].centroids;
  model.assignments = runs[best].assignments;
  model.inertia = runs[best].inertia;
  for (auto& r : runs) model.inertia_histories.push_back(std::move(r.inertia_history));
  model.style_labels = label_clusters(model.centroids);
  return model;
}

}  // namespace

KMeansRun kmeans_run(std::span<const RatioPoint> points, int k, std::uint64_t seed, int max_iters,
                     double tolerance) {
  std::mt19937_64 rng(seed);
  KMeansRun run;
  run.centroids = kmeanspp_init(points, k, rng);
  run.assignments.assign(points.size(), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    run.inertia = assign(points, run.centroids, run.assignments);
    run.inertia_history.push_back(run.inertia);
    run.iterations = iter + 1;

    std::vector<RatioPoint> sums(static_cast<std::size_t>(k), RatioPoint{});
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(run.assignments[i]);
      for (std::size_t d = 0; d < 3; ++d) sums[c][d] += points[i][d];
      ++counts[c];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < sums.size(); ++c) {
      RatioPoint next;
      if (counts[c] == 0) {
        // Empty cluster: move it onto the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = sq_dist(points[i], run.centroids[static_cast<std::size_t>(run.assignments[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next = points[far];
        run.assignments[far] = static_cast<int>(c);
      } else {
        for (std::size_t d = 0; d < 3; ++d) next[d] = sums[c][d] / counts[c];
      }
      shift = std::max(shift, std::sqrt(sq_dist(next, run.centroids[c])));
      run.centroids[c] = next;
    }
    if (shift < tolerance) break;
  }
  run.inertia = assign(points, run.centroids, run.assignments);
  return run;
}

ClusteringModel kmeans_fit(std::span<const RatioPoint> points, const KMeansOptions& options) {
  check_kmeans_input(points, options);
  std::vector<KMeansRun> runs(static_cast<std::size_t>(options.restarts));
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < options.restarts; ++r) {
    runs[static_cast<std::size_t>(r)] =
        kmeans_run(points, options.k, restart_seed(options.seed, r), options.max_iters, options.tolerance);
  }
  return merge_runs(std::move(runs), options.k);
}

ClusteringModel kmeans_fit_serial(std::span<const RatioPoint> points, const KMeansOptions& options) {
  check_kmeans_input(points, options);
  std::vector<KMeansRun> runs;
  for (int r = 0; r < options.restarts; ++r) {
    runs.push_back(kmeans_run(points, options.k, restart_seed(options.seed, r), options.max_iters, options.tolerance));
  }
  return merge_runs(std::move(runs), options.k);
}

// ---------------------------------------------------------------------------
// Validity indices

namespace {

void check_partition(std::span<const RatioPoint> points, std::span<const int> assignments, int k,
                     std::vector<int>& counts) {
  if (k < 2) throw UsageError("validity indices need k >= 2");
  if (points.size() != assignments.size()) throw UsageError("assignment count does not match point count");
  counts.assign(static_cast<std::size_t>(k), 0);
  for (int a : assignments) {
    if (a < 0 || a >= k) throw UsageError("assignment outside [0, k)");
    ++counts[static_cast<std::size_t>(a)];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw UsageError("cluster " + std::to_string(c) + " is empty");
    }
  }
}

double point_silhouette(std::span<const RatioPoint> points, std::span<const int> assignments,
                        const std::vector<int>& counts, std::size_t i) {
  const auto own = static_cast<std::size_t>(assignments[i]);
  if (counts[own] == 1) return 0.0;
  std::vector<double> sums(counts.size(), 0.0);
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == i) continue;
    sums[static_cast<std::size_t>(assignments[j])] += std::sqrt(sq_dist(points[i], points[j]));
  }
  const double a = sums[own] / (counts[own] - 1);
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c != own) b = std::min(b, sums[c] / counts[c]);
  }
  const double denom = std::max(a, b);
  return denom > 0.0 ? (b - a) / denom : 0.0;
}

}  // namespace

double silhouette(std::span<const RatioPoint> points, std::span<const int> assignments, int k) {
  std::vector<int> counts;
  check_partition(points, assignments, k, counts);
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  std::vector<double> per_point(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    per_point[static_cast<std::size_t>(i)] = point_silhouette(points, assignments, counts, static_cast<std::size_t>(i));
  }
  return std::accumulate(per_point.begin(), per_point.end(), 0.0) / static_cast<double>(n);
}

double silhouette_serial(std::span<const RatioPoint> points, std::span<const int> assignments, int k) {
  std::vector<int> counts;
  check_partition(points, assignments, k, counts);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += point_silhouette(points, assignments, counts, i);
  return total / static_cast<double>(points.size());
}

ValidityIndices validity_indices(std::span<const RatioPoint> points, std::span<const int> assignments, int k) {
  std::vector<int> counts;
  check_partition(points, assignments, k, counts);
  const auto kk = static_cast<std::size_t>(k);
  std::vector<RatioPoint> centroids(kk, RatioPoint{});
  RatioPoint mean{};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignments[i]);
    for (std::size_t d = 0; d < 3; ++d) {
      centroids[c][d] += points[i][d];
      mean[d] += points[i][d];
    }
  }
  for (std::size_t c = 0; c < kk; ++c) {
    for (std::size_t d = 0; d < 3; ++d) centroids[c][d] /= counts[c];
  }
  for (std::size_t d = 0; d < 3; ++d) mean[d] /= static_cast<double>(points.size());

  std::vector<double> scatter(kk, 0.0);
  double within = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignments[i]);
    scatter[c] += std::sqrt(sq_dist(points[i], centroids[c]));
    within += sq_dist(points[i], centroids[c]);
  }
  for (std::size_t c = 0; c < kk; ++c) scatter[c] /= counts[c];

  ValidityIndices out;
  out.silhouette = silhouette(points, assignments, k);

  double db = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < kk; ++j) {
      if (i == j) continue;
      const double sep = std::sqrt(sq_dist(centroids[i], centroids[j]));
      const double r = sep > 0.0 ? (scatter[i] + scatter[j]) / sep : std::numeric_limits<double>::infinity();
      worst = std::max(worst, r);
    }
    db += worst;
  }
  out.davies_bouldin = db / static_cast<double>(kk);

  double between = 0.0;
  for (std::size_t c = 0; c < kk; ++c) between += counts[c] * sq_dist(centroids[c], mean);
  const double n = static_cast<double>(points.size());
  if (within <= 0.0 || n <= k) {
    out.calinski_harabasz = 1.0;
  } else {
    out.calinski_harabasz = (between / (k - 1)) / (within / (n - k));
  }
  return out;
}

std::vector<std::optional<DrivingStyle>> label_clusters(std::span<const RatioPoint> centroids) {
  std::vector<std::optional<DrivingStyle>> labels(centroids.size());
  if (centroids.size() != 3) return labels;

  // Picks the unlabeled cluster maximizing ratio `dim`; ties prefer the
  // smaller medium ratio, then the lower index.
  auto pick = [&](std::size_t dim) {
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (labels[c]) continue;
      if (!best) {
        best = c;
        continue;
      }
      const auto& cand = centroids[c];
      const auto& cur = centroids[*best];
      if (cand[dim] > cur[dim] || (cand[dim] == cur[dim] && cand[1] < cur[1])) best = c;
    }
    return *best;
  };
  labels[pick(2)] = DrivingStyle::kAggressive;
  labels[pick(0)] = DrivingStyle::kCautious;
  for (auto& l : labels) {
    if (!l) l = DrivingStyle::kNormal;
  }
  return labels;
}

// ---------------------------------------------------------------------------

nlohmann::json style_assignments_to_json(std::span<const StyleAssignment> assignments) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& a : assignments) {
    doc[a.agent_key] = {{"cluster", a.cluster},
                        {"style", a.style ? std::string(style_name(*a.style)) : std::string("unlabeled")},
                        {"ratios", {a.ratios[0], a.ratios[1], a.ratios[2]}}};
  }
  return doc;
}

std::vector<StyleAssignment> style_assignments_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("assignments", "expected an object");
  std::vector<StyleAssignment> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    StyleAssignment a;
    a.agent_key = it.key();
    const auto& v = it.value();
    if (!v.contains("cluster") || !v.contains("style") || !v.contains("ratios")) {
      throw ParseError("assignments." + it.key(), "missing cluster/style/ratios");
    }
    a.cluster = v.at("cluster").get<int>();
    a.style = parse_style(v.at("style").get<std::string>());
    const auto& r = v.at("ratios");
    if (!r.is_array() || r.size() != 3) throw ParseError("assignments." + it.key() + ".ratios", "expected 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) a.ratios[i] = r[i].get<double>();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace drivestyle
