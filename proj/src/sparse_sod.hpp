// Subset of data: exact GP on an active set chosen by a selection policy.
#pragma once

#include "gp_exact.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sqdm {

enum class ActiveSetKind { SlidingWindow, EvolvingGP, Clustering };

struct ActiveSetPolicy {
  ActiveSetKind kind = ActiveSetKind::SlidingWindow;
  std::size_t capacity = 1;
  double egp_err_threshold = 0.005;   // V
  double egp_var_threshold = 2.5e-5;  // V^2
  int k_clusters = 2;
  std::uint64_t cluster_seed = 1;

  void validate() const;
};

/// Ordered subset of a stream, oldest first, at most `capacity` points.
struct ActiveSet {
  std::size_t capacity = 1;
  std::vector<SamplePoint> points;

  std::size_t size() const { return points.size(); }
  Inputs inputs() const;
  Vector targets() const;
};

/// FIFO append; evicts the oldest point when over capacity.
ActiveSet update_sliding(ActiveSet set, const SamplePoint& p);

/// Admits `p` only if the current model mispredicts it by more than the error
/// threshold or is more uncertain than the variance threshold. `model` must
/// be fitted on `set` (nullptr when the set is empty). At capacity the oldest
/// point makes room.
std::pair<ActiveSet, bool> update_evolving(ActiveSet set, const FitState* model, const ActiveSetPolicy& policy,
                                           const SamplePoint& p);

struct Clusters {
  std::vector<Eigen::Vector2d> centroids;
  std::vector<ActiveSet> sets;
  int iterations = 0;
};

/// Lloyd's k-means with the covariance function as similarity (larger is
/// closer) and input-space means as centroids.
Clusters cluster_kmeans(const Dataset& data, int k, KernelKind kind, const HyperParams& h, std::uint64_t seed = 1);

/// Index of the centroid most similar to x under the kernel.
std::size_t nearest_centroid(const Clusters& c, const Eigen::Vector2d& x, KernelKind kind, const HyperParams& h);

/// Runs the policy over the stream, fits exact GPs on the resulting active
/// set(s) and predicts. Clustering routes each test input to the model of its
/// most similar centroid.
GpPosterior predict_sod(const ActiveSetPolicy& policy, const Dataset& stream, const Inputs& test, KernelKind kind,
                        const HyperParams& h);

/// Builds the active set by streaming `stream` through the policy (sliding
/// or evolving). Clustering uses the sliding window as its pool.
ActiveSet build_active_set(const ActiveSetPolicy& policy, const Dataset& stream, KernelKind kind,
                           const HyperParams& h);

}  // namespace sqdm
