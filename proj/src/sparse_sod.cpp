#include "sparse_sod.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sqdm {

void ActiveSetPolicy::validate() const {
  if (capacity < 1) throw std::invalid_argument("active set capacity must be >= 1");
  if (kind == ActiveSetKind::EvolvingGP && !(egp_err_threshold > 0.0 && egp_var_threshold > 0.0))
    throw std::invalid_argument("evolving GP thresholds must be positive");
  if (kind == ActiveSetKind::Clustering && k_clusters < 1) throw std::invalid_argument("k_clusters must be >= 1");
}

Inputs ActiveSet::inputs() const {
  Inputs x(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t k = 0; k < points.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = points[k].input.transpose();
  return x;
}

Vector ActiveSet::targets() const {
  Vector y(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) y(static_cast<Eigen::Index>(k)) = points[k].target;
  return y;
}

ActiveSet update_sliding(ActiveSet set, const SamplePoint& p) {
  set.points.push_back(p);
  if (set.points.size() > set.capacity)
    set.points.erase(set.points.begin(), set.points.begin() + static_cast<std::ptrdiff_t>(set.points.size() - set.capacity));
  return set;
}

std::pair<ActiveSet, bool> update_evolving(ActiveSet set, const FitState* model, const ActiveSetPolicy& policy,
                                           const SamplePoint& p) {
  bool accept = set.points.empty() || model == nullptr || model->size() == 0;
  if (!accept) {
    Inputs x(1, 2);
    x.row(0) = p.input.transpose();
    const GpPosterior post = predict(*model, x);
    accept = std::abs(post.mean(0) - p.target) > policy.egp_err_threshold || post.cov(0, 0) > policy.egp_var_threshold;
  }
  if (accept) set = update_sliding(std::move(set), p);
  return {std::move(set), accept};
}

Clusters cluster_kmeans(const Dataset& data, int k, KernelKind kind, const HyperParams& h, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(data.size());
  if (k < 1) throw std::invalid_argument("cluster_kmeans: k must be >= 1");
  if (n < k) throw std::invalid_argument("cluster_kmeans: fewer points than clusters");
  const Inputs x = data.inputs();

  // seeded choice of k distinct starting points
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (int c = 0; c < k; ++c) {
    std::uniform_int_distribution<Eigen::Index> pick(c, n - 1);
    std::swap(order[static_cast<std::size_t>(c)], order[static_cast<std::size_t>(pick(rng))]);
  }
  Inputs centroids(k, 2);
  for (int c = 0; c < k; ++c) centroids.row(c) = x.row(order[static_cast<std::size_t>(c)]);

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  Clusters out;
  for (int iter = 1; iter <= 100; ++iter) {
    const Matrix sim = kernel_matrix(kind, h, x, centroids);  // n x k
    bool changed = false;
    for (Eigen::Index p = 0; p < n; ++p) {
      Eigen::Index best = 0;
      sim.row(p).maxCoeff(&best);
      if (assign[static_cast<std::size_t>(p)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(p)] = static_cast<int>(best);
        changed = true;
      }
    }
    // empty clusters are re-seeded at the point least similar to its centroid
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index worst = -1;
      double worst_sim = std::numeric_limits<double>::infinity();
      for (Eigen::Index p = 0; p < n; ++p) {
        const int a = assign[static_cast<std::size_t>(p)];
        if (counts[static_cast<std::size_t>(a)] <= 1) continue;
        const double s = sim(p, a);
        if (s < worst_sim) {
          worst_sim = s;
          worst = p;
        }
      }
      if (worst < 0) continue;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(worst)])];
      assign[static_cast<std::size_t>(worst)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }
    centroids.setZero();
    for (Eigen::Index p = 0; p < n; ++p) centroids.row(assign[static_cast<std::size_t>(p)]) += x.row(p);
    for (int c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    out.iterations = iter;
    if (!changed) break;
  }

  out.centroids.resize(static_cast<std::size_t>(k));
  out.sets.assign(static_cast<std::size_t>(k), ActiveSet{data.size(), {}});
  for (int c = 0; c < k; ++c) out.centroids[static_cast<std::size_t>(c)] = centroids.row(c).transpose();
  for (Eigen::Index p = 0; p < n; ++p)
    out.sets[static_cast<std::size_t>(assign[static_cast<std::size_t>(p)])].points.push_back(
        data.points[static_cast<std::size_t>(p)]);
  return out;
}

std::size_t nearest_centroid(const Clusters& c, const Eigen::Vector2d& x, KernelKind kind, const HyperParams& h) {
  Inputs cx(static_cast<Eigen::Index>(c.centroids.size()), 2);
  for (std::size_t k = 0; k < c.centroids.size(); ++k) cx.row(static_cast<Eigen::Index>(k)) = c.centroids[k].transpose();
  Inputs p(1, 2);
  p.row(0) = x.transpose();
  Eigen::Index best = 0;
  kernel_matrix(kind, h, p, cx).row(0).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

ActiveSet build_active_set(const ActiveSetPolicy& policy, const Dataset& stream, KernelKind kind,
                           const HyperParams& h) {
  policy.validate();
  ActiveSet set{policy.capacity, {}};
  if (policy.kind != ActiveSetKind::EvolvingGP) {
    for (const auto& p : stream.points) set = update_sliding(std::move(set), p);
    return set;
  }
  std::optional<FitState> model;
  for (const auto& p : stream.points) {
    auto [next, accepted] = update_evolving(std::move(set), model ? &*model : nullptr, policy, p);
    set = std::move(next);
    if (accepted) model = fit(kind, h, set.inputs(), set.targets());
  }
  return set;
}

GpPosterior predict_sod(const ActiveSetPolicy& policy, const Dataset& stream, const Inputs& test, KernelKind kind,
                        const HyperParams& h) {
  const ActiveSet set = build_active_set(policy, stream, kind, h);
  if (policy.kind != ActiveSetKind::Clustering || set.size() == 0)
    return predict(fit(kind, h, set.inputs(), set.targets()), test);

  Dataset pool;
  pool.polarity = stream.polarity;
  pool.points = set.points;
  const int k = std::min<int>(policy.k_clusters, static_cast<int>(pool.size()));
  const Clusters clusters = cluster_kmeans(pool, k, kind, h, policy.cluster_seed);
  std::vector<FitState> models;
  for (const auto& s : clusters.sets) models.push_back(fit(kind, h, s.inputs(), s.targets()));

  GpPosterior post;
  post.mean.resize(test.rows());
  post.cov = Matrix::Zero(test.rows(), test.rows());
  for (Eigen::Index t = 0; t < test.rows(); ++t) {
    const std::size_t c = nearest_centroid(clusters, test.row(t).transpose(), kind, h);
    const GpPosterior one = predict(models[c], test.row(t));
    post.mean(t) = one.mean(0);
    post.cov(t, t) = one.cov(0, 0);
  }
  return post;
}

}  // namespace sqdm
