#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ckmm/dataset.hpp"
#include "ckmm/rng.hpp"

namespace ckmm {

struct KMeansResult {
  std::vector<int> labels;
  std::vector<double> centers;  // G x DT, row-major
  std::size_t iterations = 0;
  /// Number of k-means++ reseeds spent on empty clusters.
  std::size_t reseeds = 0;
  /// Within-cluster sum of squared distances.
  double inertia = 0.0;
};

/// K-means on the flattened DT-vectors of each subject: k-means++ seeding then
/// at most `max_iterations` Lloyd steps. An empty cluster triggers a fresh
/// seeding (up to 5 times); after that each empty cluster takes the point
/// lying farthest from its own center in a cluster of size > 1. With
/// `seedings` > 1 the whole procedure is repeated and the lowest-inertia
/// result kept (ties to the earliest). Requires N >= G >= 1.
KMeansResult kmeans(const LongitudinalDataset& data, std::size_t clusters, Rng& rng,
                    std::size_t max_iterations = 50, std::size_t seedings = 1);

}  // namespace ckmm
