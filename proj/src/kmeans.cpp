#include "ckmm/kmeans.hpp"

#include <algorithm>
#include <limits>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

double sq_dist(const double* a, const double* b, std::size_t m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = a[i] - b[i];
    s += e * e;
  }
  return s;
}

std::vector<double> seed_plus_plus(const LongitudinalDataset& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.subjects();
  const std::size_t m = data.features() * data.times();
  const double* x = data.values().data();
  std::vector<double> centers(k * m);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy_n(x + first * m, m, centers.begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x + i * m, centers.data(), m);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::copy_n(x + pick * m, m, centers.begin() + static_cast<std::ptrdiff_t>(c * m));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x + i * m, centers.data() + c * m, m));
  }
  return centers;
}

// Lloyd iterations; returns false if a cluster went empty.
bool lloyd(const LongitudinalDataset& data, std::size_t k, std::size_t max_iterations, KMeansResult& out) {
  const std::size_t n = data.subjects();
  const std::size_t m = data.features() * data.times();
  const double* x = data.values().data();
  out.labels.assign(n, -1);
  std::vector<std::size_t> counts(k);
  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(x + i * m, out.centers.data() + c * m, m);
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<int>(c);
        }
      }
      changed |= out.labels[i] != best;
      out.labels[i] = best;
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (int l : out.labels) ++counts[static_cast<std::size_t>(l)];
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) return false;
    if (!changed && out.iterations > 0) break;
    std::fill(out.centers.begin(), out.centers.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* c = out.centers.data() + static_cast<std::size_t>(out.labels[i]) * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += x[i * m + j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < m; ++j) out.centers[c * m + j] /= static_cast<double>(counts[c]);
  }
  return true;
}

void fill_empty(const LongitudinalDataset& data, std::size_t k, KMeansResult& out) {
  const std::size_t n = data.subjects();
  const std::size_t m = data.features() * data.times();
  const double* x = data.values().data();
  std::vector<std::size_t> counts(k, 0);
  for (int l : out.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t pick = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto own = static_cast<std::size_t>(out.labels[i]);
      if (counts[own] < 2) continue;
      const double dd = sq_dist(x + i * m, out.centers.data() + own * m, m);
      if (dd > far) {
        far = dd;
        pick = i;
      }
    }
    --counts[static_cast<std::size_t>(out.labels[pick])];
    out.labels[pick] = static_cast<int>(c);
    counts[c] = 1;
    std::copy_n(x + pick * m, m, out.centers.begin() + static_cast<std::ptrdiff_t>(c * m));
  }
}

double inertia(const LongitudinalDataset& data, const KMeansResult& r) {
  const std::size_t m = data.features() * data.times();
  const double* x = data.values().data();
  std::vector<double> centers(r.centers.size(), 0.0);
  std::vector<std::size_t> counts(r.centers.size() / m, 0);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(r.labels[i]);
    ++counts[c];
    for (std::size_t j = 0; j < m; ++j) centers[c * m + j] += x[i * m + j];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t j = 0; j < m; ++j) centers[c * m + j] /= static_cast<double>(counts[c]);
  double s = 0.0;
  for (std::size_t i = 0; i < r.labels.size(); ++i)
    s += sq_dist(x + i * m, centers.data() + static_cast<std::size_t>(r.labels[i]) * m, m);
  return s;
}

KMeansResult kmeans_once(const LongitudinalDataset& data, std::size_t clusters, Rng& rng, std::size_t max_iterations) {
  KMeansResult out;
  constexpr std::size_t kMaxReseeds = 5;
  for (;;) {
    out.centers = seed_plus_plus(data, clusters, rng);
    if (lloyd(data, clusters, max_iterations, out)) return out;
    if (out.reseeds == kMaxReseeds) break;
    ++out.reseeds;
  }
  fill_empty(data, clusters, out);
  return out;
}

}  // namespace

KMeansResult kmeans(const LongitudinalDataset& data, std::size_t clusters, Rng& rng, std::size_t max_iterations,
                    std::size_t seedings) {
  if (clusters == 0 || data.subjects() < clusters) {
    throw Error(ErrorCode::invalid_dimension, "k-means needs at least one subject per cluster");
  }
  if (seedings == 0) throw Error(ErrorCode::config, "k-means needs at least one seeding");
  KMeansResult best;
  for (std::size_t s = 0; s < seedings; ++s) {
    KMeansResult r = kmeans_once(data, clusters, rng, max_iterations);
    r.inertia = inertia(data, r);
    if (s == 0 || r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

}  // namespace ckmm
