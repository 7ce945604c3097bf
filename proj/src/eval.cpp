#include "ckmm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

std::int64_t choose2(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace

double ari(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::invalid_input, "label vectors must be nonempty and of equal length");
  std::map<std::pair<int, int>, std::int64_t> table;
  std::map<int, std::int64_t> rows;
  std::map<int, std::int64_t> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw Error(ErrorCode::invalid_input, "labels must be nonnegative");
    ++table[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  std::int64_t index = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : table) index += choose2(v);
  for (const auto& [k, v] : rows) sum_a += choose2(v);
  for (const auto& [k, v] : cols) sum_b += choose2(v);
  const std::int64_t total = choose2(static_cast<std::int64_t>(a.size()));
  const bool identical = 2 * index == sum_a + sum_b;
  // Integer numerator and denominator: one rounding, exact below about 10^4 subjects.
  if (a.size() <= 50'000) {
    const std::int64_t num = 2 * (total * index - sum_a * sum_b);
    const std::int64_t den = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    // both partitions trivial (all singletons or one block): agreement is perfect only if they coincide
    if (den == 0) return identical ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  const double ta = static_cast<double>(sum_a), tb = static_cast<double>(sum_b), tt = static_cast<double>(total);
  const double expected = ta * tb / tt;
  const double max_index = 0.5 * (ta + tb);
  if (max_index == expected) return identical ? 1.0 : 0.0;
  return (static_cast<double>(index) - expected) / (max_index - expected);
}

std::vector<int> oracle_classify(const LongitudinalDataset& data, const Scenario& scenario) {
  const std::size_t n = data.subjects();
  const std::size_t t = data.times();
  const std::size_t d = data.features();
  if (d != Scenario::kFeatures) throw Error(ErrorCode::invalid_dimension, "scenario data must have two features");
  const std::array<double, 2> log_prior{std::log1p(-scenario.label_probability), std::log(scenario.label_probability)};
  // The exact Toeplitz correlation, not its circulant approximation: this is
  // the Bayes classifier the fitted model is measured against.
  std::vector<Eigen::MatrixXd> chol;
  std::vector<double> log_det;
  for (std::size_t g = 0; g < Scenario::kClusters; ++g) {
    Eigen::LLT<Eigen::MatrixXd> llt(build_covariance(scenario, g, t));
    chol.emplace_back(llt.matrixL());
    log_det.push_back(2.0 * chol.back().diagonal().array().log().sum());
  }

  std::vector<int> labels(n, 0);
  Eigen::VectorXd q(static_cast<Eigen::Index>(d * t));
  for (std::size_t i = 0; i < n; ++i) {
    double best = -INFINITY;
    for (std::size_t g = 0; g < Scenario::kClusters; ++g) {
      const auto& proc = scenario.clusters[g];
      double score = log_prior[g];
      for (std::size_t f = 0; f < d; ++f) {
        const auto x = data.series(i, f);
        for (std::size_t s = 0; s < t; ++s) {
          score += margin_log_pdf(proc.margins[f], x[s]);
          q(static_cast<Eigen::Index>(f * t + s)) = margin_normal_score(proc.margins[f], x[s]);
        }
      }
      const Eigen::VectorXd white = chol[g].triangularView<Eigen::Lower>().solve(q);
      score += -0.5 * log_det[g] - 0.5 * (white.squaredNorm() - q.squaredNorm());
      if (score > best) {
        best = score;
        labels[i] = static_cast<int>(g);
      }
    }
  }
  return labels;
}

double kde_mse(const WeightedKde& kde, const MarginSpec& truth) {
  const double c = truth.center();
  const double sd = truth.stddev();
  const double lo = c - 8.0 * sd;
  const double hi = c + 8.0 * sd;
  constexpr int kPoints = 4001;
  const double dx = (hi - lo) / (kPoints - 1);
  double acc = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double x = lo + dx * i;
    const double e = kde.pdf(x) - margin_pdf(truth, x);
    acc += (i == 0 || i == kPoints - 1 ? 0.5 : 1.0) * e * e;
  }
  return acc * dx;
}

double correlation_mse(const SpectralCorrelation& est, const Eigen::MatrixXd& truth) {
  const auto n = static_cast<Eigen::Index>(est.times * est.features);
  if (truth.rows() != n || truth.cols() != n) throw Error(ErrorCode::invalid_dimension, "correlation truth has the wrong size");
  return (assemble_full_correlation(est) - truth).squaredNorm() / static_cast<double>(truth.size());
}

std::vector<int> match_clusters(std::span<const int> fitted, std::span<const int> truth, int clusters) {
  if (fitted.size() != truth.size()) throw Error(ErrorCode::invalid_input, "label vectors differ in length");
  if (clusters < 1 || clusters > 8) throw Error(ErrorCode::invalid_input, "cluster matching supports 1..8 clusters");
  const auto g = static_cast<std::size_t>(clusters);
  std::vector<std::vector<int>> counts(g, std::vector<int>(g, 0));
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    if (fitted[i] >= 0 && fitted[i] < clusters && truth[i] >= 0 && truth[i] < clusters)
      ++counts[static_cast<std::size_t>(fitted[i])][static_cast<std::size_t>(truth[i])];
  }
  std::vector<int> perm(g);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  int best_score = -1;
  do {
    int score = 0;
    for (std::size_t k = 0; k < g; ++k) score += counts[k][static_cast<std::size_t>(perm[k])];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace ckmm
