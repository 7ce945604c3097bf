#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace ckmm {

/// Lower/upper bound applied to CDF values before the normal quantile transform.
inline constexpr double kCdfClip = 1e-10;

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;

/// Inverse standard normal CDF, accurate to ~1e-15 absolute on (0, 1).
/// Throws domain for p outside (0, 1).
double normal_quantile(double p);

/// Parametric margin used by the simulator and by the true-parameter classifier.
struct MarginSpec {
  enum class Kind { normal, student_t };

  Kind kind = Kind::normal;
  double mean = 0.0;
  double variance = 1.0;
  double df = 0.0;

  static MarginSpec normal(double mean, double variance);
  static MarginSpec student_t(double df);

  double center() const noexcept { return kind == Kind::normal ? mean : 0.0; }
  double stddev() const;

  bool operator==(const MarginSpec&) const = default;
};

double margin_pdf(const MarginSpec& spec, double x);
double margin_log_pdf(const MarginSpec& spec, double x);
double margin_cdf(const MarginSpec& spec, double x);
double margin_quantile(const MarginSpec& spec, double p);

/// F^{-1}(Phi(z)), used to turn Gaussian copula draws into observations.
double margin_from_normal_score(const MarginSpec& spec, double z);

/// Phi^{-1}(F(x)) with F clipped to [kCdfClip, 1 - kCdfClip].
double margin_normal_score(const MarginSpec& spec, double x);

/// Weighted Gaussian kernel density for one (feature, cluster) pair:
///
///   f(u) = 1 / (T * sum_n w_n) * sum_n sum_t w_n * phi((u - x_nt) / h) / h
///
/// All T observations of subject n share the subject weight w_n. Immutable;
/// copies share the underlying storage.
class WeightedKde {
public:
  WeightedKde() = default;

  /// `points` holds N*T values ordered by subject, `weights` the N subject weights.
  WeightedKde(std::span<const double> points, std::span<const double> weights, double bandwidth);

  double bandwidth() const noexcept;
  std::size_t subjects() const noexcept;
  std::size_t points_per_subject() const noexcept;
  std::span<const double> points() const noexcept;
  std::span<const double> weights() const noexcept;
  double weight_total() const noexcept;

  /// Positive-mass points sorted ascending with their normalized masses (sum to 1).
  std::span<const double> sorted_points() const noexcept;
  std::span<const double> sorted_masses() const noexcept;

  double pdf(double u) const;
  double log_pdf(double u) const;
  /// Unclipped CDF in [0, 1].
  double cdf(double u) const;

  bool valid() const noexcept { return impl_ != nullptr; }

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Weighted KDE update for one feature: `data` is N x T row-major (subject, time).
/// Throws degenerate_cluster when all weights are zero.
WeightedKde kde_update(std::span<const double> data, std::span<const double> weights, double bandwidth);

double kde_pdf(const WeightedKde& kde, double u);

/// CDF clipped to [kCdfClip, 1 - kCdfClip].
double kde_cdf(const WeightedKde& kde, double u);

/// E_{u ~ N(x, h_query^2)}[log kde_pdf(u)] by 20-point Gauss-Hermite quadrature:
/// the log of the nonlinear smoothing operator applied to the KDE at x.
double smoothed_log_density(const WeightedKde& kde, double x, double h_query);

/// Gauss-Hermite rule normalized for a standard normal weight:
/// E[g(Z)] ~= sum_k weights[k] * g(nodes[k]).
struct GaussHermiteRule {
  static constexpr std::size_t kOrder = 20;
  std::array<double, kOrder> nodes{};
  std::array<double, kOrder> weights{};
};

const GaussHermiteRule& gauss_hermite_rule();

/// Weighted rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n_eff^(-1/5) with
/// n_eff = (sum w)^2 / sum w^2. Zero spread gives 1e-3 * (1 + |mean|).
double silverman_bandwidth(std::span<const double> data, std::span<const double> weights);

/// Binned grid evaluator of a WeightedKde used inside the fit loop.
///
/// Masses are linearly binned onto a grid of spacing h/8 (capped node count),
/// convolved with a kernel truncated at 9h whose variance is reduced by the
/// binning variance, and interpolated with cubic Catmull-Rom segments. Queries
/// outside the grid, or next to nodes whose density
/// underflows, fall back to the exact evaluator.
class KdeGrid {
public:
  explicit KdeGrid(WeightedKde kde);

  const WeightedKde& kde() const noexcept { return kde_; }

  double log_pdf(double u) const;
  double cdf(double u) const;

  /// Gauss-Hermite smoothed log density with h_query equal to the KDE bandwidth.
  double smoothed_log_density(double x) const;

private:
  WeightedKde kde_;
  double lo_ = 0.0;
  double inv_delta_ = 0.0;
  std::vector<double> log_pdf_;
  std::vector<double> cdf_;
  std::vector<unsigned char> usable_;
};

}  // namespace ckmm
