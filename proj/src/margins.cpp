#include "ckmm/margins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/students_t.hpp>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399;
constexpr double kLogSqrt2Pi = 0.9189385332046727417803;

// Exact window widths, in bandwidths, for the sorted-point evaluator.
constexpr double kPdfReach = 12.0;
constexpr double kCdfReach = 12.0;

// Grid evaluator parameters.
constexpr double kGridStepPerBandwidth = 1.0 / 8.0;
constexpr double kGridPad = 10.0;
constexpr double kGridKernelReach = 9.0;
constexpr std::size_t kGridMaxNodes = std::size_t{1} << 17;
constexpr double kGridMinDensity = 1e-250;

double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

void require_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::domain, "probability " + std::to_string(p) + " outside (0, 1)");
  }
}

double kernel(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Cubic through y[0..3] evaluated at fraction t between y[1] and y[2].
double catmull_rom(const double* y, double t) noexcept {
  const double a = -0.5 * y[0] + 1.5 * y[1] - 1.5 * y[2] + 0.5 * y[3];
  const double b = y[0] - 2.5 * y[1] + 2.0 * y[2] - 0.5 * y[3];
  const double c = 0.5 * (y[2] - y[0]);
  return ((a * t + b) * t + c) * t + y[1];
}

}  // namespace

double normal_pdf(double x) noexcept { return kernel(x); }

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5); }

double normal_quantile(double p) {
  require_probability(p);
  if (p > 0.5) return -normal_quantile(1.0 - p);  // 1 - p is exact here
  double x = acklam_lower(p);
  // Two Halley steps on Phi(x) - p; x <= 0 so Phi is evaluated without cancellation.
  for (int it = 0; it < 2; ++it) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

MarginSpec MarginSpec::normal(double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(mean)) {
    throw Error(ErrorCode::invalid_input, "normal margin needs a finite mean and positive variance");
  }
  MarginSpec s;
  s.kind = Kind::normal;
  s.mean = mean;
  s.variance = variance;
  return s;
}

MarginSpec MarginSpec::student_t(double df) {
  if (!(df > 2.0)) throw Error(ErrorCode::invalid_input, "Student t margin needs df > 2 (finite variance)");
  MarginSpec s;
  s.kind = Kind::student_t;
  s.df = df;
  s.variance = df / (df - 2.0);
  return s;
}

double MarginSpec::stddev() const { return std::sqrt(variance); }

double margin_pdf(const MarginSpec& spec, double x) {
  if (spec.kind == MarginSpec::Kind::normal) {
    const double sd = spec.stddev();
    return kernel((x - spec.mean) / sd) / sd;
  }
  return boost::math::pdf(boost::math::students_t_distribution<double>(spec.df), x);
}

double margin_log_pdf(const MarginSpec& spec, double x) {
  if (spec.kind == MarginSpec::Kind::normal) {
    const double sd = spec.stddev();
    const double z = (x - spec.mean) / sd;
    return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
  }
  const double v = spec.df;
  return std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) - 0.5 * std::log(v * std::numbers::pi) -
         0.5 * (v + 1.0) * std::log1p(x * x / v);
}

double margin_cdf(const MarginSpec& spec, double x) {
  if (spec.kind == MarginSpec::Kind::normal) return normal_cdf((x - spec.mean) / spec.stddev());
  return boost::math::cdf(boost::math::students_t_distribution<double>(spec.df), x);
}

double margin_quantile(const MarginSpec& spec, double p) {
  require_probability(p);
  if (spec.kind == MarginSpec::Kind::normal) return spec.mean + spec.stddev() * normal_quantile(p);
  const boost::math::students_t_distribution<double> dist(spec.df);
  if (p > 0.5) return boost::math::quantile(boost::math::complement(dist, 1.0 - p));
  return boost::math::quantile(dist, p);
}

double margin_from_normal_score(const MarginSpec& spec, double z) {
  if (!std::isfinite(z)) throw Error(ErrorCode::domain, "normal score must be finite");
  if (spec.kind == MarginSpec::Kind::normal) return spec.mean + spec.stddev() * z;
  const boost::math::students_t_distribution<double> dist(spec.df);
  // both halves go through the lower tail so Phi(z) never rounds to 1
  if (z > 0.0) return -boost::math::quantile(dist, normal_cdf(-z));
  return boost::math::quantile(dist, normal_cdf(z));
}

double margin_normal_score(const MarginSpec& spec, double x) {
  const double zmax = -normal_quantile(kCdfClip);
  if (spec.kind == MarginSpec::Kind::normal) return std::clamp((x - spec.mean) / spec.stddev(), -zmax, zmax);
  const double lower = std::max(margin_cdf(spec, -std::abs(x)), kCdfClip);
  const double z = normal_quantile(lower);
  return x > 0.0 ? -z : z;
}

// ---------------------------------------------------------------------------
// WeightedKde

struct WeightedKde::Impl {
  std::vector<double> points;
  std::vector<double> weights;
  std::size_t per_subject = 0;
  double bandwidth = 0.0;
  double weight_total = 0.0;
  std::vector<double> xs;      // positive-mass points, ascending
  std::vector<double> masses;  // aligned with xs, sum 1
  std::vector<double> prefix;  // prefix[i] = sum of masses[0..i)
};

WeightedKde::WeightedKde(std::span<const double> points, std::span<const double> weights, double bandwidth) {
  if (weights.empty() || points.size() % weights.size() != 0 || points.empty()) {
    throw Error(ErrorCode::invalid_dimension, "KDE points must be an N x T block for N subject weights");
  }
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorCode::invalid_input, "KDE bandwidth must be positive and finite");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::invalid_input, "KDE weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::degenerate_cluster, "all KDE weights are zero");
  for (double x : points) {
    if (!std::isfinite(x)) throw Error(ErrorCode::invalid_input, "KDE points must be finite");
  }

  auto impl = std::make_shared<Impl>();
  impl->points.assign(points.begin(), points.end());
  impl->weights.assign(weights.begin(), weights.end());
  impl->per_subject = points.size() / weights.size();
  impl->bandwidth = bandwidth;
  impl->weight_total = total;

  std::vector<std::pair<double, double>> pm;
  pm.reserve(points.size());
  const double norm = 1.0 / (static_cast<double>(impl->per_subject) * total);
  for (std::size_t n = 0; n < weights.size(); ++n) {
    if (weights[n] <= 0.0) continue;
    for (std::size_t t = 0; t < impl->per_subject; ++t)
      pm.emplace_back(points[n * impl->per_subject + t], weights[n] * norm);
  }
  std::sort(pm.begin(), pm.end());
  impl->xs.reserve(pm.size());
  impl->masses.reserve(pm.size());
  impl->prefix.assign(pm.size() + 1, 0.0);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    impl->xs.push_back(pm[i].first);
    impl->masses.push_back(pm[i].second);
    impl->prefix[i + 1] = impl->prefix[i] + pm[i].second;
  }
  impl_ = std::move(impl);
}

double WeightedKde::bandwidth() const noexcept { return impl_->bandwidth; }
std::size_t WeightedKde::subjects() const noexcept { return impl_->weights.size(); }
std::size_t WeightedKde::points_per_subject() const noexcept { return impl_->per_subject; }
std::span<const double> WeightedKde::points() const noexcept { return impl_->points; }
std::span<const double> WeightedKde::weights() const noexcept { return impl_->weights; }
double WeightedKde::weight_total() const noexcept { return impl_->weight_total; }
std::span<const double> WeightedKde::sorted_points() const noexcept { return impl_->xs; }
std::span<const double> WeightedKde::sorted_masses() const noexcept { return impl_->masses; }

double WeightedKde::pdf(double u) const {
  const auto& xs = impl_->xs;
  const double h = impl_->bandwidth;
  auto it = std::lower_bound(xs.begin(), xs.end(), u);
  double nearest = std::numeric_limits<double>::infinity();
  if (it != xs.end()) nearest = *it - u;
  if (it != xs.begin()) nearest = std::min(nearest, u - *(it - 1));
  // Terms beyond nearest + 12h are < exp(-72) relative to the nearest one.
  const double reach = nearest + kPdfReach * h;
  const auto first = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), u - reach) - xs.begin());
  const auto last = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), u + reach) - xs.begin());
  double acc = 0.0;
  const double inv_h = 1.0 / h;
  for (std::size_t i = first; i < last; ++i) acc += impl_->masses[i] * kernel((u - xs[i]) * inv_h);
  return acc * inv_h;
}

double WeightedKde::log_pdf(double u) const {
  const double p = pdf(u);
  if (p > 1e-280) return std::log(p);
  // Far tail: log-sum-exp over all points.
  const double h = impl_->bandwidth;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < impl_->xs.size(); ++i) {
    const double z = (u - impl_->xs[i]) / h;
    best = std::max(best, std::log(impl_->masses[i]) - 0.5 * z * z);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < impl_->xs.size(); ++i) {
    const double z = (u - impl_->xs[i]) / h;
    acc += std::exp(std::log(impl_->masses[i]) - 0.5 * z * z - best);
  }
  return best + std::log(acc) - kLogSqrt2Pi - std::log(h);
}

double WeightedKde::cdf(double u) const {
  const auto& xs = impl_->xs;
  const double h = impl_->bandwidth;
  const auto first =
      static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), u - kCdfReach * h) - xs.begin());
  const auto last =
      static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), u + kCdfReach * h) - xs.begin());
  double acc = impl_->prefix[first];
  const double inv_h = 1.0 / h;
  for (std::size_t i = first; i < last; ++i) acc += impl_->masses[i] * normal_cdf((u - xs[i]) * inv_h);
  return std::clamp(acc, 0.0, 1.0);
}

WeightedKde kde_update(std::span<const double> data, std::span<const double> weights, double bandwidth) {
  return WeightedKde(data, weights, bandwidth);
}

double kde_pdf(const WeightedKde& kde, double u) { return kde.pdf(u); }

double kde_cdf(const WeightedKde& kde, double u) { return std::clamp(kde.cdf(u), kCdfClip, 1.0 - kCdfClip); }

const GaussHermiteRule& gauss_hermite_rule() {
  static const GaussHermiteRule rule = [] {
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    constexpr auto n = static_cast<Eigen::Index>(GaussHermiteRule::kOrder);
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 1; k < n; ++k) {
      jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
      jacobi(k - 1, k) = jacobi(k, k - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    GaussHermiteRule r;
    for (Eigen::Index k = 0; k < n; ++k) {
      r.nodes[static_cast<std::size_t>(k)] = solver.eigenvalues()(k);
      const double v0 = solver.eigenvectors()(0, k);
      r.weights[static_cast<std::size_t>(k)] = v0 * v0;
    }
    // Symmetrize to remove eigen-solver noise.
    for (std::size_t k = 0; k < GaussHermiteRule::kOrder / 2; ++k) {
      const std::size_t m = GaussHermiteRule::kOrder - 1 - k;
      const double node = 0.5 * (r.nodes[m] - r.nodes[k]);
      const double w = 0.5 * (r.weights[m] + r.weights[k]);
      r.nodes[k] = -node;
      r.nodes[m] = node;
      r.weights[k] = r.weights[m] = w;
    }
    const double total = std::accumulate(r.weights.begin(), r.weights.end(), 0.0);
    for (double& w : r.weights) w /= total;
    return r;
  }();
  return rule;
}

double smoothed_log_density(const WeightedKde& kde, double x, double h_query) {
  if (!(h_query > 0.0)) throw Error(ErrorCode::invalid_input, "smoothing bandwidth must be positive");
  const auto& rule = gauss_hermite_rule();
  double acc = 0.0;
  for (std::size_t k = 0; k < GaussHermiteRule::kOrder; ++k)
    acc += rule.weights[k] * kde.log_pdf(x + h_query * rule.nodes[k]);
  return acc;
}

namespace {

double weighted_quantile(const std::vector<std::pair<double, double>>& sorted, double total, double p) {
  // Midpoint plotting positions, linear interpolation between them.
  double cum = 0.0;
  double prev_pos = 0.0;
  double prev_x = sorted.front().first;
  bool first = true;
  for (const auto& [x, w] : sorted) {
    if (w <= 0.0) continue;
    const double pos = (cum + 0.5 * w) / total;
    cum += w;
    if (first) {
      if (p <= pos) return x;
      first = false;
    } else if (p <= pos) {
      const double f = (p - prev_pos) / (pos - prev_pos);
      return prev_x + f * (x - prev_x);
    }
    prev_pos = pos;
    prev_x = x;
  }
  return prev_x;
}

}  // namespace

double silverman_bandwidth(std::span<const double> data, std::span<const double> weights) {
  if (data.size() != weights.size() || data.empty()) {
    throw Error(ErrorCode::invalid_dimension, "bandwidth data and weights must have equal nonzero length");
  }
  double sw = 0.0;
  double sw2 = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error(ErrorCode::invalid_input, "bandwidth weights must be nonnegative");
    sw += weights[i];
    sw2 += weights[i] * weights[i];
    mean += weights[i] * data[i];
  }
  if (!(sw > 0.0)) throw Error(ErrorCode::degenerate_cluster, "all bandwidth weights are zero");
  mean /= sw;
  double var = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) var += weights[i] * (data[i] - mean) * (data[i] - mean);
  var /= sw;
  const double floor = 1e-3 * (1.0 + std::abs(mean));
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) return floor;

  std::vector<std::pair<double, double>> sorted;
  sorted.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) sorted.emplace_back(data[i], weights[i]);
  std::sort(sorted.begin(), sorted.end());
  const double iqr = weighted_quantile(sorted, sw, 0.75) - weighted_quantile(sorted, sw, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  const double n_eff = sw * sw / sw2;
  const double h = 0.9 * spread * std::pow(n_eff, -0.2);
  return h > 0.0 ? h : floor;
}

// ---------------------------------------------------------------------------
// KdeGrid

KdeGrid::KdeGrid(WeightedKde kde) : kde_(std::move(kde)) {
  const auto xs = kde_.sorted_points();
  const auto masses = kde_.sorted_masses();
  const double h = kde_.bandwidth();
  lo_ = xs.front() - kGridPad * h;
  const double hi = xs.back() + kGridPad * h;
  double delta = h * kGridStepPerBandwidth;
  auto nodes = static_cast<std::size_t>(std::floor((hi - lo_) / delta)) + 2;
  if (nodes > kGridMaxNodes) {
    nodes = kGridMaxNodes;
    delta = (hi - lo_) / static_cast<double>(nodes - 2);
  }
  inv_delta_ = 1.0 / delta;

  std::vector<double> binned(nodes, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pos = (xs[i] - lo_) * inv_delta_;
    const auto k = std::min(static_cast<std::size_t>(pos), nodes - 2);
    const double frac = pos - static_cast<double>(k);
    binned[k] += masses[i] * (1.0 - frac);
    binned[k + 1] += masses[i] * frac;
  }
  std::vector<double> prefix(nodes + 1, 0.0);
  for (std::size_t k = 0; k < nodes; ++k) prefix[k + 1] = prefix[k] + binned[k];

  // Linear binning smears each mass by a triangle of variance delta^2/6; the
  // grid kernel gives that variance back so the binned estimate is unbiased to
  // second order.
  const double hk = std::sqrt(std::max(h * h - delta * delta / 6.0, 0.25 * h * h));
  const auto reach = static_cast<std::size_t>(std::ceil(kGridKernelReach * h * inv_delta_));
  std::vector<double> kpdf(reach + 1);
  std::vector<double> kcdf(2 * reach + 1);
  for (std::size_t s = 0; s <= reach; ++s) kpdf[s] = kernel(static_cast<double>(s) * delta / hk) / hk;
  for (std::size_t s = 0; s <= 2 * reach; ++s)
    kcdf[s] = normal_cdf((static_cast<double>(s) - static_cast<double>(reach)) * delta / hk);

  log_pdf_.assign(nodes, 0.0);
  cdf_.assign(nodes, 0.0);
  usable_.assign(nodes, 0);
  for (std::size_t m = 0; m < nodes; ++m) {
    const std::size_t k0 = m >= reach ? m - reach : 0;
    const std::size_t k1 = std::min(nodes - 1, m + reach);
    double p = 0.0;
    double c = prefix[k0];
    for (std::size_t k = k0; k <= k1; ++k) {
      const double w = binned[k];
      if (w == 0.0) continue;
      const std::size_t s = m >= k ? m - k : k - m;
      p += w * kpdf[s];
      c += w * kcdf[m + reach - k];
    }
    usable_[m] = p > kGridMinDensity ? 1 : 0;
    log_pdf_[m] = usable_[m] ? std::log(p) : 0.0;
    cdf_[m] = std::clamp(c, 0.0, 1.0);
  }
}

double KdeGrid::log_pdf(double u) const {
  const double pos = (u - lo_) * inv_delta_;
  if (pos >= 1.0 && pos < static_cast<double>(log_pdf_.size() - 2)) {
    const auto k = static_cast<std::size_t>(pos);
    if (usable_[k - 1] && usable_[k] && usable_[k + 1] && usable_[k + 2]) {
      return catmull_rom(&log_pdf_[k - 1], pos - static_cast<double>(k));
    }
  }
  return kde_.log_pdf(u);
}

double KdeGrid::cdf(double u) const {
  const double pos = (u - lo_) * inv_delta_;
  if (pos >= 1.0 && pos < static_cast<double>(cdf_.size() - 2)) {
    const auto k = static_cast<std::size_t>(pos);
    return std::clamp(catmull_rom(&cdf_[k - 1], pos - static_cast<double>(k)), 0.0, 1.0);
  }
  return kde_.cdf(u);
}

double KdeGrid::smoothed_log_density(double x) const {
  const auto& rule = gauss_hermite_rule();
  const double h = kde_.bandwidth();
  double acc = 0.0;
  for (std::size_t k = 0; k < GaussHermiteRule::kOrder; ++k) acc += rule.weights[k] * log_pdf(x + h * rule.nodes[k]);
  return acc;
}

}  // namespace ckmm
