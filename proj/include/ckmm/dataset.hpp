#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ckmm {

/// Balanced multivariate longitudinal sample: N subjects, D features, T time points.
///
/// Values are stored subject-major and, within a subject, feature-major, so
/// `subject(n)` is the length-DT vector (x_{n,1,0..T-1}, ..., x_{n,D,0..T-1}).
class LongitudinalDataset {
public:
  LongitudinalDataset() = default;
  LongitudinalDataset(std::size_t n, std::size_t d, std::size_t t);
  LongitudinalDataset(std::size_t n, std::size_t d, std::size_t t, std::vector<double> values);

  std::size_t subjects() const noexcept { return n_; }
  std::size_t features() const noexcept { return d_; }
  std::size_t times() const noexcept { return t_; }
  bool empty() const noexcept { return n_ == 0; }

  double& operator()(std::size_t n, std::size_t d, std::size_t t) { return values_[(n * d_ + d) * t_ + t]; }
  double operator()(std::size_t n, std::size_t d, std::size_t t) const { return values_[(n * d_ + d) * t_ + t]; }

  std::span<const double> subject(std::size_t n) const { return {values_.data() + n * d_ * t_, d_ * t_}; }
  std::span<const double> series(std::size_t n, std::size_t d) const {
    return {values_.data() + (n * d_ + d) * t_, t_};
  }

  /// All N*T observations of feature d, ordered by subject then time.
  std::vector<double> feature_values(std::size_t d) const;

  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const LongitudinalDataset&) const = default;

private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::size_t t_ = 0;
  std::vector<double> values_;
};

/// First differences along time; T shrinks by one.
LongitudinalDataset difference(const LongitudinalDataset& data);

/// Per-feature z-scoring pooled over subjects and time points.
LongitudinalDataset standardize(const LongitudinalDataset& data);

}  // namespace ckmm
