#include "ckmm/dataset.hpp"

#include <cmath>
#include <string>

#include "ckmm/error.hpp"

namespace ckmm {

LongitudinalDataset::LongitudinalDataset(std::size_t n, std::size_t d, std::size_t t)
    : LongitudinalDataset(n, d, t, std::vector<double>(n * d * t, 0.0)) {}

LongitudinalDataset::LongitudinalDataset(std::size_t n, std::size_t d, std::size_t t, std::vector<double> values)
    : n_(n), d_(d), t_(t), values_(std::move(values)) {
  if (d_ == 0 || t_ == 0) {
    throw Error(ErrorCode::invalid_dimension, "dataset needs at least one feature and one time point");
  }
  if (values_.size() != n_ * d_ * t_) {
    throw Error(ErrorCode::invalid_dimension,
                "dataset value count " + std::to_string(values_.size()) + " does not match N*D*T = " +
                    std::to_string(n_ * d_ * t_));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_input, "dataset contains a non-finite value");
  }
}

std::vector<double> LongitudinalDataset::feature_values(std::size_t d) const {
  std::vector<double> out;
  out.reserve(n_ * t_);
  for (std::size_t n = 0; n < n_; ++n) {
    auto s = series(n, d);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

LongitudinalDataset difference(const LongitudinalDataset& data) {
  const std::size_t t = data.times();
  if (t < 2) throw Error(ErrorCode::invalid_dimension, "differencing needs at least two time points");
  LongitudinalDataset out(data.subjects(), data.features(), t - 1);
  for (std::size_t n = 0; n < data.subjects(); ++n) {
    for (std::size_t d = 0; d < data.features(); ++d) {
      for (std::size_t k = 0; k + 1 < t; ++k) out(n, d, k) = data(n, d, k + 1) - data(n, d, k);
    }
  }
  return out;
}

LongitudinalDataset standardize(const LongitudinalDataset& data) {
  LongitudinalDataset out = data;
  const double count = static_cast<double>(data.subjects() * data.times());
  for (std::size_t d = 0; d < data.features(); ++d) {
    double mean = 0.0;
    for (std::size_t n = 0; n < data.subjects(); ++n)
      for (double v : data.series(n, d)) mean += v;
    mean /= count;
    double var = 0.0;
    for (std::size_t n = 0; n < data.subjects(); ++n)
      for (double v : data.series(n, d)) var += (v - mean) * (v - mean);
    var /= count;
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t n = 0; n < data.subjects(); ++n)
      for (std::size_t k = 0; k < data.times(); ++k) out(n, d, k) = (data(n, d, k) - mean) / sd;
  }
  return out;
}

}  // namespace ckmm
