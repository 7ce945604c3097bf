#include "ckmm/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

// exp(sign * 2*pi*i*k/T) with k reduced mod T first, so all twiddles share one rounding.
Complex unit_root(long k, std::size_t times, double sign) {
  const long t = static_cast<long>(times);
  long r = k % t;
  if (r < 0) r += t;
  const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(times);
  return {std::cos(angle), std::sin(angle)};
}

void require_positive(std::size_t times, std::size_t features) {
  if (times == 0 || features == 0) {
    throw Error(ErrorCode::invalid_dimension, "T and D must be positive");
  }
}

}  // namespace

DftBasis dft_basis(std::size_t times) {
  require_positive(times, 1);
  DftBasis basis{times, Eigen::MatrixXcd(times, times)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(times));
  for (std::size_t t = 0; t < times; ++t)
    for (std::size_t m = 0; m < times; ++m)
      basis.matrix(t, m) = scale * unit_root(static_cast<long>(t * m), times, 1.0);
  return basis;
}

PermutationIndex permutation_index(std::size_t times, std::size_t features) {
  require_positive(times, features);
  PermutationIndex p{times, features, std::vector<std::size_t>(times * features),
                     std::vector<std::size_t>(times * features)};
  for (std::size_t m = 0; m < times; ++m) {
    for (std::size_t n = 0; n < features; ++n) {
      p.forward[m * features + n] = times * n + m;
      p.inverse[times * n + m] = m * features + n;
    }
  }
  return p;
}

SpectralVector spectralize(std::span<const double> q, std::size_t times, std::size_t features) {
  require_positive(times, features);
  if (q.size() != times * features) {
    throw Error(ErrorCode::invalid_dimension, "quantile vector length " + std::to_string(q.size()) +
                                                  " does not equal D*T = " + std::to_string(times * features));
  }
  for (double x : q) {
    if (!std::isfinite(x)) throw Error(ErrorCode::invalid_input, "quantile vector contains a non-finite entry");
  }
  SpectralVector v{times, features, std::vector<Complex>(times * features)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(times));
  for (std::size_t j = 0; j < times; ++j) {
    for (std::size_t d = 0; d < features; ++d) {
      Complex acc{0.0, 0.0};
      for (std::size_t t = 0; t < times; ++t) acc += q[d * times + t] * unit_root(static_cast<long>(j * t), times, -1.0);
      v.at(j, d) = scale * acc;
    }
  }
  return v;
}

std::vector<double> inverse_spectralize(const SpectralVector& v) {
  const std::size_t times = v.times;
  const std::size_t features = v.features;
  require_positive(times, features);
  std::vector<double> q(times * features);
  const double scale = 1.0 / std::sqrt(static_cast<double>(times));
  for (std::size_t d = 0; d < features; ++d) {
    for (std::size_t t = 0; t < times; ++t) {
      Complex acc{0.0, 0.0};
      for (std::size_t j = 0; j < times; ++j) acc += v.at(j, d) * unit_root(static_cast<long>(j * t), times, 1.0);
      q[d * times + t] = scale * acc.real();
    }
  }
  return q;
}

std::vector<Complex> circulant_eigenvalues(const LagFunction& acf, std::size_t times) {
  require_positive(times, 1);
  const long max_lag = static_cast<long>(times) - 1;
  std::vector<Complex> lambda(times, Complex{0.0, 0.0});
  for (const auto& [lag, r] : acf) {
    if (lag < -max_lag || lag > max_lag) {
      throw Error(ErrorCode::invalid_dimension, "lag " + std::to_string(lag) + " outside [-(T-1), T-1]");
    }
    for (std::size_t m = 0; m < times; ++m) lambda[m] += r * unit_root(static_cast<long>(m) * lag, times, 1.0);
  }
  return lambda;
}

Eigen::MatrixXd assemble_full_correlation(std::span<const Eigen::MatrixXcd> blocks, std::size_t times,
                                          std::size_t features) {
  require_positive(times, features);
  if (blocks.size() != times) {
    throw Error(ErrorCode::invalid_dimension, "expected " + std::to_string(times) + " spectral blocks");
  }
  const auto dim = static_cast<Eigen::Index>(features);
  for (std::size_t j = 0; j < times; ++j) {
    if (blocks[j].rows() != dim || blocks[j].cols() != dim) {
      throw Error(ErrorCode::invalid_dimension, "spectral block " + std::to_string(j) + " is not D x D");
    }
    const auto& mirror = blocks[(times - j) % times];
    if ((blocks[j] - mirror.conjugate()).cwiseAbs().maxCoeff() > 1e-8) {
      throw Error(ErrorCode::inconsistent_blocks,
                  "spectral block " + std::to_string(j) + " is not the conjugate of its mirror frequency");
    }
  }

  // Circulant lag functions c_de(k) = (1/T) sum_m C_m(d,e) exp(2*pi*i*m*k/T); entry
  // ((d,t),(e,s)) of the assembled matrix is c_de(t - s mod T).
  const double inv_t = 1.0 / static_cast<double>(times);
  std::vector<Eigen::MatrixXcd> lag(times, Eigen::MatrixXcd::Zero(dim, dim));
  for (std::size_t k = 0; k < times; ++k)
    for (std::size_t m = 0; m < times; ++m) lag[k] += blocks[m] * unit_root(static_cast<long>(m * k), times, 1.0);

  Eigen::MatrixXd out(dim * static_cast<Eigen::Index>(times), dim * static_cast<Eigen::Index>(times));
  for (std::size_t d = 0; d < features; ++d)
    for (std::size_t e = 0; e < features; ++e)
      for (std::size_t t = 0; t < times; ++t)
        for (std::size_t s = 0; s < times; ++s) {
          const std::size_t k = (t + times - s) % times;
          out(static_cast<Eigen::Index>(d * times + t), static_cast<Eigen::Index>(e * times + s)) =
              inv_t * lag[k](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(e)).real();
        }
  return out;
}

DftTable::DftTable(std::size_t times) : times_(times), half_(times / 2 + 1) {
  require_positive(times, 1);
  cos_.resize(half_ * times_);
  sin_.resize(half_ * times_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(times));
  for (std::size_t j = 0; j < half_; ++j)
    for (std::size_t t = 0; t < times_; ++t) {
      const Complex w = unit_root(static_cast<long>(j * t), times_, -1.0);
      cos_[j * times_ + t] = scale * w.real();
      sin_[j * times_ + t] = scale * w.imag();
    }
}

void DftTable::forward_half(const double* series, Complex* out, std::size_t stride) const {
  for (std::size_t j = 0; j < half_; ++j) {
    const double* c = cos_.data() + j * times_;
    const double* s = sin_.data() + j * times_;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t t = 0; t < times_; ++t) {
      re += c[t] * series[t];
      im += s[t] * series[t];
    }
    out[j * stride] = {re, im};
  }
}

}  // namespace ckmm
