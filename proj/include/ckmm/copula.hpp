#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ckmm/spectral.hpp"

namespace ckmm {

inline constexpr double kDefaultRidge = 1e-8;

/// Frequency-domain Gaussian copula parameter of one cluster: T Hermitian D x D
/// blocks C_j with C_{T-j} = conj(C_j).
struct SpectralCorrelation {
  std::size_t times = 0;
  std::size_t features = 0;
  std::vector<Eigen::MatrixXcd> blocks;
  /// Diagonal loading already included in `blocks`.
  double ridge = 0.0;
  std::vector<std::string> warnings;

  static SpectralCorrelation identity(std::size_t times, std::size_t features);
};

/// Sum over frequencies of -1/2 log det C_j - 1/2 v_j^H (C_j^{-1} - I) v_j.
/// Throws singular_correlation naming the first non-PD frequency.
double copula_log_density(const SpectralVector& v, const SpectralCorrelation& corr);

/// Weighted spectral covariance sum_n w_n v_nj v_nj^H / sum_n w_n, symmetrized
/// across mirror frequencies and loaded with `ridge` on the diagonal. This is
/// the unconstrained maximizer of the weighted copula pseudo-likelihood.
SpectralCorrelation weighted_spectral_covariance(std::span<const SpectralVector> vs, std::span<const double> weights,
                                                 double ridge = kDefaultRidge);

/// Rescale C_j <- S C_j S so the assembled time-domain matrix has unit diagonal.
void normalize_unit_diagonal(SpectralCorrelation& corr);

/// weighted_spectral_covariance followed by normalize_unit_diagonal.
SpectralCorrelation estimate_blocks(std::span<const SpectralVector> vs, std::span<const double> weights);

Eigen::MatrixXd assemble_full_correlation(const SpectralCorrelation& corr);

/// Max deviation from the SpectralCorrelation invariants (Hermitian blocks,
/// mirror symmetry, unit time-domain diagonal); 0 for an exact correlation.
double invariant_violation(const SpectralCorrelation& corr);

/// Half-spectrum coefficient store for N subjects: entry (n, j, d) for
/// j < floor(T/2) + 1, laid out subject-major then frequency-major.
struct HalfSpectra {
  std::size_t subjects = 0;
  std::size_t times = 0;
  std::size_t features = 0;
  std::size_t half = 0;
  std::vector<Complex> coeffs;

  HalfSpectra() = default;
  HalfSpectra(std::size_t n, std::size_t t, std::size_t d)
      : subjects(n), times(t), features(d), half(t / 2 + 1), coeffs(n * (t / 2 + 1) * d) {}

  Complex* subject(std::size_t n) { return coeffs.data() + n * half * features; }
  const Complex* subject(std::size_t n) const { return coeffs.data() + n * half * features; }
};

/// Raw weighted estimator on half spectra (mirrored to all T blocks).
SpectralCorrelation weighted_spectral_covariance(const HalfSpectra& vs, std::span<const double> weights,
                                                 double ridge = kDefaultRidge);

/// Precomputed inverses and log-determinants for repeated copula evaluations
/// on half spectra of real quantile vectors.
class CopulaEvaluator {
public:
  explicit CopulaEvaluator(const SpectralCorrelation& corr);

  /// Copula log density of one subject's half-spectrum (half x D, frequency-major).
  double log_density(const Complex* half_coeffs) const;

private:
  std::size_t times_ = 0;
  std::size_t features_ = 0;
  std::size_t half_ = 0;
  double constant_ = 0.0;                    // -1/2 sum_j log det C_j
  std::vector<Complex> inv_minus_identity_;  // half x D x D
  std::vector<double> multiplicity_;
};

}  // namespace ckmm
