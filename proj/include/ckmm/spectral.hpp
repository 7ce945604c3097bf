#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ckmm {

using Complex = std::complex<double>;

/// Unitary DFT basis: W(t, m) = exp(2*pi*i*t*m/T) / sqrt(T). Column m is the
/// m-th eigenvector shared by every T x T circulant matrix.
struct DftBasis {
  std::size_t times = 0;
  Eigen::MatrixXcd matrix;
};

DftBasis dft_basis(std::size_t times);

/// Reorders a feature-major DT-vector into frequency-major order so that the
/// block-diagonal spectrum becomes T consecutive D x D blocks.
///
/// forward[m*D + n] = T*n + m: slot (frequency m, feature n) reads the
/// feature-major entry of feature n at index m. inverse is its transpose.
struct PermutationIndex {
  std::size_t times = 0;
  std::size_t features = 0;
  std::vector<std::size_t> forward;
  std::vector<std::size_t> inverse;

  template <class T>
  std::vector<T> apply(std::span<const T> x) const {
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < forward.size(); ++i) y[i] = x[forward[i]];
    return y;
  }

  template <class T>
  std::vector<T> apply_inverse(std::span<const T> y) const {
    std::vector<T> x(y.size());
    for (std::size_t i = 0; i < inverse.size(); ++i) x[i] = y[inverse[i]];
    return x;
  }
};

PermutationIndex permutation_index(std::size_t times, std::size_t features);

/// Per-frequency DFT coefficients of every feature's quantile series.
/// at(j, d) = (1/sqrt(T)) * sum_t q[d*T + t] * exp(-2*pi*i*j*t/T).
struct SpectralVector {
  std::size_t times = 0;
  std::size_t features = 0;
  std::vector<Complex> coeffs;  // frequency-major, size T*D

  Complex& at(std::size_t j, std::size_t d) { return coeffs[j * features + d]; }
  Complex at(std::size_t j, std::size_t d) const { return coeffs[j * features + d]; }

  Eigen::Map<const Eigen::VectorXcd> block(std::size_t j) const {
    return {coeffs.data() + j * features, static_cast<Eigen::Index>(features)};
  }
};

SpectralVector spectralize(std::span<const double> q, std::size_t times, std::size_t features);

/// Conjugate transform back to the feature-major real vector; imaginary parts are dropped.
std::vector<double> inverse_spectralize(const SpectralVector& v);

/// Lag-indexed cross-correlation r(k), k in [-(T-1), T-1]; absent lags count as zero.
using LagFunction = std::map<long, double>;

/// lambda(m) = sum_k r(k) * exp(2*pi*i*m*k/T), eigenvalues of the circulant
/// approximation of the Toeplitz block generated by r.
std::vector<Complex> circulant_eigenvalues(const LagFunction& acf, std::size_t times);

/// Dense DT x DT (feature-major) matrix blockdiag(W) * Lambda * blockdiag(W^H).
/// Throws inconsistent_blocks if C_{T-j} != conj(C_j) beyond 1e-8.
Eigen::MatrixXd assemble_full_correlation(std::span<const Eigen::MatrixXcd> blocks, std::size_t times,
                                          std::size_t features);

/// Precomputed twiddles for the half spectrum j = 0..floor(T/2) of real series.
class DftTable {
public:
  explicit DftTable(std::size_t times);

  std::size_t times() const noexcept { return times_; }
  std::size_t half() const noexcept { return half_; }

  /// out[j*stride] = coefficient j of `series`, for j < half().
  void forward_half(const double* series, Complex* out, std::size_t stride) const;

  /// Multiplicity of frequency j in the full spectrum (1 for DC and Nyquist, else 2).
  double multiplicity(std::size_t j) const noexcept {
    return (j == 0 || (times_ % 2 == 0 && j == times_ / 2)) ? 1.0 : 2.0;
  }

private:
  std::size_t times_;
  std::size_t half_;
  std::vector<double> cos_;  // half_ x times_
  std::vector<double> sin_;
};

}  // namespace ckmm
