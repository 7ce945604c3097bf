#pragma once

// Shared oracles and generators for the unit and acceptance suites. Everything
// here is built from dense matrices or brute force, independent of the
// frequency-block code paths under test.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "ckmm/rng.hpp"
#include "ckmm/spectral.hpp"

namespace ckmm::testing {

/// Random Hermitian PD blocks with C_{T-j} = conj(C_j).
inline std::vector<Eigen::MatrixXcd> random_spectral_blocks(Rng& rng, std::size_t t, std::size_t d) {
  const auto dim = static_cast<Eigen::Index>(d);
  std::vector<Eigen::MatrixXcd> blocks(t);
  for (std::size_t j = 0; j <= t / 2; ++j) {
    const bool self_mirror = (j == 0) || (2 * j == t);
    Eigen::MatrixXcd a(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c)
        a(r, c) = {rng.normal(), self_mirror ? 0.0 : rng.normal()};
    Eigen::MatrixXcd b = 0.5 * a * a.adjoint() + 0.3 * Eigen::MatrixXcd::Identity(dim, dim);
    blocks[j] = b;
    blocks[(t - j) % t] = b.conjugate();
  }
  return blocks;
}

/// blockdiag(W^H) as a dense DT x DT matrix.
inline Eigen::MatrixXcd dense_block_dft_adjoint(std::size_t t, std::size_t d) {
  const Eigen::MatrixXcd w = dft_basis(t).matrix;
  const auto n = static_cast<Eigen::Index>(t * d);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t f = 0; f < d; ++f) {
    const auto o = static_cast<Eigen::Index>(f * t);
    out.block(o, o, static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) = w.adjoint();
  }
  return out;
}

/// Permutation matrix with P(mD + n, Tn + m) = 1, written from the 1-based rule
/// i = mD + n, j = T(n-1) + (m+1).
inline Eigen::MatrixXd dense_permutation(std::size_t t, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(t * d);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t m = 0; m < t; ++m)
    for (std::size_t f1 = 1; f1 <= d; ++f1) {
      const std::size_t i1 = m * d + f1;
      const std::size_t j1 = t * (f1 - 1) + (m + 1);
      p(static_cast<Eigen::Index>(i1 - 1), static_cast<Eigen::Index>(j1 - 1)) = 1.0;
    }
  return p;
}

/// Dense R = blockdiag(W) Lambda blockdiag(W^H) where Lambda = P^T blockdiag(C_j) P.
inline Eigen::MatrixXcd dense_assemble(const std::vector<Eigen::MatrixXcd>& blocks, std::size_t t, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(t * d);
  const auto dim = static_cast<Eigen::Index>(d);
  Eigen::MatrixXcd bd = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t j = 0; j < t; ++j) bd.block(static_cast<Eigen::Index>(j) * dim, static_cast<Eigen::Index>(j) * dim, dim, dim) = blocks[j];
  const Eigen::MatrixXcd p = dense_permutation(t, d).cast<std::complex<double>>();
  const Eigen::MatrixXcd lambda = p.transpose() * bd * p;
  const Eigen::MatrixXcd wh = dense_block_dft_adjoint(t, d);
  return wh.adjoint() * lambda * wh;
}

/// Dense Gaussian copula log density -1/2 log|R| - 1/2 q^T (R^{-1} - I) q.
inline double dense_copula_log_density(const Eigen::MatrixXd& r, const Eigen::VectorXd& q) {
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  double log_det = 0.0;
  const Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < r.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
  const Eigen::VectorXd rq = llt.solve(q);
  return -0.5 * log_det - 0.5 * (q.dot(rq) - q.squaredNorm());
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace ckmm::testing
