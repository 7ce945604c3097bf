#include "ckmm/copula.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

struct Factor {
  Eigen::MatrixXcd inverse;
  double log_det = 0.0;
};

Factor factor_block(const Eigen::MatrixXcd& c, std::size_t j) {
  Eigen::LLT<Eigen::MatrixXcd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::singular_correlation,
                "spectral correlation block at frequency " + std::to_string(j) + " is not positive definite");
  }
  Factor f;
  const Eigen::MatrixXcd lmat = llt.matrixL();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const double d = lmat(i, i).real();
    if (!(d > 0.0)) {
      throw Error(ErrorCode::singular_correlation,
                  "spectral correlation block at frequency " + std::to_string(j) + " is not positive definite");
    }
    f.log_det += 2.0 * std::log(d);
  }
  f.inverse = llt.solve(Eigen::MatrixXcd::Identity(c.rows(), c.cols()));
  return f;
}

void check_shape(const SpectralCorrelation& corr) {
  if (corr.times == 0 || corr.features == 0 || corr.blocks.size() != corr.times) {
    throw Error(ErrorCode::invalid_dimension, "spectral correlation has inconsistent dimensions");
  }
}

// Averages C_j with conj(C_{T-j}) and forces each block Hermitian.
void symmetrize(std::vector<Eigen::MatrixXcd>& blocks) {
  const std::size_t t = blocks.size();
  for (std::size_t j = 0; j <= t / 2; ++j) {
    const std::size_t m = (t - j) % t;
    Eigen::MatrixXcd avg = 0.5 * (blocks[j] + blocks[m].conjugate());
    avg = 0.5 * (avg + avg.adjoint()).eval();
    blocks[j] = avg;
    blocks[m] = avg.conjugate();
  }
}

void add_ridge(SpectralCorrelation& corr, double ridge) {
  if (ridge > 0.0) {
    for (auto& b : corr.blocks) b.diagonal().array() += ridge;
  }
  corr.ridge = ridge;
}

void note_effective_size(SpectralCorrelation& corr, double total) {
  if (total < 1.0) {
    corr.warnings.push_back("ill-conditioned cluster: effective sample size " + std::to_string(total) + " < 1");
  }
}

}  // namespace

SpectralCorrelation SpectralCorrelation::identity(std::size_t times, std::size_t features) {
  if (times == 0 || features == 0) throw Error(ErrorCode::invalid_dimension, "T and D must be positive");
  const auto d = static_cast<Eigen::Index>(features);
  return SpectralCorrelation{times, features, std::vector<Eigen::MatrixXcd>(times, Eigen::MatrixXcd::Identity(d, d)),
                             0.0, {}};
}

double copula_log_density(const SpectralVector& v, const SpectralCorrelation& corr) {
  check_shape(corr);
  if (v.times != corr.times || v.features != corr.features) {
    throw Error(ErrorCode::invalid_dimension, "spectral vector and correlation dimensions differ");
  }
  double real_part = 0.0;
  double imag_part = 0.0;
  for (std::size_t j = 0; j < corr.times; ++j) {
    const Factor f = factor_block(corr.blocks[j], j);
    const auto vj = v.block(j);
    const Eigen::MatrixXcd a =
        f.inverse - Eigen::MatrixXcd::Identity(f.inverse.rows(), f.inverse.cols());
    const Complex quad = vj.dot(a * vj);  // vj^H a vj
    real_part += -0.5 * f.log_det - 0.5 * quad.real();
    imag_part += -0.5 * quad.imag();
  }
  if (std::abs(imag_part) > 1e-8 * std::max(1.0, std::abs(real_part))) {
    throw Error(ErrorCode::invalid_input, "copula quadratic form has a non-negligible imaginary part");
  }
  return real_part;
}

SpectralCorrelation weighted_spectral_covariance(std::span<const SpectralVector> vs, std::span<const double> weights,
                                                 double ridge) {
  if (vs.empty() || vs.size() != weights.size()) {
    throw Error(ErrorCode::invalid_dimension, "need one weight per spectral vector");
  }
  const std::size_t t = vs.front().times;
  const std::size_t d = vs.front().features;
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::invalid_input, "weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::degenerate_cluster, "all correlation weights are zero");
  const auto dim = static_cast<Eigen::Index>(d);
  SpectralCorrelation corr{t, d, std::vector<Eigen::MatrixXcd>(t, Eigen::MatrixXcd::Zero(dim, dim)), 0.0, {}};
  for (std::size_t n = 0; n < vs.size(); ++n) {
    if (vs[n].times != t || vs[n].features != d) throw Error(ErrorCode::invalid_dimension, "ragged spectral vectors");
    if (weights[n] == 0.0) continue;
    for (std::size_t j = 0; j < t; ++j) {
      const auto vj = vs[n].block(j);
      corr.blocks[j].noalias() += weights[n] * (vj * vj.adjoint());
    }
  }
  for (auto& b : corr.blocks) b /= total;
  symmetrize(corr.blocks);
  add_ridge(corr, ridge);
  note_effective_size(corr, total);
  return corr;
}

SpectralCorrelation weighted_spectral_covariance(const HalfSpectra& vs, std::span<const double> weights,
                                                 double ridge) {
  if (vs.subjects == 0 || vs.subjects != weights.size()) {
    throw Error(ErrorCode::invalid_dimension, "need one weight per spectral vector");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::invalid_input, "weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::degenerate_cluster, "all correlation weights are zero");
  const std::size_t t = vs.times;
  const std::size_t d = vs.features;
  std::vector<Complex> acc(vs.half * d * d, Complex{0.0, 0.0});
  for (std::size_t n = 0; n < vs.subjects; ++n) {
    const double w = weights[n];
    if (w == 0.0) continue;
    const Complex* v = vs.subject(n);
    for (std::size_t j = 0; j < vs.half; ++j) {
      const Complex* vj = v + j * d;
      Complex* a = acc.data() + j * d * d;
      for (std::size_t r = 0; r < d; ++r) {
        const Complex wr = w * vj[r];
        for (std::size_t c = 0; c < d; ++c) a[r * d + c] += wr * std::conj(vj[c]);
      }
    }
  }
  const auto dim = static_cast<Eigen::Index>(d);
  SpectralCorrelation corr{t, d, std::vector<Eigen::MatrixXcd>(t, Eigen::MatrixXcd::Zero(dim, dim)), 0.0, {}};
  for (std::size_t j = 0; j < vs.half; ++j) {
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        corr.blocks[j](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = acc[j * d * d + r * d + c] / total;
  }
  for (std::size_t j = vs.half; j < t; ++j) corr.blocks[j] = corr.blocks[t - j].conjugate();
  symmetrize(corr.blocks);
  add_ridge(corr, ridge);
  note_effective_size(corr, total);
  return corr;
}

void normalize_unit_diagonal(SpectralCorrelation& corr) {
  check_shape(corr);
  const auto d = static_cast<Eigen::Index>(corr.features);
  Eigen::VectorXd mean_diag = Eigen::VectorXd::Zero(d);
  for (const auto& b : corr.blocks) mean_diag += b.diagonal().real();
  mean_diag /= static_cast<double>(corr.times);
  Eigen::VectorXcd s(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(mean_diag(i) > 0.0)) {
      throw Error(ErrorCode::singular_correlation, "spectral correlation has a nonpositive time-domain variance");
    }
    s(i) = 1.0 / std::sqrt(mean_diag(i));
  }
  for (auto& b : corr.blocks) b = s.asDiagonal() * b * s.asDiagonal();
}

SpectralCorrelation estimate_blocks(std::span<const SpectralVector> vs, std::span<const double> weights) {
  SpectralCorrelation corr = weighted_spectral_covariance(vs, weights);
  normalize_unit_diagonal(corr);
  return corr;
}

Eigen::MatrixXd assemble_full_correlation(const SpectralCorrelation& corr) {
  check_shape(corr);
  return assemble_full_correlation(corr.blocks, corr.times, corr.features);
}

double invariant_violation(const SpectralCorrelation& corr) {
  check_shape(corr);
  double worst = 0.0;
  const auto d = static_cast<Eigen::Index>(corr.features);
  Eigen::VectorXd mean_diag = Eigen::VectorXd::Zero(d);
  for (std::size_t j = 0; j < corr.times; ++j) {
    const auto& b = corr.blocks[j];
    worst = std::max(worst, (b - b.adjoint()).cwiseAbs().maxCoeff());
    worst = std::max(worst, (b - corr.blocks[(corr.times - j) % corr.times].conjugate()).cwiseAbs().maxCoeff());
    mean_diag += b.diagonal().real();
  }
  mean_diag /= static_cast<double>(corr.times);
  worst = std::max(worst, (mean_diag.array() - 1.0).abs().maxCoeff());
  return worst;
}

CopulaEvaluator::CopulaEvaluator(const SpectralCorrelation& corr)
    : times_(corr.times), features_(corr.features), half_(corr.times / 2 + 1) {
  check_shape(corr);
  const DftTable mult(times_);
  inv_minus_identity_.resize(half_ * features_ * features_);
  multiplicity_.resize(half_);
  for (std::size_t j = 0; j < half_; ++j) {
    const Factor f = factor_block(corr.blocks[j], j);
    multiplicity_[j] = mult.multiplicity(j);
    constant_ += -0.5 * multiplicity_[j] * f.log_det;
    for (std::size_t r = 0; r < features_; ++r)
      for (std::size_t c = 0; c < features_; ++c) {
        Complex a = f.inverse(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        if (r == c) a -= 1.0;
        inv_minus_identity_[(j * features_ + r) * features_ + c] = a;
      }
  }
}

double CopulaEvaluator::log_density(const Complex* half_coeffs) const {
  double quad = 0.0;
  const std::size_t d = features_;
  for (std::size_t j = 0; j < half_; ++j) {
    const Complex* v = half_coeffs + j * d;
    const Complex* a = inv_minus_identity_.data() + j * d * d;
    double qj = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      Complex row{0.0, 0.0};
      for (std::size_t c = 0; c < d; ++c) row += a[r * d + c] * v[c];
      qj += (std::conj(v[r]) * row).real();
    }
    quad += multiplicity_[j] * qj;
  }
  return constant_ - 0.5 * quad;
}

}  // namespace ckmm
