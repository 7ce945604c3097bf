#include "ckmm/simulate.hpp"

#include <cmath>
#include <string>

#include "ckmm/error.hpp"
#include "ckmm/rng.hpp"

namespace ckmm {
namespace {

// Sum_l psi_d(l) psi_e(l + k): covariance of the MA weights at lag k up to the error covariance.
double weight_overlap(const std::array<double, 3>& a, const std::array<double, 3>& b, long k) {
  double s = 0.0;
  for (long l = 0; l < 3; ++l) {
    const long m = l + k;
    if (m >= 0 && m < 3) s += a[static_cast<std::size_t>(l)] * b[static_cast<std::size_t>(m)];
  }
  return s;
}

ClusterProcess cluster_one(double rho_cross, double rho_eps) {
  ClusterProcess p;
  p.theta11 = -0.2679;
  p.theta21 = 0.6268;
  p.rho_cross = rho_cross;
  p.rho_eps = rho_eps;
  p.margins = {MarginSpec::normal(1.0, 1.0718), MarginSpec::student_t(7.0908)};
  return p;
}

ClusterProcess cluster_two(double rho_cross, double rho_eps) {
  ClusterProcess p;
  p.theta11 = 0.2532;
  p.theta12 = 0.0533;
  p.theta21 = 0.5;
  p.rho_cross = rho_cross;
  p.rho_eps = rho_eps;
  p.margins = {MarginSpec::normal(1.0, 1.0669), MarginSpec::student_t(10.0)};
  return p;
}

Scenario make(std::string name, double c1, double e1, double c2, double e2) {
  Scenario s;
  s.name = std::move(name);
  s.clusters = {cluster_one(c1, e1), cluster_two(c2, e2)};
  return s;
}

}  // namespace

std::array<double, 3> ClusterProcess::psi(std::size_t feature) const {
  return feature == 0 ? std::array<double, 3>{1.0, theta11, theta12} : std::array<double, 3>{1.0, theta21, theta22};
}

double ClusterProcess::feature_variance(std::size_t feature) const {
  const auto w = psi(feature);
  return weight_overlap(w, w, 0) * var_eps;
}

double ClusterProcess::implied_cross_correlation() const {
  const auto a = psi(0);
  const auto b = psi(1);
  return rho_eps * weight_overlap(a, b, 0) / std::sqrt(weight_overlap(a, a, 0) * weight_overlap(b, b, 0));
}

double error_correlation_from_target(double theta11, double theta12, double theta21, double theta22,
                                     double rho_cross) {
  if (!(std::abs(rho_cross) < 1.0)) throw Error(ErrorCode::infeasible_scenario, "target cross-correlation must lie in (-1, 1)");
  const std::array<double, 3> a{1.0, theta11, theta12};
  const std::array<double, 3> b{1.0, theta21, theta22};
  const double overlap = weight_overlap(a, b, 0);
  if (rho_cross == 0.0) return 0.0;
  if (overlap == 0.0) throw Error(ErrorCode::infeasible_scenario, "MA weights are orthogonal; no error correlation reaches the target");
  const double rho = rho_cross * std::sqrt(weight_overlap(a, a, 0) * weight_overlap(b, b, 0)) / overlap;
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::infeasible_scenario, "target cross-correlation needs error correlation " + std::to_string(rho));
  }
  return rho;
}

LagFunction lag_correlation(const ClusterProcess& process, std::size_t d, std::size_t e) {
  if (d > 1 || e > 1) throw Error(ErrorCode::invalid_dimension, "scenario processes have two features");
  const auto a = process.psi(d);
  const auto b = process.psi(e);
  const double c = d == e ? 1.0 : process.rho_eps;
  const double scale = std::sqrt(weight_overlap(a, a, 0) * weight_overlap(b, b, 0));
  LagFunction acf;
  for (long k = -2; k <= 2; ++k) {
    const double v = c * weight_overlap(a, b, k) / scale;
    if (v != 0.0) acf[k] = v;
  }
  return acf;
}

Eigen::MatrixXd build_covariance(const Scenario& scenario, std::size_t cluster, std::size_t times) {
  if (cluster >= Scenario::kClusters || times == 0) throw Error(ErrorCode::invalid_dimension, "bad cluster index or T");
  const auto& proc = scenario.clusters[cluster];
  const std::size_t d = Scenario::kFeatures;
  const std::size_t n = d * times;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t g = 0; g < d; ++g) {
      const auto acf = lag_correlation(proc, f, g);
      for (std::size_t t = 0; t < times; ++t)
        for (const auto& [k, v] : acf) {
          const long s = static_cast<long>(t) + k;
          if (s < 0 || s >= static_cast<long>(times)) continue;
          r(static_cast<Eigen::Index>(f * times + t), static_cast<Eigen::Index>(g * times + static_cast<std::size_t>(s))) = v;
        }
    }
  if (Eigen::LLT<Eigen::MatrixXd>(r).info() != Eigen::Success) {
    throw Error(ErrorCode::infeasible_scenario, "scenario correlation matrix is not positive definite");
  }
  return r;
}

SpectralCorrelation true_spectral_correlation(const Scenario& scenario, std::size_t cluster, std::size_t times) {
  if (cluster >= Scenario::kClusters || times == 0) throw Error(ErrorCode::invalid_dimension, "bad cluster index or T");
  const std::size_t d = Scenario::kFeatures;
  SpectralCorrelation corr{times, d, std::vector<Eigen::MatrixXcd>(times, Eigen::MatrixXcd::Zero(2, 2)), 0.0, {}};
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t g = 0; g < d; ++g) {
      const auto lam = circulant_eigenvalues(lag_correlation(scenario.clusters[cluster], f, g), times);
      for (std::size_t m = 0; m < times; ++m) corr.blocks[m](static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(g)) = lam[m];
    }
  return corr;
}

SimulatedData generate_dataset(const Scenario& scenario, std::uint64_t seed) {
  const std::size_t n = scenario.subjects;
  const std::size_t t = scenario.times;
  const std::size_t d = Scenario::kFeatures;
  if (n == 0 || t == 0) throw Error(ErrorCode::invalid_dimension, "scenario needs N > 0 and T > 0");
  std::array<Eigen::MatrixXd, Scenario::kClusters> chol;
  for (std::size_t g = 0; g < Scenario::kClusters; ++g) {
    Eigen::LLT<Eigen::MatrixXd> llt(build_covariance(scenario, g, t));
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::infeasible_scenario, "Cholesky factorization failed");
    chol[g] = llt.matrixL();
  }

  Rng rng(seed);
  SimulatedData out{LongitudinalDataset(n, d, t), std::vector<int>(n)};
  for (auto& l : out.labels) l = rng.bernoulli(scenario.label_probability) ? 1 : 0;

  Eigen::VectorXd z(static_cast<Eigen::Index>(d * t));
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(out.labels[i]);
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
    const Eigen::VectorXd q = chol[g].triangularView<Eigen::Lower>() * z;
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t s = 0; s < t; ++s)
        out.data(i, f, s) = margin_from_normal_score(scenario.clusters[g].margins[f], q(static_cast<Eigen::Index>(f * t + s)));
  }
  return out;
}

std::vector<Scenario> scenario_catalog() {
  return {
      make("S1", 0.0, 0.0, 0.0, 0.0),
      make("S2", 0.25, 0.3671, 0.25, 0.2562),
      make("S3", 0.5, 0.7342, 0.5, 0.5125),
      make("S4", 0.0, 0.0, 0.25, 0.2562),
      make("S5", 0.0, 0.0, 0.5, 0.5125),
      make("S6", 0.25, 0.3671, 0.5, 0.5125),
  };
}

Scenario scenario_by_name(const std::string& name, std::size_t times, std::size_t subjects) {
  for (auto s : scenario_catalog()) {
    if (s.name == name) {
      s.times = times;
      s.subjects = subjects;
      return s;
    }
  }
  throw Error(ErrorCode::invalid_input, "unknown scenario '" + name + "' (valid ids: S1, S2, S3, S4, S5, S6)");
}

}  // namespace ckmm
