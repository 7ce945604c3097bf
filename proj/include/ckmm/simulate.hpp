#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ckmm/copula.hpp"
#include "ckmm/dataset.hpp"
#include "ckmm/margins.hpp"
#include "ckmm/spectral.hpp"

namespace ckmm {

/// One cluster's bivariate moving-average process
///   x_{i,t} = e_{i,t} + theta_i1 e_{i,t-1} + theta_i2 e_{i,t-2},
/// with corr(e_1t, e_2t) = rho_eps and var(e_it) = var_eps, plus the margins
/// the Gaussian copula draws are pushed through.
struct ClusterProcess {
  double theta11 = 0.0;
  double theta12 = 0.0;
  double theta21 = 0.0;
  double theta22 = 0.0;
  double rho_cross = 0.0;
  double rho_eps = 0.0;
  double var_eps = 1.0;
  std::array<MarginSpec, 2> margins{};

  /// MA weights (1, theta_i1, theta_i2) of feature i in {0, 1}.
  std::array<double, 3> psi(std::size_t feature) const;

  /// Lag-zero cross-correlation implied by rho_eps.
  double implied_cross_correlation() const;

  /// Stationary variance of feature i.
  double feature_variance(std::size_t feature) const;
};

struct Scenario {
  std::string name;
  std::array<ClusterProcess, 2> clusters{};
  /// Probability that a subject belongs to the second cluster (label 1).
  double label_probability = 0.4;
  std::size_t subjects = 100;
  std::size_t times = 20;

  static constexpr std::size_t kFeatures = 2;
  static constexpr std::size_t kClusters = 2;
};

/// Error correlation that gives the target lag-zero cross-correlation.
/// Throws infeasible_scenario when |rho_eps| >= 1 would be needed.
double error_correlation_from_target(double theta11, double theta12, double theta21, double theta22,
                                     double rho_cross);

/// corr(X_{d,t}, X_{e,t+k}) for every lag with a nonzero value.
LagFunction lag_correlation(const ClusterProcess& process, std::size_t d, std::size_t e);

/// Feature-major DT x DT Toeplitz-block correlation of cluster g.
/// Throws infeasible_scenario when the result is not positive definite.
Eigen::MatrixXd build_covariance(const Scenario& scenario, std::size_t cluster, std::size_t times);

/// Frequency blocks of the circulant approximation to build_covariance.
SpectralCorrelation true_spectral_correlation(const Scenario& scenario, std::size_t cluster, std::size_t times);

struct SimulatedData {
  LongitudinalDataset data;
  std::vector<int> labels;
};

/// Bernoulli labels, N(0, R_g) copula draws via Cholesky, parametric margins.
SimulatedData generate_dataset(const Scenario& scenario, std::uint64_t seed);

/// S1..S6 with the default N = 100 and T = 20.
std::vector<Scenario> scenario_catalog();

/// Catalog entry by name ("S1".."S6") with the given T and N.
/// Throws invalid_input for unknown names.
Scenario scenario_by_name(const std::string& name, std::size_t times, std::size_t subjects = 100);

}  // namespace ckmm
