#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ckmm/copula.hpp"
#include "ckmm/dataset.hpp"
#include "ckmm/margins.hpp"
#include "ckmm/simulate.hpp"

namespace ckmm {

/// Hubert-Arabie adjusted Rand index. Labels are arbitrary nonnegative ids.
/// Throws invalid_input on a length mismatch or an empty or negative label.
double ari(std::span<const int> a, std::span<const int> b);

/// Posterior labels under the scenario's true margins, true correlation
/// matrices and prior (1 - p, p).
std::vector<int> oracle_classify(const LongitudinalDataset& data, const Scenario& scenario);

/// Integrated squared error of the KDE against a parametric density:
/// 4001-point trapezoid over center +/- 8 sd.
double kde_mse(const WeightedKde& kde, const MarginSpec& truth);

/// Mean squared entrywise difference between the assembled estimate and `truth`.
double correlation_mse(const SpectralCorrelation& est, const Eigen::MatrixXd& truth);

/// mapping[g_fit] = g_true maximizing label agreement over all permutations of
/// G ids (G <= 8). Unused ids map to themselves.
std::vector<int> match_clusters(std::span<const int> fitted, std::span<const int> truth, int clusters);

}  // namespace ckmm
