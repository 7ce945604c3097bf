#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckmm/copula.hpp"
#include "ckmm/dataset.hpp"
#include "ckmm/margins.hpp"

namespace ckmm {

struct FitConfig {
  double epsilon = 1e-5;
  std::size_t max_iterations = 200;
  std::size_t restarts = 10;
  double eta = 1e-2;
  /// First bandwidth probe, as a fraction of the current bandwidth.
  double delta_h = 1e-2;
  /// Admissible bandwidths as multiples of the initial Silverman bandwidth.
  double bandwidth_lower = 0.05;
  double bandwidth_upper = 3.0;
  std::size_t max_bandwidth_substeps = 10;
  /// k-means++ seedings per restart; the lowest-inertia partition initializes the restart.
  std::size_t kmeans_seedings = 10;
  std::uint64_t seed = 1;
  /// Worker threads for restarts; 0 means hardware concurrency.
  std::size_t threads = 1;
  double ridge = kDefaultRidge;

  /// Throws config when a field is out of range.
  void validate() const;
};

/// N x G posterior matrix, row-major.
struct Responsibilities {
  std::size_t subjects = 0;
  std::size_t clusters = 0;
  std::vector<double> p;

  Responsibilities() = default;
  Responsibilities(std::size_t n, std::size_t g) : subjects(n), clusters(g), p(n * g, 0.0) {}

  double& operator()(std::size_t n, std::size_t g) { return p[n * clusters + g]; }
  double operator()(std::size_t n, std::size_t g) const { return p[n * clusters + g]; }
  std::vector<double> column(std::size_t g) const;

  /// argmax per row, ties to the lowest index.
  std::vector<int> labels() const;

  static Responsibilities hard(std::span<const int> labels, std::size_t clusters);
};

struct CkmmModel {
  std::size_t clusters = 0;
  std::size_t features = 0;
  std::size_t times = 0;
  std::vector<double> pis;
  std::vector<SpectralCorrelation> corr;  // one per cluster
  std::vector<WeightedKde> kdes;          // cluster-major: kdes[g * D + d]
  /// Silverman bandwidths at initialization; bandwidth bounds are multiples of these.
  std::vector<double> initial_bandwidths;
  FitConfig config;

  const WeightedKde& kde(std::size_t g, std::size_t d) const { return kdes[g * features + d]; }
  double bandwidth(std::size_t g, std::size_t d) const { return kde(g, d).bandwidth(); }
};

struct FitResult {
  CkmmModel model;
  Responsibilities responsibilities;
  std::vector<int> labels;
  std::vector<double> loglik_trace;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t restart_index = 0;
  /// Final pseudo log-likelihood of every restart, in restart order.
  std::vector<double> restart_logliks;
  std::vector<std::string> warnings;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

struct EStepResult {
  Responsibilities responsibilities;
  double loglik = 0.0;
  /// N x G log(pi_g) + copula + smoothed margin terms.
  std::vector<double> log_joint;
};

/// K-means labels and the model computed from them by the M-step formulas.
std::pair<std::vector<int>, CkmmModel> initialize(const LongitudinalDataset& data, std::size_t clusters,
                                                  const FitConfig& config, std::uint64_t seed);

/// Model computed from hard labels: Silverman bandwidths, KDEs, blocks, priors.
CkmmModel model_from_labels(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                            const FitConfig& config);

/// Posteriors and observed pseudo log-likelihood, using the same binned KDE
/// evaluator as the fit loop so e_step(fit.model).loglik reproduces fit.loglik().
EStepResult e_step(const LongitudinalDataset& data, const CkmmModel& model);

/// Expected complete-data pseudo log-likelihood including the entropy term:
/// sum p (log joint) - sum p log p.
double pseudo_complete_loglik(const LongitudinalDataset& data, const Responsibilities& resp, const CkmmModel& model);

/// Weighted KDE per (cluster, feature) with the given bandwidths (cluster-major).
std::vector<WeightedKde> m_step_kde(const LongitudinalDataset& data, const Responsibilities& resp,
                                    std::span<const double> bandwidths);

/// Blocks per cluster from the spectra of quantiles under `kdes`.
std::vector<SpectralCorrelation> m_step_correlation(const LongitudinalDataset& data, const Responsibilities& resp,
                                                    std::span<const WeightedKde> kdes);

/// Column means of the responsibilities; appends a warning per cluster below 1/(10N).
std::vector<double> m_step_priors(const Responsibilities& resp, std::vector<std::string>* warnings = nullptr);

struct BandwidthSearch {
  double bandwidth = 0.0;
  double objective = 0.0;
  std::size_t evaluations = 0;
};

/// Secant bandwidth search: h1 = h0 + delta_h * h0, then
/// h_{i+1} = h_i + eta * (Q(h_i) - Q(h_{i-1})) / (h_i - h_{i-1}), stopping when
/// a proposal leaves [lower, upper], |dQ| < 1e-6 |Q|, or after the substep
/// budget. Returns the visited bandwidth with the largest Q; h0 unless a probe
/// strictly improves on q0.
BandwidthSearch secant_bandwidth_search(const std::function<double(double)>& objective, double h0, double q0,
                                        double lower, double upper, const FitConfig& config);

/// GEM with `config.restarts` k-means initializations; the best final pseudo
/// log-likelihood wins (ties to the lowest restart index).
FitResult fit(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config);

/// One GEM run from the given initial labels.
FitResult fit_from_labels(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                          const FitConfig& config);

/// GEM with every cluster's correlation held at `fixed` (the one-cluster
/// reference used by the normalized entropy criterion).
FitResult fit_fixed_correlation(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config,
                                const SpectralCorrelation& fixed);

/// -sum p log p with 0 log 0 = 0.
double entropy(const Responsibilities& resp);

/// Smoother trace of one KDE: sum_i m_i K_h(x_i, x_i) / f(x_i).
double kde_effective_parameters(const WeightedKde& kde);

/// -2 loglik + m_eff log N, m_eff = (G-1) + G T D(D+1)/2 + sum of KDE smoother traces.
double adjusted_bic(const FitResult& fit, const LongitudinalDataset& data);

struct NecTable {
  /// NEC(G) for G >= 2 where L(G) > L(1).
  std::map<std::size_t, double> values;
  /// Ẽ(1) / (L̃(1) - L(1)) from the fixed-correlation reference, if defined.
  std::optional<double> one_cluster;
  std::size_t best_multi = 0;
  std::size_t selected = 1;
  std::vector<std::string> warnings;
};

/// Normalized entropy criterion over `fits` (must contain G = 1). The G = 1
/// comparison uses `one_cluster_reference`, the fit of best_multi clusters with
/// the correlation fixed to the one-cluster estimate; without it `selected`
/// is best_multi (or 1 when no G >= 2 is defined).
NecTable nec(const std::map<std::size_t, FitResult>& fits, const FitResult* one_cluster_reference = nullptr);

}  // namespace ckmm
