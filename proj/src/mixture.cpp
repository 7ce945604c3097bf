#include "ckmm/mixture.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "ckmm/error.hpp"
#include "ckmm/kmeans.hpp"
#include "ckmm/rng.hpp"
#include "ckmm/spectral.hpp"

namespace ckmm {
namespace {

constexpr double kBandwidthFloorFraction = 1e-4;

// Smoothed-margin and quantile-spectrum cache of one (cluster, feature) KDE.
struct FeatureColumn {
  KdeGrid grid;
  std::vector<double> smoothed;  // N: sum over t of the smoothed log density
  std::vector<Complex> half;     // N x H: half spectrum of the quantile series
};

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double pooled_sd(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

SpectralCorrelation blend(const SpectralCorrelation& a, const SpectralCorrelation& b, double alpha) {
  SpectralCorrelation out = a;
  for (std::size_t j = 0; j < out.blocks.size(); ++j) out.blocks[j] = alpha * a.blocks[j] + (1.0 - alpha) * b.blocks[j];
  out.warnings.clear();
  return out;
}

void add_warning(std::vector<std::string>& warnings, const std::string& w) {
  if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(w);
}

class Engine {
public:
  Engine(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config,
         const SpectralCorrelation* fixed)
      : data_(data),
        n_(data.subjects()),
        d_(data.features()),
        t_(data.times()),
        g_(clusters),
        config_(config),
        fixed_(fixed),
        dft_(data.times()),
        h_(dft_.half()),
        resp_(data.subjects(), clusters) {
    if (n_ == 0 || d_ == 0 || t_ == 0) throw Error(ErrorCode::invalid_dimension, "empty dataset");
    for (std::size_t d = 0; d < d_; ++d) {
      points_.push_back(data.feature_values(d));
      floors_.push_back(kBandwidthFloorFraction * pooled_sd(points_.back()));
    }
    if (fixed_ && (fixed_->times != t_ || fixed_->features != d_)) {
      throw Error(ErrorCode::invalid_dimension, "fixed correlation does not match the data");
    }
  }

  void start(const CkmmModel& m) {
    if (m.features != d_ || m.times != t_ || m.clusters != g_) {
      throw Error(ErrorCode::invalid_dimension, "model dimensions do not match the data");
    }
    pis_ = m.pis;
    corr_ = m.corr;
    initial_h_ = m.initial_bandwidths;
    columns_.clear();
    for (std::size_t g = 0; g < g_; ++g)
      for (std::size_t d = 0; d < d_; ++d) columns_.push_back(evaluate(d, m.kde(g, d)));
    copulas_.clear();
    for (std::size_t g = 0; g < g_; ++g) copulas_.emplace_back(corr_[g]);
    cop_.assign(n_ * g_, 0.0);
    for (std::size_t g = 0; g < g_; ++g) {
      std::vector<double> c;
      copula_terms(g, d_, nullptr, copulas_[g], c);
      for (std::size_t n = 0; n < n_; ++n) cop_[n * g_ + g] = c[n];
    }
  }

  // Posteriors from the cached terms; returns the observed pseudo log-likelihood.
  double e_step() {
    log_joint_.assign(n_ * g_, 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < n_; ++n) {
      double* row = log_joint_.data() + n * g_;
      for (std::size_t g = 0; g < g_; ++g) {
        double v = std::log(pis_[g]) + cop_[n * g_ + g];
        for (std::size_t d = 0; d < d_; ++d) v += column(g, d).smoothed[n];
        row[g] = v;
      }
      const double lse = log_sum_exp(row, g_);
      if (!std::isfinite(lse)) {
        throw Error(ErrorCode::numerical_underflow, "all cluster terms underflow for subject " + std::to_string(n));
      }
      for (std::size_t g = 0; g < g_; ++g) resp_(n, g) = std::exp(row[g] - lse);
      total += lse;
    }
    return total;
  }

  void m_step() {
    for (std::size_t g = 0; g < g_; ++g) {
      const std::vector<double> w = resp_.column(g);
      for (std::size_t d = 0; d < d_; ++d) {
        update_kde(g, d, w);
        update_bandwidth(g, d, w);
      }
      if (!fixed_) update_correlation(g, w);
    }
    pis_ = m_step_priors(resp_, &warnings_);
    for (auto& p : pis_) p = std::max(p, std::numeric_limits<double>::min());
    const double s = std::accumulate(pis_.begin(), pis_.end(), 0.0);
    for (auto& p : pis_) p /= s;
  }

  void set_responsibilities(const Responsibilities& r) { resp_ = r; }
  const Responsibilities& responsibilities() const { return resp_; }
  const std::vector<double>& log_joint() const { return log_joint_; }
  std::vector<std::string>& warnings() { return warnings_; }

  CkmmModel model() const {
    CkmmModel m;
    m.clusters = g_;
    m.features = d_;
    m.times = t_;
    m.pis = pis_;
    m.corr = corr_;
    for (const auto& c : columns_) m.kdes.push_back(c.grid.kde());
    m.initial_bandwidths = initial_h_;
    m.config = config_;
    return m;
  }

  FeatureColumn evaluate(std::size_t d, const WeightedKde& kde) const {
    FeatureColumn col{KdeGrid(kde), std::vector<double>(n_), std::vector<Complex>(n_ * h_)};
    std::vector<double> q(t_);
    for (std::size_t n = 0; n < n_; ++n) {
      const auto x = data_.series(n, d);
      double s = 0.0;
      for (std::size_t t = 0; t < t_; ++t) {
        s += col.grid.smoothed_log_density(x[t]);
        q[t] = normal_quantile(std::clamp(col.grid.cdf(x[t]), kCdfClip, 1.0 - kCdfClip));
      }
      col.smoothed[n] = s;
      dft_.forward_half(q.data(), col.half.data() + n * h_, 1);
    }
    return col;
  }

private:
  const FeatureColumn& column(std::size_t g, std::size_t d) const { return columns_[g * d_ + d]; }

  // Copula term of every subject in cluster g; feature `swap` (if < D) read from `cand`.
  void copula_terms(std::size_t g, std::size_t swap, const FeatureColumn* cand, const CopulaEvaluator& cop,
                    std::vector<double>& out) const {
    out.resize(n_);
    std::vector<Complex> buf(h_ * d_);
    for (std::size_t n = 0; n < n_; ++n) {
      for (std::size_t d = 0; d < d_; ++d) {
        const FeatureColumn& c = (d == swap && cand) ? *cand : column(g, d);
        const Complex* src = c.half.data() + n * h_;
        for (std::size_t j = 0; j < h_; ++j) buf[j * d_ + d] = src[j];
      }
      out[n] = cop.log_density(buf.data());
    }
  }

  // Cluster-g part of the expected complete-data objective; `swap`/`cand` as above.
  double cluster_objective(std::size_t g, std::span<const double> w, std::size_t swap, const FeatureColumn* cand,
                           const std::vector<double>& cop) const {
    double q = 0.0;
    for (std::size_t n = 0; n < n_; ++n) {
      if (w[n] == 0.0) continue;
      double v = cop[n];
      for (std::size_t d = 0; d < d_; ++d) v += (d == swap && cand ? *cand : column(g, d)).smoothed[n];
      q += w[n] * v;
    }
    return q;
  }

  double current_objective(std::size_t g, std::span<const double> w) const {
    std::vector<double> cop(n_);
    for (std::size_t n = 0; n < n_; ++n) cop[n] = cop_[n * g_ + g];
    return cluster_objective(g, w, d_, nullptr, cop);
  }

  void commit_column(std::size_t g, std::size_t d, FeatureColumn&& col, const std::vector<double>& cop) {
    columns_[g * d_ + d] = std::move(col);
    for (std::size_t n = 0; n < n_; ++n) cop_[n * g_ + g] = cop[n];
  }

  // M-step 1: KDE weights move to the current responsibilities, guarded.
  void update_kde(std::size_t g, std::size_t d, const std::vector<double>& w) {
    const WeightedKde& old = column(g, d).grid.kde();
    const double q_old = current_objective(g, w);
    for (double alpha : {1.0, 0.5, 0.25}) {
      std::vector<double> mix(n_);
      const auto ow = old.weights();
      const double scale = old.weight_total() > 0.0 ? 1.0 / old.weight_total() : 0.0;
      double total = 0.0;
      for (std::size_t n = 0; n < n_; ++n) {
        mix[n] = alpha * w[n] + (1.0 - alpha) * ow[n] * scale * std::accumulate(w.begin(), w.end(), 0.0);
        total += mix[n];
      }
      if (!(total > 0.0)) continue;
      try {
        FeatureColumn cand = evaluate(d, WeightedKde(points_[d], mix, old.bandwidth()));
        std::vector<double> cop;
        copula_terms(g, d, &cand, copulas_[g], cop);
        if (cluster_objective(g, w, d, &cand, cop) >= q_old) {
          commit_column(g, d, std::move(cand), cop);
          return;
        }
      } catch (const Error&) {
        // degenerate candidate: keep the current KDE
      }
    }
  }

  // M-step 2: secant bandwidth search, keeps the best visited bandwidth.
  void update_bandwidth(std::size_t g, std::size_t d, const std::vector<double>& w) {
    const WeightedKde& cur = column(g, d).grid.kde();
    const double h_init = initial_h_[g * d_ + d];
    double lower = config_.bandwidth_lower * h_init;
    if (lower < floors_[d]) {
      lower = floors_[d];
      add_warning(warnings_, "bandwidth lower bound raised to 1e-4 x feature spread for feature " + std::to_string(d));
    }
    const double upper = config_.bandwidth_upper * h_init;
    std::optional<FeatureColumn> best_col;
    std::vector<double> best_cop;
    double best_q = current_objective(g, w);
    const auto weights = std::vector<double>(cur.weights().begin(), cur.weights().end());
    auto objective = [&](double h) {
      FeatureColumn cand = evaluate(d, WeightedKde(points_[d], weights, h));
      std::vector<double> cop;
      copula_terms(g, d, &cand, copulas_[g], cop);
      const double q = cluster_objective(g, w, d, &cand, cop);
      if (q > best_q) {
        best_q = q;
        best_col = std::move(cand);
        best_cop = std::move(cop);
      }
      return q;
    };
    secant_bandwidth_search(objective, cur.bandwidth(), best_q, lower, upper, config_);
    if (best_col) commit_column(g, d, std::move(*best_col), best_cop);
  }

  // M-step 3: weighted spectral covariance, unit-diagonal rescale, guarded blend.
  void update_correlation(std::size_t g, const std::vector<double>& w) {
    HalfSpectra spectra(n_, t_, d_);
    for (std::size_t n = 0; n < n_; ++n)
      for (std::size_t d = 0; d < d_; ++d) {
        const Complex* src = column(g, d).half.data() + n * h_;
        for (std::size_t j = 0; j < h_; ++j) spectra.subject(n)[j * d_ + d] = src[j];
      }
    SpectralCorrelation target;
    try {
      target = weighted_spectral_covariance(spectra, w, config_.ridge);
      normalize_unit_diagonal(target);
    } catch (const Error&) {
      return;
    }
    for (const auto& msg : target.warnings) add_warning(warnings_, "cluster " + std::to_string(g) + ": " + msg);
    const double q_old = current_objective(g, w);
    for (double alpha : {1.0, 0.5, 0.25, 0.125}) {
      try {
        SpectralCorrelation cand = blend(target, corr_[g], alpha);
        CopulaEvaluator cop_eval(cand);
        std::vector<double> cop;
        copula_terms(g, d_, nullptr, cop_eval, cop);
        if (cluster_objective(g, w, d_, nullptr, cop) >= q_old) {
          corr_[g] = std::move(cand);
          copulas_[g] = std::move(cop_eval);
          for (std::size_t n = 0; n < n_; ++n) cop_[n * g_ + g] = cop[n];
          return;
        }
      } catch (const Error&) {
      }
    }
  }

  const LongitudinalDataset& data_;
  std::size_t n_, d_, t_, g_;
  FitConfig config_;
  const SpectralCorrelation* fixed_;
  DftTable dft_;
  std::size_t h_;
  std::vector<std::vector<double>> points_;
  std::vector<double> floors_;

  std::vector<double> pis_;
  std::vector<SpectralCorrelation> corr_;
  std::vector<double> initial_h_;
  std::vector<FeatureColumn> columns_;
  std::vector<CopulaEvaluator> copulas_;
  std::vector<double> cop_;
  Responsibilities resp_;
  std::vector<double> log_joint_;
  std::vector<std::string> warnings_;
};

CkmmModel build_initial_model(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                              const FitConfig& config, const SpectralCorrelation* fixed) {
  const std::size_t n = data.subjects();
  const std::size_t d = data.features();
  const std::size_t t = data.times();
  if (labels.size() != n) throw Error(ErrorCode::invalid_dimension, "need one initial label per subject");
  const Responsibilities resp = Responsibilities::hard(labels, clusters);
  CkmmModel m;
  m.clusters = clusters;
  m.features = d;
  m.times = t;
  m.config = config;
  for (std::size_t g = 0; g < clusters; ++g) {
    const auto w = resp.column(g);
    std::vector<double> point_w(n * t);
    for (std::size_t i = 0; i < n; ++i) std::fill_n(point_w.begin() + static_cast<std::ptrdiff_t>(i * t), t, w[i]);
    for (std::size_t f = 0; f < d; ++f) {
      const auto x = data.feature_values(f);
      const double h0 = silverman_bandwidth(x, point_w);
      m.initial_bandwidths.push_back(h0);
      m.kdes.push_back(WeightedKde(x, w, h0));
    }
  }
  Engine engine(data, clusters, config, fixed);
  if (fixed) {
    m.corr.assign(clusters, *fixed);
  } else {
    for (std::size_t g = 0; g < clusters; ++g) {
      std::vector<SpectralVector> vs;
      const auto w = resp.column(g);
      HalfSpectra spectra(n, t, d);
      for (std::size_t f = 0; f < d; ++f) {
        const FeatureColumn col = engine.evaluate(f, m.kde(g, f));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < spectra.half; ++j) spectra.subject(i)[j * d + f] = col.half[i * spectra.half + j];
      }
      SpectralCorrelation c = weighted_spectral_covariance(spectra, w, config.ridge);
      normalize_unit_diagonal(c);
      m.corr.push_back(std::move(c));
    }
  }
  m.pis = m_step_priors(resp);
  return m;
}

FitResult run_gem(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                  const FitConfig& config, const SpectralCorrelation* fixed) {
  FitResult r;
  Engine engine(data, clusters, config, fixed);
  engine.start(build_initial_model(data, labels, clusters, config, fixed));
  for (std::size_t k = 0;; ++k) {
    const double ll = engine.e_step();
    r.loglik_trace.push_back(ll);
    r.iterations = k;
    if (k > 0) {
      const double prev = r.loglik_trace[k - 1];
      if (std::abs(ll - prev) < config.epsilon * std::abs(ll)) {
        r.converged = true;
        break;
      }
    }
    if (k == config.max_iterations) break;
    engine.m_step();
  }
  r.model = engine.model();
  r.responsibilities = engine.responsibilities();
  r.labels = r.responsibilities.labels();
  r.warnings = engine.warnings();
  if (!r.converged) r.warnings.push_back("maximum iterations reached before convergence");
  return r;
}

std::size_t worker_count(const FitConfig& config, std::size_t jobs) {
  std::size_t t = config.threads;
  if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(t, jobs));
}

FitResult fit_restarts(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config,
                       const SpectralCorrelation* fixed) {
  config.validate();
  if (clusters == 0 || data.subjects() <= clusters) {
    throw Error(ErrorCode::invalid_dimension, "need N > G >= 1");
  }
  const std::size_t restarts = config.restarts;
  std::vector<std::optional<FitResult>> results(restarts);
  std::vector<std::string> failures(restarts);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t r = next++; r < restarts; r = next++) {
      try {
        Rng rng(derive_seed(config.seed, r));
        const auto km = kmeans(data, clusters, rng, 50, config.kmeans_seedings);
        results[r] = run_gem(data, km.labels, clusters, config, fixed);
      } catch (const Error& e) {
        failures[r] = e.what();
      }
    }
  };
  const std::size_t workers = worker_count(config, restarts);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  std::optional<std::size_t> best;
  std::vector<double> lls(restarts, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < restarts; ++r) {
    if (!results[r]) continue;
    lls[r] = results[r]->loglik();
    if (!best || lls[r] > lls[*best]) best = r;
  }
  if (!best) throw Error(ErrorCode::degenerate_cluster, "every restart failed: " + failures.front());
  FitResult out = std::move(*results[*best]);
  out.restart_index = *best;
  out.restart_logliks = lls;
  for (std::size_t r = 0; r < restarts; ++r)
    if (!failures[r].empty()) out.warnings.push_back("restart " + std::to_string(r) + " failed: " + failures[r]);
  return out;
}

}  // namespace

void FitConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::config, what); };
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (restarts == 0) bad("restarts must be positive");
  if (kmeans_seedings == 0) bad("kmeans_seedings must be positive");
  if (!(eta > 0.0)) bad("eta must be positive");
  if (!(delta_h > 0.0)) bad("delta_h must be positive");
  if (!(bandwidth_lower > 0.0) || !(bandwidth_upper > bandwidth_lower)) bad("bandwidth bounds must satisfy 0 < lower < upper");
  if (!(bandwidth_lower <= 1.0 && bandwidth_upper >= 1.0)) bad("bandwidth bounds must bracket 1");
  if (!(ridge >= 0.0)) bad("ridge must be nonnegative");
}

std::vector<double> Responsibilities::column(std::size_t g) const {
  std::vector<double> c(subjects);
  for (std::size_t n = 0; n < subjects; ++n) c[n] = (*this)(n, g);
  return c;
}

std::vector<int> Responsibilities::labels() const {
  std::vector<int> out(subjects, 0);
  for (std::size_t n = 0; n < subjects; ++n) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < clusters; ++g)
      if ((*this)(n, g) > (*this)(n, best)) best = g;
    out[n] = static_cast<int>(best);
  }
  return out;
}

Responsibilities Responsibilities::hard(std::span<const int> labels, std::size_t clusters) {
  Responsibilities r(labels.size(), clusters);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= clusters) {
      throw Error(ErrorCode::invalid_input, "label " + std::to_string(labels[n]) + " outside [0, G)");
    }
    r(n, static_cast<std::size_t>(labels[n])) = 1.0;
  }
  return r;
}

std::pair<std::vector<int>, CkmmModel> initialize(const LongitudinalDataset& data, std::size_t clusters,
                                                  const FitConfig& config, std::uint64_t seed) {
  if (clusters == 0 || data.subjects() <= clusters) throw Error(ErrorCode::invalid_dimension, "need N > G >= 1");
  Rng rng(seed);
  auto km = kmeans(data, clusters, rng, 50, config.kmeans_seedings);
  CkmmModel m = build_initial_model(data, km.labels, clusters, config, nullptr);
  return {std::move(km.labels), std::move(m)};
}

CkmmModel model_from_labels(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                            const FitConfig& config) {
  return build_initial_model(data, labels, clusters, config, nullptr);
}

EStepResult e_step(const LongitudinalDataset& data, const CkmmModel& model) {
  Engine engine(data, model.clusters, model.config, nullptr);
  engine.start(model);
  EStepResult r;
  r.loglik = engine.e_step();
  r.responsibilities = engine.responsibilities();
  r.log_joint = engine.log_joint();
  return r;
}

double pseudo_complete_loglik(const LongitudinalDataset& data, const Responsibilities& resp, const CkmmModel& model) {
  if (resp.subjects != data.subjects() || resp.clusters != model.clusters) {
    throw Error(ErrorCode::invalid_dimension, "responsibilities do not match the data and model");
  }
  const auto es = e_step(data, model);
  double q = 0.0;
  for (std::size_t i = 0; i < resp.p.size(); ++i)
    if (resp.p[i] > 0.0) q += resp.p[i] * es.log_joint[i];
  return q + entropy(resp);
}

std::vector<WeightedKde> m_step_kde(const LongitudinalDataset& data, const Responsibilities& resp,
                                    std::span<const double> bandwidths) {
  const std::size_t d = data.features();
  if (bandwidths.size() != resp.clusters * d) throw Error(ErrorCode::invalid_dimension, "need G x D bandwidths");
  std::vector<WeightedKde> out;
  for (std::size_t g = 0; g < resp.clusters; ++g) {
    const auto w = resp.column(g);
    for (std::size_t f = 0; f < d; ++f) out.push_back(kde_update(data.feature_values(f), w, bandwidths[g * d + f]));
  }
  return out;
}

std::vector<SpectralCorrelation> m_step_correlation(const LongitudinalDataset& data, const Responsibilities& resp,
                                                    std::span<const WeightedKde> kdes) {
  const std::size_t n = data.subjects();
  const std::size_t d = data.features();
  const std::size_t t = data.times();
  if (kdes.size() != resp.clusters * d) throw Error(ErrorCode::invalid_dimension, "need G x D KDEs");
  FitConfig cfg;
  Engine engine(data, resp.clusters, cfg, nullptr);
  std::vector<SpectralCorrelation> out;
  for (std::size_t g = 0; g < resp.clusters; ++g) {
    HalfSpectra spectra(n, t, d);
    for (std::size_t f = 0; f < d; ++f) {
      const FeatureColumn col = engine.evaluate(f, kdes[g * d + f]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < spectra.half; ++j) spectra.subject(i)[j * d + f] = col.half[i * spectra.half + j];
    }
    SpectralCorrelation c = weighted_spectral_covariance(spectra, resp.column(g));
    normalize_unit_diagonal(c);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> m_step_priors(const Responsibilities& resp, std::vector<std::string>* warnings) {
  std::vector<double> pis(resp.clusters, 0.0);
  for (std::size_t n = 0; n < resp.subjects; ++n)
    for (std::size_t g = 0; g < resp.clusters; ++g) pis[g] += resp(n, g);
  const double n = static_cast<double>(resp.subjects);
  for (std::size_t g = 0; g < resp.clusters; ++g) {
    pis[g] /= n;
    if (warnings && pis[g] < 1.0 / (10.0 * n)) {
      add_warning(*warnings, "degenerate cluster " + std::to_string(g) + ": prior below 1/(10N)");
    }
  }
  return pis;
}

BandwidthSearch secant_bandwidth_search(const std::function<double(double)>& objective, double h0, double q0,
                                        double lower, double upper, const FitConfig& config) {
  BandwidthSearch best{h0, q0, 0};
  auto inside = [&](double h) { return std::isfinite(h) && h >= lower && h <= upper; };
  double h_prev = h0;
  double q_prev = q0;
  double h_cur = h0 + config.delta_h * h0;
  if (!inside(h_cur)) return best;
  double q_cur = objective(h_cur);
  ++best.evaluations;
  if (q_cur > best.objective) best = {h_cur, q_cur, best.evaluations};
  for (std::size_t i = 1; i < config.max_bandwidth_substeps; ++i) {
    const double dq = q_cur - q_prev;
    if (std::abs(dq) < 1e-6 * std::abs(q_cur)) break;
    const double h_next = h_cur + config.eta * dq / (h_cur - h_prev);
    if (!inside(h_next) || h_next == h_cur) break;
    h_prev = h_cur;
    q_prev = q_cur;
    h_cur = h_next;
    q_cur = objective(h_cur);
    ++best.evaluations;
    if (q_cur > best.objective) {
      best.bandwidth = h_cur;
      best.objective = q_cur;
    }
  }
  return best;
}

FitResult fit(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config) {
  return fit_restarts(data, clusters, config, nullptr);
}

FitResult fit_from_labels(const LongitudinalDataset& data, std::span<const int> labels, std::size_t clusters,
                          const FitConfig& config) {
  config.validate();
  FitResult r = run_gem(data, labels, clusters, config, nullptr);
  r.restart_logliks = {r.loglik()};
  return r;
}

FitResult fit_fixed_correlation(const LongitudinalDataset& data, std::size_t clusters, const FitConfig& config,
                                const SpectralCorrelation& fixed) {
  return fit_restarts(data, clusters, config, &fixed);
}

double entropy(const Responsibilities& resp) {
  double e = 0.0;
  for (double p : resp.p)
    if (p > 0.0) e -= p * std::log(p);
  return e;
}

double kde_effective_parameters(const WeightedKde& kde) {
  const auto xs = kde.sorted_points();
  const auto ms = kde.sorted_masses();
  const double h = kde.bandwidth();
  const double log_max = std::log(*std::max_element(ms.begin(), ms.end()));
  // point i contributes m_i K(0) / sum_j m_j K(x_i - x_j); neighbours whose term is
  // below 1e-17 of the self term are skipped, so tiny-mass points stay exact
  double nu = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double log_mi = std::log(ms[i]);
    const double reach = h * std::sqrt(2.0 * (log_max - log_mi + 40.0));
    const auto first = std::lower_bound(xs.begin(), xs.end(), xs[i] - reach) - xs.begin();
    const auto last = std::upper_bound(xs.begin(), xs.end(), xs[i] + reach) - xs.begin();
    double ratio = 0.0;
    for (auto j = first; j < last; ++j) {
      const double z = (xs[i] - xs[static_cast<std::size_t>(j)]) / h;
      ratio += std::exp(std::log(ms[static_cast<std::size_t>(j)]) - log_mi - 0.5 * z * z);
    }
    nu += 1.0 / ratio;
  }
  return nu;
}

double adjusted_bic(const FitResult& fit, const LongitudinalDataset& data) {
  const auto& m = fit.model;
  const double g = static_cast<double>(m.clusters);
  const double d = static_cast<double>(m.features);
  double m_eff = (g - 1.0) + g * static_cast<double>(m.times) * d * (d + 1.0) / 2.0;
  for (const auto& k : m.kdes) m_eff += kde_effective_parameters(k);
  return -2.0 * fit.loglik() + m_eff * std::log(static_cast<double>(data.subjects()));
}

NecTable nec(const std::map<std::size_t, FitResult>& fits, const FitResult* one_cluster_reference) {
  NecTable out;
  const auto one = fits.find(1);
  if (one == fits.end()) throw Error(ErrorCode::invalid_input, "NEC needs the G = 1 fit");
  const double l1 = one->second.loglik();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [g, f] : fits) {
    if (g < 2) continue;
    const double gain = f.loglik() - l1;
    if (!(gain > 0.0)) {
      out.warnings.push_back("NEC undefined for G = " + std::to_string(g) + ": no likelihood gain over G = 1");
      continue;
    }
    const double v = entropy(f.responsibilities) / gain;
    out.values[g] = v;
    if (v < best) {
      best = v;
      out.best_multi = g;
    }
  }
  if (one_cluster_reference) {
    const double ref_gain = one_cluster_reference->loglik() - l1;
    if (ref_gain > 0.0) {
      out.one_cluster = entropy(one_cluster_reference->responsibilities) / ref_gain;
    } else {
      out.warnings.push_back("one-cluster NEC reference undefined: no likelihood gain over G = 1");
    }
  }
  out.selected = 1;
  if (out.best_multi != 0 && (!out.one_cluster || best < *out.one_cluster)) out.selected = out.best_multi;
  return out;
}

}  // namespace ckmm
