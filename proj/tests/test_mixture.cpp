#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "doctest.h"
#include "ckmm/error.hpp"
#include "ckmm/eval.hpp"
#include "ckmm/kmeans.hpp"
#include "ckmm/mixture.hpp"
#include "ckmm/rng.hpp"
#include "ckmm/simulate.hpp"

using namespace ckmm;

namespace {

// Subjects of group 1 sit `gap` above group 0 in every coordinate.
struct Blobs {
  LongitudinalDataset data;
  std::vector<int> groups;
};

Blobs make_blobs(std::size_t n, std::size_t d, std::size_t t, double gap, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b{LongitudinalDataset(n, d, t), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    b.groups[i] = i % 3 == 0 ? 1 : 0;
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t s = 0; s < t; ++s) b.data(i, f, s) = gap * b.groups[i] + 0.5 * rng.normal();
  }
  return b;
}

FitConfig quick_config() {
  FitConfig c;
  c.restarts = 3;
  c.max_iterations = 40;
  return c;
}

bool nondecreasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] < trace[k - 1] - 1e-9 * std::max(1.0, std::abs(trace[k - 1]))) return false;
  return true;
}

CkmmModel duplicate_cluster(const CkmmModel& one) {
  CkmmModel m = one;
  m.clusters = 2;
  m.pis = {0.5, 0.5};
  m.corr = {one.corr[0], one.corr[0]};
  m.kdes.clear();
  m.initial_bandwidths.clear();
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t d = 0; d < one.features; ++d) {
      m.kdes.push_back(one.kde(0, d));
      m.initial_bandwidths.push_back(one.initial_bandwidths[d]);
    }
  return m;
}

// Direct smoother trace: sum_i m_i K(0) / sum_j m_j K(x_i - x_j), all pairs, ratios in log space.
double brute_force_nu(const WeightedKde& kde) {
  const auto xs = kde.sorted_points();
  const auto ms = kde.sorted_masses();
  const double h = kde.bandwidth();
  double nu = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double ratio = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j)
      ratio += std::exp(std::log(ms[j] / ms[i]) - 0.5 * std::pow((xs[i] - xs[j]) / h, 2));
    nu += 1.0 / ratio;
  }
  return nu;
}

}  // namespace

TEST_CASE("k-means separates blobs, is seeded and keeps the best seeding") {
  const auto b = make_blobs(60, 2, 6, 6.0, 3);
  Rng r1(9), r2(9);
  const auto a = kmeans(b.data, 2, r1);
  const auto c = kmeans(b.data, 2, r2);
  CHECK(ari(a.labels, b.groups) == 1.0);
  CHECK(a.labels == c.labels);

  const auto s = make_blobs(80, 1, 4, 0.3, 5);
  Rng single(21), multi(21);
  const auto one = kmeans(s.data, 3, single);
  const auto best = kmeans(s.data, 3, multi, 50, 10);
  CHECK(best.inertia <= one.inertia);

  CHECK_THROWS_AS(kmeans(s.data, 100, single), Error);
  CHECK_THROWS_AS(kmeans(s.data, 2, single, 50, 0), Error);
}

TEST_CASE("k-means fills empty clusters after reseeding") {
  LongitudinalDataset flat(5, 1, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t t = 0; t < 3; ++t) flat(i, 0, t) = 1.0;
  Rng rng(1);
  const auto r = kmeans(flat, 2, rng);
  CHECK(r.reseeds == 5);
  CHECK(std::count(r.labels.begin(), r.labels.end(), 0) == 4);
  CHECK(std::count(r.labels.begin(), r.labels.end(), 1) == 1);
}

TEST_CASE("initialization") {
  const auto b = make_blobs(45, 2, 8, 5.0, 11);
  FitConfig cfg;
  const auto [labels, model] = initialize(b.data, 2, cfg, 17);
  CHECK(ari(labels, b.groups) == 1.0);
  CHECK(model.pis[0] + model.pis[1] == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& c : model.corr) CHECK(invariant_violation(c) < 1e-10);
  const auto again = initialize(b.data, 2, cfg, 17);
  CHECK(again.first == labels);

  const auto one = initialize(b.data, 1, cfg, 17);
  CHECK(one.second.pis == std::vector<double>{1.0});
  const auto es = e_step(b.data, one.second);
  for (double p : es.responsibilities.p) CHECK(p == 1.0);

  CHECK_THROWS_AS(initialize(b.data, 45, cfg, 1), Error);
}

TEST_CASE("E-step symmetry and normalization") {
  const auto b = make_blobs(30, 2, 6, 1.0, 2);
  FitConfig cfg;
  const std::vector<int> zeros(30, 0);
  const CkmmModel one = model_from_labels(b.data, zeros, 1, cfg);
  const auto es = e_step(b.data, duplicate_cluster(one));
  for (std::size_t n = 0; n < 30; ++n) {
    CHECK(es.responsibilities(n, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(es.responsibilities(n, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }
  CHECK(es.loglik == doctest::Approx(e_step(b.data, one).loglik).epsilon(1e-12));

  const auto fit2 = fit(b.data, 2, quick_config());
  for (std::size_t n = 0; n < 30; ++n) {
    const double s = fit2.responsibilities(n, 0) + fit2.responsibilities(n, 1);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(e_step(b.data, fit2.model).loglik == doctest::Approx(fit2.loglik()).epsilon(1e-12));
}

TEST_CASE("responsibility labels break ties to the lowest index") {
  Responsibilities r(2, 3);
  r(0, 0) = 0.2;
  r(0, 1) = 0.4;
  r(0, 2) = 0.4;
  r(1, 0) = 0.5;
  r(1, 1) = 0.5;
  CHECK(r.labels() == std::vector<int>{1, 0});
  const std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(Responsibilities::hard(bad, 3), Error);
}

TEST_CASE("prior and KDE M-steps") {
  std::vector<int> labels(100, 1);
  std::fill_n(labels.begin(), 40, 0);
  const auto hard = Responsibilities::hard(labels, 2);
  const auto pis = m_step_priors(hard);
  CHECK(pis[0] == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(pis[1] == doctest::Approx(0.6).epsilon(1e-14));

  Responsibilities uniform(10, 4);
  std::fill(uniform.p.begin(), uniform.p.end(), 0.25);
  for (double p : m_step_priors(uniform)) CHECK(p == doctest::Approx(0.25).epsilon(1e-14));

  std::vector<int> lopsided(100, 0);
  Responsibilities tiny = Responsibilities::hard(lopsided, 2);
  std::vector<std::string> warnings;
  m_step_priors(tiny, &warnings);
  CHECK(warnings.size() == 1);

  const auto b = make_blobs(20, 2, 5, 1.0, 4);
  const std::vector<int> zeros(20, 0);
  const auto kdes = m_step_kde(b.data, Responsibilities::hard(zeros, 1), std::vector<double>{0.3, 0.4});
  const std::vector<double> ones(20, 1.0);
  for (std::size_t d = 0; d < 2; ++d) {
    const auto pooled = WeightedKde(b.data.feature_values(d), ones, d == 0 ? 0.3 : 0.4);
    for (double u : {-1.0, 0.0, 0.7, 2.5}) CHECK(kdes[d].pdf(u) == doctest::Approx(pooled.pdf(u)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(m_step_kde(b.data, Responsibilities::hard(zeros, 1), std::vector<double>{0.3}), Error);

  const auto corr = m_step_correlation(b.data, Responsibilities::hard(zeros, 1), kdes);
  CHECK(invariant_violation(corr[0]) < 1e-10);
}

TEST_CASE("secant bandwidth search") {
  FitConfig cfg;
  const double lower = 0.05, upper = 3.0;

  SUBCASE("objective falling along every probe keeps the start") {
    const auto q = [](double h) { return -10.0 * std::abs(h - 1.0); };
    const auto r = secant_bandwidth_search(q, 1.0, q(1.0), lower, upper, cfg);
    CHECK(r.bandwidth == 1.0);
    CHECK(r.objective == q(1.0));
    CHECK(r.evaluations >= 2);
  }

  SUBCASE("probe uphill of a monotone objective then follows the slope") {
    const auto q = [](double h) { return -10.0 * h; };
    const auto r = secant_bandwidth_search(q, 1.0, q(1.0), lower, upper, cfg);
    CHECK(r.bandwidth < 1.0);
    CHECK(r.objective > q(1.0));
  }

  SUBCASE("single peak matches a grid search") {
    std::vector<double> grid(50);
    for (std::size_t k = 0; k < 50; ++k) grid[k] = lower + (upper - lower) * static_cast<double>(k) / 49.0;
    for (double peak : {grid[19], grid[23], grid[30]}) {
      const auto q = [peak](double h) { return -50.0 * (h - peak) * (h - peak); };
      const double grid_best = *std::max_element(grid.begin(), grid.end(),
                                                 [&](double a, double b) { return q(a) < q(b); });
      const double h0 = 1.0;
      const auto r = secant_bandwidth_search(q, h0, q(h0), lower, upper, cfg);
      CHECK(std::abs(r.bandwidth - grid_best) <= cfg.delta_h * h0);
    }
  }

  SUBCASE("never accepts a worse bandwidth") {
    Rng rng(77);
    for (int rep = 0; rep < 200; ++rep) {
      const double a = rng.uniform() * 200.0 - 100.0;
      const double b = rng.uniform() * 20.0;
      const double c = rng.uniform() * 3.0;
      const auto q = [&](double h) { return a * h + b * std::sin(c * h * 7.0) - 30.0 * h * h; };
      const double h0 = 0.1 + 2.5 * rng.uniform();
      const auto r = secant_bandwidth_search(q, h0, q(h0), lower, upper, cfg);
      CHECK(r.objective >= q(h0) - 1e-12);
      CHECK(r.objective == q(r.bandwidth));
      CHECK(r.bandwidth >= lower);
      CHECK(r.bandwidth <= upper);
      CHECK(r.evaluations <= cfg.max_bandwidth_substeps);
    }
  }
}

TEST_CASE("fit: monotone, deterministic, thread independent") {
  const auto sc = scenario_by_name("S3", 20, 40);
  const auto sim = generate_dataset(sc, 12);
  FitConfig cfg = quick_config();
  const auto a = fit(sim.data, 2, cfg);
  CHECK(nondecreasing(a.loglik_trace));
  CHECK(a.iterations + 1 == a.loglik_trace.size());
  CHECK(a.restart_logliks.size() == cfg.restarts);
  CHECK(a.loglik() == *std::max_element(a.restart_logliks.begin(), a.restart_logliks.end()));
  CHECK(a.labels == a.responsibilities.labels());
  const auto b = fit(sim.data, 2, cfg);
  CHECK(a.loglik_trace == b.loglik_trace);
  cfg.threads = 3;
  const auto c = fit(sim.data, 2, cfg);
  CHECK(a.loglik_trace == c.loglik_trace);
  CHECK(a.restart_index == c.restart_index);

  FitConfig stop = quick_config();
  stop.max_iterations = 0;
  const auto s = fit(sim.data, 2, stop);
  CHECK_FALSE(s.converged);
  CHECK(s.iterations == 0);
  CHECK(s.loglik_trace.size() == 1);
}

TEST_CASE("fit: cluster relabeling permutes the solution") {
  const auto sc = scenario_by_name("S5", 20, 50);
  const auto sim = generate_dataset(sc, 3);
  FitConfig cfg = quick_config();
  Rng rng(derive_seed(cfg.seed, 0));
  const auto init = kmeans(sim.data, 2, rng).labels;
  std::vector<int> swapped(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) swapped[i] = 1 - init[i];
  const auto a = fit_from_labels(sim.data, init, 2, cfg);
  const auto b = fit_from_labels(sim.data, swapped, 2, cfg);
  for (std::size_t i = 0; i < init.size(); ++i) CHECK(a.labels[i] == 1 - b.labels[i]);
  CHECK(a.model.pis[0] == doctest::Approx(b.model.pis[1]).epsilon(1e-9));
  CHECK(a.loglik() == doctest::Approx(b.loglik()).epsilon(1e-10));
  CHECK(ari(a.labels, sim.labels) == doctest::Approx(ari(b.labels, sim.labels)).epsilon(1e-12));
}

TEST_CASE("fit: labels are equivariant under affine maps with a common scale") {
  const auto sc = scenario_by_name("S5", 30, 50);
  const auto sim = generate_dataset(sc, 8);
  FitConfig cfg = quick_config();
  Rng rng(derive_seed(cfg.seed, 0));
  const auto init = kmeans(sim.data, 2, rng).labels;
  const auto base = fit_from_labels(sim.data, init, 2, cfg);

  LongitudinalDataset moved = sim.data;
  const double scale = 2.5;
  for (std::size_t n = 0; n < moved.subjects(); ++n)
    for (std::size_t t = 0; t < moved.times(); ++t) {
      moved(n, 0, t) = scale * moved(n, 0, t) - 4.0;
      moved(n, 1, t) = scale * moved(n, 1, t) + 7.0;
    }
  // the bandwidth step is eta * dQ/dh, which scales as h^2 per unit of Q
  FitConfig scaled = cfg;
  scaled.eta = cfg.eta * scale * scale;
  const auto other = fit_from_labels(moved, init, 2, scaled);
  CHECK(other.labels == base.labels);
  CHECK(other.model.bandwidth(0, 0) == doctest::Approx(scale * base.model.bandwidth(0, 0)).epsilon(1e-6));
  CHECK(other.model.bandwidth(1, 1) == doctest::Approx(scale * base.model.bandwidth(1, 1)).epsilon(1e-6));
}

TEST_CASE("pseudo complete-data log-likelihood identities") {
  const auto sc = scenario_by_name("S3", 10, 30);
  const auto sim = generate_dataset(sc, 4);
  FitConfig cfg;
  const std::vector<int> zeros(30, 0);
  const CkmmModel one = model_from_labels(sim.data, zeros, 1, cfg);
  const auto es1 = e_step(sim.data, one);
  CHECK(pseudo_complete_loglik(sim.data, es1.responsibilities, one) == doctest::Approx(es1.loglik).epsilon(1e-13));

  const auto [labels, model] = initialize(sim.data, 2, cfg, 3);
  const auto es = e_step(sim.data, model);
  // at the model's own posteriors the entropy closes the gap to the observed value: L = C + E
  double classification = 0.0;
  for (std::size_t i = 0; i < es.log_joint.size(); ++i)
    if (es.responsibilities.p[i] > 0.0) classification += es.responsibilities.p[i] * es.log_joint[i];
  CHECK(classification + entropy(es.responsibilities) == doctest::Approx(es.loglik).epsilon(1e-10));
  CHECK(pseudo_complete_loglik(sim.data, es.responsibilities, model) == doctest::Approx(es.loglik).epsilon(1e-10));

  const auto hard = Responsibilities::hard(labels, 2);
  CHECK(entropy(hard) == 0.0);
  double hard_sum = 0.0;
  for (std::size_t n = 0; n < 30; ++n) hard_sum += es.log_joint[n * 2 + static_cast<std::size_t>(labels[n])];
  CHECK(pseudo_complete_loglik(sim.data, hard, model) == doctest::Approx(hard_sum).epsilon(1e-12));

  Rng rng(5);
  Responsibilities soft(30, 2);
  for (std::size_t n = 0; n < 30; ++n) {
    soft(n, 0) = rng.uniform();
    soft(n, 1) = 1.0 - soft(n, 0);
  }
  double direct = 0.0;
  for (std::size_t i = 0; i < soft.p.size(); ++i) direct += soft.p[i] * (es.log_joint[i] - std::log(soft.p[i]));
  const double q = pseudo_complete_loglik(sim.data, soft, model);
  CHECK(q == doctest::Approx(direct).epsilon(1e-10));
  CHECK(q <= es.loglik + 1e-9);
  CHECK_THROWS_AS(pseudo_complete_loglik(sim.data, Responsibilities(29, 2), model), Error);
}

TEST_CASE("effective KDE parameters and adjusted BIC") {
  Rng rng(6);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.normal();
  const std::vector<double> w(10, 1.0);
  CHECK(kde_effective_parameters(WeightedKde(x, w, 1e4)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(kde_effective_parameters(WeightedKde(x, w, 1e-6)) == doctest::Approx(40.0).epsilon(1e-9));
  std::vector<double> dup = x;
  dup[1] = dup[0];
  dup[2] = dup[0];
  CHECK(kde_effective_parameters(WeightedKde(dup, w, 1e-6)) == doctest::Approx(38.0).epsilon(1e-9));
  for (double h : {0.1, 0.4, 1.5}) {
    const WeightedKde k(x, w, h);
    CHECK(kde_effective_parameters(k) == doctest::Approx(brute_force_nu(k)).epsilon(1e-12));
  }

  const auto b = make_blobs(30, 2, 5, 4.0, 8);
  const auto f = fit(b.data, 2, quick_config());
  double nu = 0.0;
  for (const auto& k : f.model.kdes) nu += brute_force_nu(k);
  const double m_eff = 1.0 + 2.0 * 5.0 * 3.0 + nu;
  CHECK(adjusted_bic(f, b.data) == doctest::Approx(-2.0 * f.loglik() + m_eff * std::log(30.0)).epsilon(1e-10));
}

TEST_CASE("NEC") {
  Responsibilities uniform(12, 3);
  std::fill(uniform.p.begin(), uniform.p.end(), 1.0 / 3.0);
  CHECK(entropy(uniform) == doctest::Approx(12.0 * std::log(3.0)).epsilon(1e-13));

  const auto b = make_blobs(45, 2, 6, 6.0, 9);
  std::map<std::size_t, FitResult> fits;
  for (std::size_t g : {1, 2, 3}) fits[g] = fit(b.data, g, quick_config());
  const auto ref = fit_fixed_correlation(b.data, 2, quick_config(), fits[1].model.corr[0]);
  const auto table = nec(fits, &ref);
  REQUIRE(table.values.count(2) == 1);
  CHECK(table.values.at(2) < 1e-6);
  CHECK(table.best_multi == 2);
  CHECK(table.selected == 2);
  for (const auto& c : ref.model.corr) CHECK(c.blocks == fits[1].model.corr[0].blocks);

  std::map<std::size_t, FitResult> missing{{2, fits[2]}};
  CHECK_THROWS_AS(nec(missing, &ref), Error);
}

TEST_CASE("fit configuration is validated") {
  FitConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.bandwidth_lower = 2.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.restarts = 0;
  const auto b = make_blobs(10, 1, 3, 2.0, 1);
  CHECK_THROWS_AS(fit(b.data, 2, c), Error);
  CHECK_THROWS_AS(fit(b.data, 10, FitConfig{}), Error);
}
