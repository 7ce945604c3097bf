#include <cmath>

#include "doctest.h"
#include "ckmm/error.hpp"
#include "ckmm/rng.hpp"
#include "ckmm/simulate.hpp"

using namespace ckmm;

namespace {

// Brute-force covariance: X = A e with e = (e_1, e_2) over times -2..T-1,
// cov(e) = [[1, rho], [rho, 1]] per time, then rescaled to a correlation.
Eigen::MatrixXd brute_force_correlation(const ClusterProcess& p, std::size_t t) {
  const std::size_t m = t + 2;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * t, 2 * m);
  const double th[2][2] = {{p.theta11, p.theta12}, {p.theta21, p.theta22}};
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t s = 0; s < t; ++s) {
      const std::size_t now = s + 2;
      a(f * t + s, f * m + now) = 1.0;
      a(f * t + s, f * m + now - 1) = th[f][0];
      a(f * t + s, f * m + now - 2) = th[f][1];
    }
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2 * m, 2 * m) * p.var_eps;
  for (std::size_t s = 0; s < m; ++s) e(s, m + s) = e(m + s, s) = p.rho_eps * p.var_eps;
  Eigen::MatrixXd c = a * e * a.transpose();
  const Eigen::VectorXd sd = c.diagonal().cwiseSqrt();
  return sd.cwiseInverse().asDiagonal() * c * sd.cwiseInverse().asDiagonal();
}

}  // namespace

TEST_CASE("error correlation from the target cross-correlation") {
  CHECK(std::abs(error_correlation_from_target(-0.2679, 0, 0.6268, 0, 0.25) - 0.3671) < 1e-4);
  CHECK(std::abs(error_correlation_from_target(-0.2679, 0, 0.6268, 0, 0.5) - 0.7342) < 1e-4);
  CHECK(std::abs(error_correlation_from_target(0.2532, 0.0533, 0.5, 0, 0.25) - 0.2562) < 1e-4);
  CHECK(std::abs(error_correlation_from_target(0.2532, 0.0533, 0.5, 0, 0.5) - 0.5125) < 1e-4);
  CHECK(error_correlation_from_target(0.2532, 0.0533, 0.5, 0, 0.0) == 0.0);
  try {
    error_correlation_from_target(-0.9, 0, 0.9, 0, 0.5);
    FAIL("expected infeasible scenario");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::infeasible_scenario);
  }
  for (double target : {-0.3, 0.1, 0.25, 0.5}) {
    ClusterProcess p;
    p.theta11 = 0.2532;
    p.theta12 = 0.0533;
    p.theta21 = 0.5;
    p.rho_eps = error_correlation_from_target(p.theta11, p.theta12, p.theta21, p.theta22, target);
    CHECK(std::abs(p.implied_cross_correlation() - target) < 1e-10);
    // closed form of the second cluster's correlation
    const double closed = (1 + p.theta11 * p.theta21 + p.theta12 * p.theta22) * p.rho_eps /
                          std::sqrt((1 + p.theta11 * p.theta11 + p.theta12 * p.theta12) * (1 + p.theta21 * p.theta21));
    CHECK(std::abs(closed - target) < 1e-10);
  }
}

TEST_CASE("catalog matches the reference scenario parameters") {
  const auto cat = scenario_catalog();
  REQUIRE(cat.size() == 6);
  const double cross[6][2] = {{0, 0}, {.25, .25}, {.5, .5}, {0, .25}, {0, .5}, {.25, .5}};
  const double err[6][2] = {{0, 0}, {.3671, .2562}, {.7342, .5125}, {0, .2562}, {0, .5125}, {.3671, .5125}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(cat[i].name == "S" + std::to_string(i + 1));
    CHECK(cat[i].label_probability == 0.4);
    CHECK(cat[i].subjects == 100);
    for (std::size_t g = 0; g < 2; ++g) {
      const auto& c = cat[i].clusters[g];
      CHECK(c.rho_cross == cross[i][g]);
      CHECK(c.rho_eps == err[i][g]);
      CHECK(c.var_eps == 1.0);
      CHECK(std::abs(c.implied_cross_correlation() - c.rho_cross) < 1e-4);
    }
    CHECK(cat[i].clusters[0].theta11 == -0.2679);
    CHECK(cat[i].clusters[0].theta21 == 0.6268);
    CHECK(cat[i].clusters[1].theta11 == 0.2532);
    CHECK(cat[i].clusters[1].theta12 == 0.0533);
    CHECK(cat[i].clusters[1].theta21 == 0.5);
  }
  CHECK(cat[4].clusters[1].rho_cross == 0.5);
  CHECK(cat[4].clusters[1].rho_eps == 0.5125);
  CHECK(cat[5].clusters[0].rho_eps == 0.3671);
  CHECK_THROWS_AS(scenario_by_name("S7", 20), Error);
  CHECK(scenario_by_name("S3", 50).times == 50);
}

TEST_CASE("margins agree with the MA variances") {
  const auto s = scenario_catalog()[0];
  const auto& c1 = s.clusters[0];
  const auto& c2 = s.clusters[1];
  CHECK(std::abs(c1.feature_variance(0) - 1.0718) < 1e-4);
  CHECK(std::abs(c1.margins[0].variance - c1.feature_variance(0)) < 1e-4);
  CHECK(std::abs(c2.feature_variance(0) - 1.0669) < 1e-4);
  CHECK(c2.feature_variance(1) == doctest::Approx(1.25));
  const double v1 = c1.feature_variance(1);
  CHECK(std::abs(2 * v1 / (v1 - 1) - 7.0908) < 1e-2);
  CHECK(c1.margins[1].df == 7.0908);
  CHECK(2 * 1.25 / 0.25 == doctest::Approx(c2.margins[1].df));
  CHECK(c1.margins[0].mean == 1.0);
  CHECK(c2.margins[0].mean == 1.0);
}

TEST_CASE("scenario correlation matrices") {
  for (const auto& base : scenario_catalog())
    for (std::size_t t : {20u, 30u, 50u})
      for (std::size_t g = 0; g < 2; ++g) {
        const auto r = build_covariance(base, g, t);
        CHECK((r - r.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (Eigen::Index i = 0; i < r.rows(); ++i) CHECK(r(i, i) == doctest::Approx(1.0).epsilon(1e-14));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK((r - brute_force_correlation(base.clusters[g], t)).cwiseAbs().maxCoeff() < 1e-12);
      }
  const auto r = build_covariance(scenario_catalog()[0], 0, 20);
  CHECK(r(0, 1) == doctest::Approx(-0.2679 / (1 + 0.2679 * 0.2679)));
  CHECK(r(0, 1) == doctest::Approx(-0.2499).epsilon(1e-3));
  for (int k = 2; k < 20; ++k) CHECK(r(0, k) == 0.0);
}

TEST_CASE("true spectral blocks are the circulant approximation") {
  const auto s = scenario_by_name("S6", 12);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto corr = true_spectral_correlation(s, g, 12);
    CHECK(invariant_violation(corr) < 1e-12);
    const auto circ = assemble_full_correlation(corr);
    const auto r = build_covariance(s, g, 12);
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t e = 0; e < 2; ++e) {
        const auto acf = lag_correlation(s.clusters[g], f, e);
        for (std::size_t a = 0; a < 12; ++a)
          for (std::size_t b = 0; b < 12; ++b) {
            const std::size_t i = f * 12 + a, j = e * 12 + b;
            const long k = static_cast<long>(b) - static_cast<long>(a);
            // a Toeplitz entry at lag k reappears in the circulant at k and k -/+ T
            if (std::abs(k) <= 2) CHECK(circ(i, j) == doctest::Approx(r(i, j)).epsilon(1e-12));
            if (std::abs(k) >= 10) {
              const auto hit = acf.find(k > 0 ? k - 12 : k + 12);
              CHECK(circ(i, j) == doctest::Approx(hit == acf.end() ? 0.0 : hit->second).epsilon(1e-12));
            }
          }
      }
  }
}

TEST_CASE("generation is deterministic and labels are Bernoulli") {
  const auto s = scenario_by_name("S3", 20);
  const auto a = generate_dataset(s, 5);
  const auto b = generate_dataset(s, 5);
  CHECK(a.data == b.data);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(generate_dataset(s, 6).data == a.data);
  double ones = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i)
    for (int l : generate_dataset(s, derive_seed(77, i)).labels) ones += l;
  CHECK(std::abs(ones / 10000.0 - 0.4) < 0.01);
}

TEST_CASE("Monte Carlo moments of generated data") {
  auto s1 = scenario_by_name("S1", 20, 10000);
  const auto d1 = generate_dataset(s1, 1);
  // pooled lag-zero cross-correlation of the two features
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
  for (std::size_t i = 0; i < 10000; ++i)
    for (std::size_t t = 0; t < 20; ++t) {
      const double x = d1.data(i, 0, t), y = d1.data(i, 1, t);
      sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y, n += 1;
    }
  const double cxy = (sxy - sx * sy / n) / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
  CHECK(std::abs(cxy) < 0.02);

  auto s3 = scenario_by_name("S3", 50, 10000);
  const auto d3 = generate_dataset(s3, 2);
  double m1 = 0, m2 = 0, m4 = 0, cnt = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    if (d3.labels[i] != 1) continue;
    for (std::size_t t = 0; t < 50; ++t) {
      const double x = d3.data(i, 1, t);
      m1 += x, m2 += x * x, m4 += x * x * x * x, cnt += 1;
    }
  }
  m2 /= cnt;
  m4 /= cnt;
  CHECK(std::abs(m1 / cnt) < 0.02);
  CHECK(std::abs(m4 / (m2 * m2) - 3.0 - 1.0) < 0.3);
}

TEST_CASE("empirical covariance of copula draws matches R") {
  for (std::size_t g = 0; g < 2; ++g) {
    auto s = scenario_by_name("S6", 10, 100000);
    s.label_probability = g == 0 ? 0.0 : 1.0;
    const auto sim = generate_dataset(s, 40 + g);
    const auto r = build_covariance(s, g, 10);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(20, 20);
    Eigen::VectorXd q(20);
    for (std::size_t i = 0; i < s.subjects; ++i) {
      REQUIRE(sim.labels[i] == static_cast<int>(g));
      for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t t = 0; t < 10; ++t)
          q(static_cast<Eigen::Index>(f * 10 + t)) = margin_normal_score(s.clusters[g].margins[f], sim.data(i, f, t));
      acc.selfadjointView<Eigen::Lower>().rankUpdate(q);
    }
    Eigen::MatrixXd cov = acc.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(s.subjects);
    CHECK((cov - r).cwiseAbs().maxCoeff() < 0.02);
  }
}
