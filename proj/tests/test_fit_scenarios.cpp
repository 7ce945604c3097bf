#include <cmath>

#include "doctest.h"
#include "ckmm/eval.hpp"
#include "ckmm/mixture.hpp"
#include "ckmm/rng.hpp"
#include "ckmm/simulate.hpp"

using namespace ckmm;

TEST_CASE("S3, T = 50: ARI at least 0.9 on 80 of 100 datasets, priors track the realized labels") {
  const auto sc = scenario_by_name("S3", 50);
  FitConfig cfg;
  int good = 0;
  int prior_ok = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto sim = generate_dataset(sc, derive_seed(101, i));
    const auto f = fit(sim.data, 2, cfg);
    CHECK(f.converged);
    if (ari(f.labels, sim.labels) >= 0.9) ++good;
    const auto map = match_clusters(f.labels, sim.labels, 2);
    double realized = 0.0;
    for (int l : sim.labels) realized += l;
    realized /= static_cast<double>(sim.labels.size());
    const std::size_t fitted = map[0] == 1 ? 0 : 1;
    if (std::abs(f.model.pis[fitted] - realized) <= 0.1) ++prior_ok;
  }
  MESSAGE("datasets with ARI >= 0.9: ", good, ", priors within 0.1: ", prior_ok);
  CHECK(good >= 80);
  CHECK(prior_ok >= 80);
}

TEST_CASE("S1, T = 20: mean ARI over 20 datasets in [0.05, 0.45]") {
  const auto sc = scenario_by_name("S1", 20);
  FitConfig cfg;
  double total = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto sim = generate_dataset(sc, derive_seed(202, i));
    total += ari(fit(sim.data, 2, cfg).labels, sim.labels);
  }
  const double mean = total / 20.0;
  MESSAGE("mean ARI ", mean);
  CHECK(mean >= 0.05);
  CHECK(mean <= 0.45);
}
