#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>

#include "mvcs/orderstats.hpp"
#include "support.hpp"

using namespace mvcs;

TEST_CASE("kth_largest agrees with a full sort") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + trial);
    for (double& x : v) x = u(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (std::size_t r = 1; r <= v.size(); ++r) {
      const RankedValue rv = kth_largest(v, r);
      CHECK(rv.value == sorted[r - 1]);
      CHECK(v[rv.index] == rv.value);
    }
  }
}

TEST_CASE("ties resolve to the smallest index") {
  const std::vector<double> v = {1.0, 3.0, 3.0, 2.0, 3.0};
  CHECK(kth_largest(v, 1).index == 1);
  // the reported index is the first position holding the r-th largest value
  CHECK(kth_largest(v, 2).index == 1);
  CHECK(kth_largest(v, 3).index == 1);
  CHECK(kth_largest(v, 4).index == 3);
  CHECK(top_r_indices(v, 4) == std::vector<std::size_t>{1, 2, 4, 3});
  CHECK_THROWS(kth_largest(v, 0));
  CHECK_THROWS(kth_largest(v, 6));
}

TEST_CASE("top-r mean equals its variational form") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 50);
    for (double& x : v) x = n(rng);
    for (std::size_t r : {std::size_t{1}, v.size() / 2 + 1, v.size()}) {
      std::vector<double> s = v;
      std::sort(s.begin(), s.end(), std::greater<>());
      const double ref = std::accumulate(s.begin(), s.begin() + static_cast<long>(r), 0.0) / static_cast<double>(r);
      CHECK(mean_top_r(v, r) == doctest::Approx(ref).epsilon(1e-13));
      const TopRMinimum m = topr_via_minimization(v, r);
      CHECK(std::abs(m.value - ref) < 1e-12);
      // minimizers fill [r+1-th largest, r-th largest]
      CHECK(m.minimizer <= s[r - 1]);
      if (r < s.size()) CHECK(m.minimizer >= s[r]);
    }
  }
}

TEST_CASE("conformal rank and quantile") {
  CHECK(conformal_rank(199, 0.1) == 180);
  CHECK(conformal_rank(9, 0.1) == 9);
  CHECK(conformal_rank(8, 0.1) == 9);
  std::vector<double> s(199);
  std::iota(s.begin(), s.end(), 1.0);
  std::shuffle(s.begin(), s.end(), std::mt19937_64(3));
  CHECK(conformal_quantile(s, 0.1) == 180.0);
  CHECK(std::isinf(conformal_quantile({1.0, 2.0, 3.0}, 0.1)));
  CHECK_THROWS(conformal_quantile({1.0}, 1.5));
}
