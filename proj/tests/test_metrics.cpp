#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "robustcf/metrics.hpp"
#include "robustcf/power.hpp"

using namespace rcf;

TEST_CASE("nominal SINR") {
  CTensor h(1, 1, 1), v(1, 1, 1);
  h(0, 0, 0) = std::sqrt(3.0);
  v(0, 0, 0) = 1.0;
  CHECK(nominal_sinr(h, v, std::vector<double>{1.0})[0] == doctest::Approx(3.0));
  v(0, 0, 0) = 0.0;
  CHECK(nominal_sinr(h, v, std::vector<double>{1.0})[0] == 0.0);

  Rng rng = make_rng(1);
  const CTensor hr = oracle::random_tensor(3, 3, 2, rng), vr = oracle::random_tensor(3, 3, 2, rng);
  const std::vector<double> noise{0.5, 1.0, 2.0};
  const auto s = nominal_sinr(hr, vr, noise);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(oracle::sinr(hr, vr, i, noise[i])).epsilon(1e-12));
  CHECK_THROWS_AS(nominal_sinr(hr, CTensor(3, 3, 1), noise), ShapeError);
  CHECK_THROWS_AS(nominal_sinr(hr, vr, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("sum rate and penalised sum rate") {
  CHECK(sum_rate(std::vector<double>{1.0, 1.0}) == doctest::Approx(2.0));
  CHECK(sum_rate(std::vector<double>{}) == 0.0);
  CHECK(sum_rate(std::vector<double>{3.0, 7.0}) == doctest::Approx(5.0));

  CTensor v(2, 1, 1);
  v(0, 0, 0) = {1.0, -2.0};
  v(1, 0, 0) = {-0.5, 0.0};
  CHECK(l1_norm(v) == doctest::Approx(3.5));
  const std::vector<double> s{3.0};
  CHECK(penalized_sparse_sum_rate(s, v, 0.0) == doctest::Approx(sum_rate(s)));
  CHECK(penalized_sparse_sum_rate(s, v, 0.2) == doctest::Approx(2.0 - 0.7));
}

TEST_CASE("q_ave on handcrafted beamformers") {
  CTensor v(4, 2, 2);
  for (auto& z : v.data()) z = {1.0, 0.5};
  const double tol = zero_tolerance(1.0);
  CHECK(q_ave(v, tol) == 4.0);
  for (std::size_t k = 0; k < v.size() / 2; ++k) v.data()[k] = 0.0;
  CHECK(q_ave(v, tol) == 2.0);
  for (auto& z : v.data()) z = 0.0;
  CHECK(q_ave(v, tol) == 0.0);
}

TEST_CASE("zero tolerance and zero counting") {
  CHECK(zero_tolerance(1.0) == doctest::Approx(1e-9));
  CHECK(zero_tolerance(4.0) == doctest::Approx(2e-9));
  CTensor v(1, 1, 3);
  v(0, 0, 0) = 5e-10;
  v(0, 0, 1) = {0.0, 2e-9};
  v(0, 0, 2) = 0.0;
  CHECK(count_zeros(v, 1e-9) == 2);
}

TEST_CASE("q_ave is linear in the zero count") {
  const std::size_t Q = 3, I = 2, M = 2;
  CTensor v(Q, I, M);
  for (auto& z : v.data()) z = 1.0;
  for (std::size_t k = 0; k <= v.size(); ++k) {
    const double q = q_ave(v, zero_tolerance(1.0));
    CHECK(q == doctest::Approx(Q * (1.0 - static_cast<double>(k) / (Q * I * M))));
    CHECK(q >= 0.0);
    CHECK(q <= Q);
    if (k < v.size()) v.data()[k] = 0.0;
  }
}

TEST_CASE("multiplication count formula") {
  CHECK(mult_count_rjapcbn(16, 16, 4, 8, 5, 5, 5) == 2375936);
  CHECK(mult_count_rjapcbn(1, 1, 1, 1, 1, 1, 1) == 4);
  const auto base = mult_count_rjapcbn(4, 3, 2, 8, 3, 3, 3);
  const auto twice = mult_count_rjapcbn(8, 3, 2, 8, 3, 3, 3);
  // Q^2 I^2 C grows fourfold, every other term doubles.
  const std::uint64_t quad = 4 * 4 * 3 * 3 * 8;
  CHECK(twice == 2 * base + 2 * quad);
}

TEST_CASE("power projection as written") {
  CTensor v(1, 1, 1);
  v(0, 0, 0) = 2.0;
  const CTensor p = power_project(v, 1.0);
  CHECK(p(0, 0, 0).real() == doctest::Approx(0.5));
  CHECK(p.ap_power(0) == doctest::Approx(0.25));

  CTensor small(2, 2, 1);
  small(0, 0, 0) = std::sqrt(0.25);
  small(0, 1, 0) = std::sqrt(0.25);
  small(1, 0, 0) = 3.0;
  const CTensor ps = power_project(small, 1.0);
  CHECK(ps(0, 0, 0) == small(0, 0, 0));
  CHECK(ps(0, 1, 0) == small(0, 1, 0));
  CHECK(ps.ap_power(1) == doctest::Approx(1.0 / 9.0));

  const CTensor pn = power_project(v, 1.0, ProjectionRule::NormCorrect);
  CHECK(pn.ap_power(0) == doctest::Approx(1.0));
}

TEST_CASE("power projection is always feasible") {
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> scale(0.01, 30.0), pm(0.1, 5.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const CTensor v = oracle::random_tensor(3, 4, 2, rng, scale(rng));
    const double pmax = pm(rng);
    for (ProjectionRule rule : {ProjectionRule::LinearInPower, ProjectionRule::NormCorrect}) {
      const CTensor p = power_project(v, pmax, rule);
      for (std::size_t q = 0; q < 3; ++q) CHECK(p.ap_power(q) <= pmax + 1e-9);
    }
  }
}

TEST_CASE("power projection backward matches finite differences") {
  Rng rng = make_rng(3);
  for (ProjectionRule rule : {ProjectionRule::LinearInPower, ProjectionRule::NormCorrect}) {
    const CTensor v = oracle::random_tensor(2, 2, 2, rng, 0.6);  // mixes both branches
    const CTensor w = oracle::random_tensor(2, 2, 2, rng);
    // f(v) = sum Re(conj(w) * P(v)); dL/dP = w in the dRe + i dIm convention.
    auto f = [&](const CTensor& x) {
      const CTensor p = power_project(x, 1.0, rule);
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k)
        s += w.data()[k].real() * p.data()[k].real() + w.data()[k].imag() * p.data()[k].imag();
      return s;
    };
    const CTensor g = power_project_backward(v, w, 1.0, rule);
    const double h = 1e-6;
    for (std::size_t k = 0; k < v.size(); ++k)
      for (int part = 0; part < 2; ++part) {
        CTensor a = v, b = v;
        const cplx d = part == 0 ? cplx(h, 0.0) : cplx(0.0, h);
        a.data()[k] += d;
        b.data()[k] -= d;
        const double num = (f(a) - f(b)) / (2 * h);
        const double ana = part == 0 ? g.data()[k].real() : g.data()[k].imag();
        CHECK(std::abs(num - ana) <= 1e-6 * std::max(1.0, std::abs(ana)));
      }
  }
}
