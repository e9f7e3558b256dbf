#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lambert/layout.hpp"
#include "lambert/rng.hpp"

using namespace lambert;

TEST_CASE("make_theta") {
  auto t16 = layout::make_theta(16);
  REQUIRE(t16.size() == 2);
  CHECK(t16[0] == doctest::Approx(0.25));
  CHECK(t16[1] == doctest::Approx(500.0));

  auto t32 = layout::make_theta(32);
  REQUIRE(t32.size() == 4);
  CHECK(t32[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(t32[1] == doctest::Approx(3.14980).epsilon(1e-4));
  CHECK(t32[2] == doctest::Approx(39.6850).epsilon(1e-4));
  CHECK(t32[3] == doctest::Approx(500.0).epsilon(1e-6));

  CHECK_THROWS_AS(layout::make_theta(15), std::invalid_argument);

  // log-linear: ln(theta) equally spaced
  auto t128 = layout::make_theta(128);
  const double step = std::log(t128[1]) - std::log(t128[0]);
  for (size_t r = 1; r + 1 < t128.size(); ++r)
    CHECK(std::log(t128[r + 1]) - std::log(t128[r]) == doctest::Approx(step).epsilon(1e-9));
}

TEST_CASE("winding") {
  auto z = layout::winding(0.0, {0.25, 500});
  REQUIRE(z.size() == 4);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
  CHECK(z[2] == 1.0);
  CHECK(z[3] == 0.0);

  const double pi = 3.14159265358979323846;
  auto q = layout::winding(pi / 2, {1, 2});
  CHECK(q[0] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(q[1] == doctest::Approx(1.0));
  CHECK(q[2] == doctest::Approx(-1.0));
  CHECK(q[3] == doctest::Approx(0.0).epsilon(1e-7));

  // three clock hands at t = 15 seconds
  auto clock = layout::winding(15.0, {2 * pi / 3600, 2 * pi / 60, 2 * pi});
  CHECK(clock[2] == doctest::Approx(0.0).epsilon(1e-9));  // minute hand: quarter turn
  CHECK(clock[3] == doctest::Approx(1.0));
  CHECK(clock[4] == doctest::Approx(1.0));                // second hand: 15 full turns
  CHECK(clock[5] == doctest::Approx(0.0).epsilon(1e-9));

  // norm d/2 and per-pair periodicity
  Rng rng(3);
  auto theta = layout::make_theta(64);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(-10, 10);
    auto v = layout::winding(t, theta);
    double norm2 = 0;
    for (double x : v) norm2 += x * x;
    CHECK(norm2 == doctest::Approx(static_cast<double>(v.size()) / 2).epsilon(1e-12));
    for (size_t r = 0; r < theta.size(); ++r) {
      auto w = layout::winding(t + 2 * pi / theta[r], theta);
      CHECK(w[2 * r] == doctest::Approx(v[2 * r]).epsilon(1e-6));
      CHECK(w[2 * r + 1] == doctest::Approx(v[2 * r + 1]).epsilon(1e-6));
    }
  }
}

TEST_CASE("layout_embedding") {
  auto cfg = layout::make_winding_config(16);
  auto zero = layout::layout_embedding(doc::BBox{0, 0, 0, 0}, cfg);
  REQUIRE(zero.values.size() == 16);
  double norm2 = 0;
  for (double v : zero.values) norm2 += v * v;
  CHECK(norm2 == doctest::Approx(8.0));
  // four copies of the winding(0) pattern
  for (int blk = 0; blk < 4; ++blk) {
    CHECK(zero.values[static_cast<size_t>(blk * 4)] == 1.0);
    CHECK(zero.values[static_cast<size_t>(blk * 4 + 1)] == 0.0);
  }

  // unit box: blocks are winding(0), winding(0), winding(1), winding(1)
  auto unit = layout::layout_embedding(doc::BBox{0, 0, 1, 1}, cfg);
  CHECK(unit.values[8] == doctest::Approx(std::cos(0.25)));
  CHECK(unit.values[9] == doctest::Approx(std::sin(0.25)));
  CHECK(unit.values[10] == doctest::Approx(std::cos(500.0)));
  CHECK(unit.values[11] == doctest::Approx(std::sin(500.0)));
  CHECK(unit.values[12] == doctest::Approx(std::cos(0.25)));

  // depends only on the box, bit-exact
  auto a = layout::layout_embedding(doc::BBox{0.1, 0.2, 0.3, 0.4}, cfg);
  auto b = layout::layout_embedding(doc::BBox{0.1, 0.2, 0.3, 0.4}, cfg);
  for (size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("adapter") {
  Rng rng(5);

  // zero input -> bias (zeros at init)
  auto a = layout::make_adapter(8, 8, 0.02, rng);
  auto zero_in = nn::zeros<float>({1, 8});
  auto out = layout::adapter_apply(zero_in, a);
  for (size_t i = 0; i < out.numel(); ++i) CHECK((*out.data)[i] == 0.0f);

  // sigma = 0 init gives zero output for any input
  auto degenerate = layout::make_adapter(8, 8, 0.0, rng);
  auto x = nn::randn<float>({3, 8}, rng, 1.0);
  auto dout = layout::adapter_apply(x, degenerate);
  for (size_t i = 0; i < dout.numel(); ++i) CHECK((*dout.data)[i] == 0.0f);

  // Monte Carlo: E ||W l||^2 = n sigma^2 for a unit input, n = k = 128
  const int n = 128;
  const double sigma = 0.02;
  std::vector<float> unit(n, 0.0f);
  unit[5] = 1.0f;
  auto unit_t = nn::from_values<float>({1, n}, std::vector<float>(unit));
  const int draws = 10000;
  double sum = 0, sum_sq = 0;
  for (int d = 0; d < draws; ++d) {
    auto ad = layout::make_adapter(n, n, sigma, rng);
    auto o = layout::adapter_apply(unit_t, ad);
    double norm2 = 0;
    for (size_t i = 0; i < o.numel(); ++i)
      norm2 += static_cast<double>((*o.data)[i]) * (*o.data)[i];
    sum += norm2;
    sum_sq += norm2 * norm2;
  }
  const double mean = sum / draws;
  const double expect = n * sigma * sigma;  // 0.0512; norm ~ 0.226 = 0.02*sqrt(128)
  const double var = sum_sq / draws - mean * mean;
  const double band = 3 * std::sqrt(var / draws);
  CHECK(std::abs(mean - expect) < band);

  // length mismatch rejected
  auto bad = nn::zeros<float>({1, 7});
  CHECK_THROWS_AS(layout::adapter_apply(bad, a), std::invalid_argument);
}

TEST_CASE("sinusoidal position table") {
  auto table = layout::sinusoidal_positions(4, 8, 10000.0);
  REQUIRE(table.size() == 32);
  // row 0 is the winding of 0: cos 1, sin 0 pattern
  for (int r = 0; r < 4; ++r) {
    CHECK(table[static_cast<size_t>(2 * r)] == 1.0);
    CHECK(table[static_cast<size_t>(2 * r + 1)] == 0.0);
  }
}
