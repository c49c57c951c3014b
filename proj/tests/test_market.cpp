#include <doctest.h>

#include <random>

#include "trilevel/market.hpp"

using namespace trilevel;

TEST_SUITE_BEGIN("market");

TEST_CASE("arbitrage reduction, symmetric slopes") {
  GenDims dims{1, 1, 4, 1};
  auto inst = generate_instance(3, dims);
  for (int k = 0; k < 4; ++k) inst.beta(k, 0) = 0.8;
  const auto red = arbitrage_reduction(inst, 0);
  CHECK(red.hhat == doctest::Approx(0.8 / 4).epsilon(1e-14));
  for (int k = 0; k < 4; ++k)
    CHECK(red.h[k] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("arbitrage reduction, two nodes with slopes 1 and 2") {
  GenDims dims{1, 1, 2, 1};
  auto inst = generate_instance(4, dims);
  inst.beta(0, 0) = 1.0;
  inst.beta(1, 0) = 2.0;
  const auto red = arbitrage_reduction(inst, 0);
  CHECK(red.hhat == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(red.h[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(red.h[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(red.L(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(red.L(0, 1) == doctest::Approx(-1.0 / 3).epsilon(1e-14));
  CHECK(red.L(1, 0) == doctest::Approx(-1.0 / 3).epsilon(1e-14));
  CHECK(red.L(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("closed-form arbitrage satisfies the optimality system") {
  GenDims dims{2, 2, 3, 2};
  const auto inst = generate_instance(11, dims);
  std::mt19937_64 rng(7);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53 * 100.0 - 50.0; };
  for (int d = 0; d < inst.D(); ++d) {
    const auto red = arbitrage_reduction(inst, d);
    CHECK(std::abs(red.h.sum() - 1.0) <= 1e-12);
    CHECK((red.L - red.L.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    for (int probe = 0; probe < 50; ++probe) {
      Vec z(inst.K()), w(inst.K());
      for (int k = 0; k < inst.K(); ++k) {
        z[k] = std::abs(u());
        w[k] = u() * 0.2;
      }
      CHECK(arbitrage_residual(inst, d, red, z, w) <= 1e-10);
    }
  }
}

TEST_CASE("nonpositive demand slope rejected") {
  GenDims dims{1, 1, 2, 1};
  auto inst = generate_instance(5, dims);
  inst.beta(0, 0) = -1.0;
  CHECK_THROWS_AS(inst.validate(), ValidationError);
  CHECK_THROWS_AS(arbitrage_reduction(inst, 0), ValidationError);
}

TEST_CASE("effective cost") {
  GenDims dims{1, 2, 1, 1};
  auto inst = generate_instance(9, dims);
  inst.nu[0] = 12.0;
  inst.eta[0] = 0.9;
  inst.nu[1] = 2.0;
  inst.eta[1] = 0.0;

  SUBCASE("zero tax returns base costs") {
    CHECK((effective_cost(inst, 0.0) - inst.nu).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("stated arithmetic") {
    CHECK(effective_cost(inst, 10.0)[0] == doctest::Approx(21.0));
  }
  SUBCASE("zero-emission source ignores the tax") {
    for (double tax : {0.0, 5.0, 25.0, 125.0})
      CHECK(effective_cost(inst, tax)[1] == 2.0);
  }
}

TEST_CASE("cournot interaction matrix") {
  GenDims dims{2, 2, 2, 1};
  const auto inst = generate_instance(21, dims);
  const auto red = arbitrage_reduction(inst, 0);
  const Mat b = cournot_interaction(inst, 0);
  const int per = inst.J() * inst.K();
  for (int r = 0; r < b.rows(); ++r)
    for (int c = 0; c < b.cols(); ++c) {
      const double want = (r / per == c / per) ? 2.0 * red.hhat : red.hhat;
      CHECK(b(r, c) == doctest::Approx(want).epsilon(1e-14));
    }
  CHECK(is_psd(b));

  const auto lcp = day_lcp(inst, 0);
  CHECK(is_psd(lcp.m));
}

TEST_CASE("reduced objective equals the pre-reduction profit") {
  const auto inst = two_node_two_day_fixture();
  std::mt19937_64 rng(13);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53; };
  for (int d = 0; d < inst.D(); ++d) {
    const auto red = arbitrage_reduction(inst, d);
    for (int probe = 0; probe < 20; ++probe) {
      const double tax = 30.0 * u();
      Vec z(inst.I() * inst.J() * inst.K());
      for (int c = 0; c < z.size(); ++c) z[c] = 40.0 * u();
      Vec w(inst.K());
      for (int k = 0; k < inst.K(); ++k) w[k] = 10.0 * (u() - 0.5);
      // sales implied by production, arbitrage from its closed form
      Vec sales(inst.I() * inst.K());
      Vec z_node = Vec::Zero(inst.K());
      for (int i = 0; i < inst.I(); ++i)
        for (int k = 0; k < inst.K(); ++k) {
          double s = 0.0;
          for (int j = 0; j < inst.J(); ++j) s += z[inst.ijk(i, j, k)];
          sales[i * inst.K() + k] = s;
          z_node[k] += s;
        }
      const Vec arb = red.arbitrage(z_node, inst.alpha.col(d), w);
      for (int i = 0; i < inst.I(); ++i) {
        const double full =
            unreduced_producer_profit(inst, d, i, z, sales, arb, w, tax);
        const double reduced =
            reduced_producer_profit(inst, d, i, z, w, tax);
        CHECK(full == doctest::Approx(reduced).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("saturation tax prices out every emitting source") {
  const auto inst = nordic5_fixture();
  const double t = saturation_tax(inst);
  const Vec gamma = effective_cost(inst, t);
  const double amax = inst.alpha.maxCoeff();
  for (int c = 0; c < gamma.size(); ++c)
    if (inst.eta[c] > 0.0) CHECK(gamma[c] >= amax - 1e-9);
}

TEST_CASE("dc ptdf on a star is the import indicator") {
  const Mat p = dc_ptdf(3, {{0, 1}, {0, 2}});
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(1, 0) == doctest::Approx(1.0));
  CHECK(p(2, 0) == doctest::Approx(0.0));
  CHECK(p(1, 1) == doctest::Approx(0.0));
  CHECK(p(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("dc ptdf on a triangle splits two-to-one") {
  const Mat p = dc_ptdf(3, {{0, 1}, {1, 2}, {2, 0}});
  CHECK(p(1, 0) == doctest::Approx(2.0 / 3));
  CHECK(p(1, 1) == doctest::Approx(-1.0 / 3));
  CHECK(p(1, 2) == doctest::Approx(-1.0 / 3));
}

TEST_CASE("generator is deterministic and respects dimensions") {
  GenDims dims{2, 5, 3, 3};
  const auto a = generate_instance(42, dims);
  const auto b = generate_instance(42, dims);
  CHECK(a.I() == 2);
  CHECK(a.J() == 5);
  CHECK(a.K() == 3);
  CHECK(a.D() == 3);
  CHECK(a.A() == 2);  // star topology
  CHECK((a.zmax - b.zmax).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.day_weights - b.day_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::abs(a.day_weights.sum() - 1.0) <= 1e-12);
  const auto c = generate_instance(43, dims);
  CHECK((a.alpha - c.alpha).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("degenerate generator ranges rejected") {
  GenRanges r;
  r.beta_hi = 0.0;
  r.beta_lo = 0.0;
  CHECK_THROWS_AS(generate_instance(1, GenDims{}, r), ValidationError);
}

TEST_CASE("fixtures validate") {
  monopoly_fixture().validate();
  duopoly_fixture().validate();
  two_node_two_day_fixture().validate();
  const auto n5 = nordic5_fixture();
  n5.validate();
  CHECK(n5.I() == 5);
  CHECK(n5.J() == 9);
  CHECK(n5.renewable_count() == 4);
  CHECK(n5.D() == 3);
}

TEST_SUITE_END();
