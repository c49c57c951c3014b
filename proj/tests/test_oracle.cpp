#include <doctest.h>

#include "trilevel/market.hpp"
#include "trilevel/oracle.hpp"
#include "trilevel/reformulate.hpp"
#include "trilevel/verify.hpp"

using namespace trilevel;

TEST_SUITE_BEGIN("oracle");

TEST_CASE("monopoly equilibrium matches the closed form on the whole grid") {
  const auto inst = monopoly_fixture();
  OracleOptions opt;
  opt.x_step = 7.0;
  opt.sweep_rho = false;
  opt.rho_fixed = 0.0;
  const auto res = grid_oracle(inst, 0.6, opt);
  REQUIRE(res.found);
  for (const auto& row : res.sweep) {
    REQUIRE(row.feasible);
    const double gamma = 15.0 + 0.8 * row.tax;
    const double want = cournot_monopoly_total(60.0, 0.5, gamma, 200.0);
    CHECK(std::abs(row.production - want) <= 1e-6);
  }
  CHECK(res.best_tax == 0.0);  // production-weighted regulator prefers no tax
}

TEST_CASE("duopoly equilibrium is symmetric on the grid") {
  const auto inst = duopoly_fixture();
  OracleOptions opt;
  opt.x_step = 11.0;
  opt.sweep_rho = false;
  const auto res = grid_oracle(inst, 0.6, opt);
  REQUIRE(res.found);
  for (const auto& row : res.sweep) {
    REQUIRE(row.feasible);
    const double gamma = 15.0 + 0.8 * row.tax;
    const double each = cournot_duopoly_each(60.0, 0.5, gamma, 200.0);
    CHECK(std::abs(row.production - 2.0 * each) <= 1e-6);
  }
}

TEST_CASE("unreachable renewable share is recorded per point") {
  // no renewable capacity but profitable fossil production
  const auto inst = monopoly_fixture();
  const auto pt = solve_equilibrium(inst, 0.6, 0.0, 0.5);
  CHECK_FALSE(pt.feasible);
  CHECK(!pt.note.empty());
}

TEST_CASE("two-node equilibrium clears the market and the fees settle") {
  const auto inst = two_node_two_day_fixture();
  const auto pt = solve_equilibrium(inst, 0.6, 5.0, 0.0);
  REQUIRE(pt.feasible);
  for (int d = 0; d < inst.D(); ++d) {
    const auto& eq = pt.days[d];
    CHECK(eq.gap <= 1e-6);
    CHECK(eq.fee_residual <= 1e-7);
    // arbitrage identity: closed-form quantities equal the imports
    const auto red = arbitrage_reduction(inst, d);
    Vec z_node = Vec::Zero(inst.K());
    for (int i = 0; i < inst.I(); ++i)
      for (int j = 0; j < inst.J(); ++j)
        for (int k = 0; k < inst.K(); ++k)
          z_node[k] += eq.z[inst.ijk(i, j, k)];
    const Vec a = red.arbitrage(z_node, inst.alpha.col(d), eq.w);
    CHECK((a - eq.y).cwiseAbs().maxCoeff() <= 1e-8);
    // fees are the congestion prices
    Vec w_implied = Vec::Zero(inst.K());
    for (int aa = 0; aa < inst.A(); ++aa)
      for (int k = 0; k < inst.K(); ++k)
        w_implied[k] +=
            inst.ptdf(k, aa) * (eq.phi_plus[aa] - eq.phi_minus[aa]);
    CHECK((w_implied - eq.w).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("oracle equilibrium embeds into the assembled optimality system") {
  const auto inst = two_node_two_day_fixture();
  const double tax = 4.0, rho = 0.0;
  const auto pt = solve_equilibrium(inst, 0.6, tax, rho);
  REQUIRE(pt.feasible);
  const auto sys = assemble_kkt_system(inst, 0.6);
  const Vec v = embed_equilibrium(inst, sys.program, tax, rho, pt);
  const auto vr = verify_solution(sys.program, v);
  CHECK(vr.max_affine_residual <= 1e-6);
  CHECK(vr.max_quad_residual <= 1e-6);
  CHECK(vr.max_pair_product <= 1e-6);
  for (double g : vr.group_gaps) {
    CHECK(g <= 1e-6);
    CHECK(g >= -1e-9);
  }
}

TEST_CASE("perturbing a binding quantity is caught and named") {
  const auto inst = monopoly_fixture();
  // drive the producer to its capacity with a tight cap
  auto tight = inst;
  tight.zmax[0] = 10.0;
  const auto pt = solve_equilibrium(tight, 0.6, 0.0, 0.0);
  REQUIRE(pt.feasible);
  const auto sys = assemble_kkt_system(tight, 0.6);
  Vec v = embed_equilibrium(tight, sys.program, 0.0, 0.0, pt);
  const auto clean = verify_solution(sys.program, v);
  CHECK(clean.pass(1e-6));
  // push production past the active capacity
  for (int i = 0; i < sys.program.n(); ++i)
    if (sys.program.vars[i].name.rfind("z[", 0) == 0) v[i] += 1e-2;
  const auto bad = verify_solution(sys.program, v);
  CHECK_FALSE(bad.pass(1e-6));
  const bool named_capacity =
      bad.worst_affine.find("ident") != std::string::npos ||
      bad.worst_pair.find("lamc") != std::string::npos ||
      bad.worst_pair.find("pfeas") != std::string::npos ||
      bad.max_bound_violation > 1e-6;
  CHECK(named_capacity);
}

TEST_CASE("all-zero point fails the stationarity rows when profitable") {
  const auto inst = monopoly_fixture();
  const auto sys = assemble_kkt_system(inst, 0.6);
  Vec v = Vec::Zero(sys.program.n());
  const auto vr = verify_solution(sys.program, v);
  CHECK_FALSE(vr.pass(1e-6));
}

TEST_SUITE_END();
