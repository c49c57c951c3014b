#include <doctest.h>

#include "trilevel/bnb.hpp"
#include "trilevel/market.hpp"
#include "trilevel/oracle.hpp"
#include "trilevel/reformulate.hpp"

using namespace trilevel;

namespace {

SingleLevelProgram trivial_program() {
  // max y with a complement pair that the root relaxation already settles
  SingleLevelProgram p;
  p.sense = ObjSense::Min;
  p.vars.push_back({"y", 0.0, 3.0, VarRole::Primal});
  p.vars.push_back({"u", 0.0, 5.0, VarRole::Dual});
  p.objective.add(0, -1.0);
  AffineCon row;
  row.lhs.add(0, -1.0);
  row.lhs.constant = 3.0;
  row.sense = Sense::Ge;
  row.rhs = 0.0;
  row.name = "slack_row";
  p.affine.push_back(row);
  p.pairs.push_back({1, {RowRef::Table::Affine, 0}, "cs", -1});
  p.sos1.push_back({1, {RowRef::Table::Affine, 0}});
  p.validate();
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("bnb");

TEST_CASE("root relaxation that satisfies everything closes in one node") {
  const auto p = trivial_program();
  const auto r = branch_and_bound(p);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.nodes == 1);
  CHECK(r.objective == doctest::Approx(-3.0).epsilon(1e-7));
  CHECK(r.point[0] == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("monopoly fixture solves to the analytic equilibrium") {
  const auto inst = monopoly_fixture();
  const auto model = build_trilevel(inst, 0.6);
  const auto program = strong_duality_reformulate(model);
  SolveLimits lim;
  lim.time_limit_s = 60.0;
  const auto r = branch_and_bound(program, lim);
  REQUIRE(r.status == SolveStatus::Optimal);
  // regulator prefers production at this weight: zero tax, Cournot output
  const double z_star =
      cournot_monopoly_total(60.0, 0.5, 15.0, 200.0);  // 45 MW
  const double want = -(0.6 - 0.4 * 0.8) * z_star;     // minimization value
  CHECK(r.objective == doctest::Approx(want).epsilon(1e-5));
  CHECK(r.verification.pass(1e-6));
  // z variable sits after x (3) and y (1)
  CHECK(r.point[4] == doctest::Approx(z_star).epsilon(1e-5));
}

TEST_CASE("monopoly lcp route matches the strong-duality route") {
  const auto inst = monopoly_fixture();
  const auto model = build_trilevel(inst, 0.6);
  SolveLimits lim;
  lim.time_limit_s = 120.0;
  const auto sd = branch_and_bound(strong_duality_reformulate(model), lim);
  const auto lc = branch_and_bound(lcp_reformulate(model), lim);
  REQUIRE(sd.status == SolveStatus::Optimal);
  REQUIRE(lc.status == SolveStatus::Optimal);
  CHECK(sd.objective ==
        doctest::Approx(lc.objective).epsilon(1e-5).scale(1.0));
}

TEST_CASE("duopoly fixture hits the symmetric equilibrium") {
  const auto inst = duopoly_fixture();
  const auto model = build_trilevel(inst, 0.6);
  SolveLimits lim;
  lim.time_limit_s = 120.0;
  const auto r = branch_and_bound(strong_duality_reformulate(model), lim);
  REQUIRE(r.status == SolveStatus::Optimal);
  const double each = cournot_duopoly_each(60.0, 0.5, 15.0, 200.0);  // 30 MW
  const double want = -(0.6 - 0.4 * 0.8) * 2.0 * each;
  CHECK(r.objective == doctest::Approx(want).epsilon(1e-5));
  CHECK(r.verification.pass(1e-6));
}

TEST_CASE("single-threaded runs are deterministic") {
  const auto inst = monopoly_fixture();
  const auto model = build_trilevel(inst, 0.6);
  const auto program = strong_duality_reformulate(model);
  const auto a = branch_and_bound(program);
  const auto b = branch_and_bound(program);
  CHECK(a.nodes == b.nodes);
  CHECK(a.objective == b.objective);
  CHECK((a.point - b.point).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("node limit reports the incumbent with a gap") {
  const auto inst = duopoly_fixture();
  const auto model = build_trilevel(inst, 0.45);
  SolveLimits lim;
  lim.node_limit = 1;
  const auto r = branch_and_bound(strong_duality_reformulate(model), lim);
  CHECK(r.status == SolveStatus::NodeLimit);
}

TEST_SUITE_END();
