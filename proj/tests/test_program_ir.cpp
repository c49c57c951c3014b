#include <doctest.h>

#include "trilevel/market.hpp"
#include "trilevel/program_ir.hpp"

using namespace trilevel;

namespace {

TrilevelModel tiny_lcp_model(const Mat& ny) {
  TrilevelModel m;
  m.n_x = 1;
  m.n_y = 1;
  m.c1 = Vec::Zero(1);
  m.d1 = Vec::Ones(1);
  m.e1_lcp = Vec::Zero(2);
  m.A1 = Mat::Zero(0, 1);
  m.B1 = Mat::Zero(0, 1);
  m.C1_lcp = Mat::Zero(0, 2);
  m.a1 = Vec::Zero(0);
  m.d2 = AffineMap(Vec::Ones(1));
  m.e2_lcp = Vec::Zero(2);
  m.A2 = Mat::Zero(1, 1);
  m.B2 = Mat::Ones(1, 1);
  m.C2_lcp = Mat::Zero(1, 2);
  m.a2 = Vec::Zero(1);
  LcpBlock l;
  l.q = Vec::Ones(2);
  l.n_x = Mat::Zero(2, 1);
  l.n_y = ny;
  l.m = Mat::Identity(2, 2);
  m.lcp = l;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("program_ir");

TEST_CASE("psd check symmetrizes and applies the eigenvalue floor") {
  Mat f(2, 2);
  f << 1.0, 2.0, 0.0, 1.0;  // asymmetric input, symmetrized to [[1,1],[1,1]]
  CHECK(is_psd(f));
  Mat neg(2, 2);
  neg << 1.0, 0.0, 0.0, -1e-6;
  CHECK_FALSE(is_psd(neg));
  Mat tiny(1, 1);
  tiny << -1e-10;  // inside the tolerance floor
  CHECK(is_psd(tiny));
}

TEST_CASE("classification by bottom-level coupling") {
  CHECK(classify_structure(tiny_lcp_model(Mat::Zero(2, 1))) ==
        Structure::Weak);
  Mat ny = Mat::Zero(2, 1);
  ny(1, 0) = 0.25;
  CHECK(classify_structure(tiny_lcp_model(ny)) == Structure::Strong);
}

TEST_CASE("classification is invariant under positive row scaling") {
  Mat ny = Mat::Zero(2, 1);
  ny(0, 0) = 3.0;
  auto m = tiny_lcp_model(ny);
  CHECK(classify_structure(m) == Structure::Strong);
  // scale the whole complementarity row by a positive factor
  m.lcp->q[0] *= 7.5;
  m.lcp->n_y.row(0) *= 7.5;
  m.lcp->n_x.row(0) *= 7.5;
  // the matrix must stay PSD for the model to validate, so scale
  // symmetrically instead of one row
  m.lcp->m = Mat::Identity(2, 2) * 7.5;
  CHECK(classify_structure(m) == Structure::Strong);

  auto w = tiny_lcp_model(Mat::Zero(2, 1));
  w.lcp->q *= 0.01;
  w.lcp->m *= 0.01;
  CHECK(classify_structure(w) == Structure::Weak);
}

TEST_CASE("market build classifies as weak") {
  const auto inst = two_node_two_day_fixture();
  const auto model = build_trilevel(inst, 0.6);
  CHECK(classify_structure(model) == Structure::Weak);
}

TEST_CASE("dimension mismatch is a validation error") {
  auto m = tiny_lcp_model(Mat::Zero(2, 1));
  m.B2 = Mat::Ones(2, 1);  // wrong row count
  CHECK_THROWS_AS(classify_structure(m), ValidationError);
}

TEST_CASE("closed-form size predictions") {
  const auto f = predicted_sizes(2, 3, 4, 5);
  CHECK(f.strong_duality_complementarities == 24);
  CHECK(f.lcp_complementarities == 41);
  CHECK(f.lcp_equalities == 10);
}

TEST_CASE("size report is a pure tally of the tables") {
  SingleLevelProgram p;
  p.vars.push_back({"a", 0.0, 1.0, VarRole::Primal});
  p.vars.push_back({"b", 0.0, 1.0, VarRole::Dual});
  AffineCon row;
  row.lhs.add(0, 1.0);
  row.sense = Sense::Ge;
  row.name = "r0";
  p.affine.push_back(row);
  AffineCon eq;
  eq.lhs.add(1, 1.0);
  eq.sense = Sense::Eq;
  eq.origin = RowOrigin::SolutionSet;
  eq.name = "r1";
  p.affine.push_back(eq);
  QuadCon q;
  q.lhs.add_quad(0, 1, 1.0);
  q.sense = Sense::Ge;
  q.name = "q0";
  p.quadratic.push_back(q);
  p.pairs.push_back({1, {RowRef::Table::Quad, 0}, "pair0", -1});
  p.sos1.push_back({1, {RowRef::Table::Quad, 0}});
  p.rebuild_bilinear_registry();
  p.validate();

  const auto r = count_sizes(p);
  CHECK(r.variables == 2);
  CHECK(r.affine_constraints == 2);
  CHECK(r.quadratic_constraints == 1);
  CHECK(r.affine_sos1 == 0);
  CHECK(r.quadratic_sos1 == 1);
  CHECK(r.equality_constraints == 1);
  CHECK(r.solution_set_equalities == 1);
  CHECK(r.complementarity_pairs == 1);
  CHECK(r.affine_sos1 + r.quadratic_sos1 == r.complementarity_pairs);
  REQUIRE(p.bilinear.size() == 1);
  CHECK(p.bilinear[0].a == 0);
  CHECK(p.bilinear[0].b == 1);
}

TEST_CASE("expression canonicalization merges and prunes") {
  LinExpr e;
  e.add(3, 1.0);
  e.add(1, 2.0);
  e.add(3, -1.0);
  e.canonicalize();
  REQUIRE(e.terms.size() == 1);
  CHECK(e.terms[0].first == 1);

  QuadExpr q;
  q.add_quad(2, 0, 1.5);
  q.add_quad(0, 2, 0.5);
  q.canonicalize();
  REQUIRE(q.quad.size() == 1);
  CHECK(q.quad[0].i == 0);
  CHECK(q.quad[0].j == 2);
  CHECK(q.quad[0].coef == 2.0);
}

TEST_SUITE_END();
