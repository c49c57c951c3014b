#include <doctest.h>

#include "trilevel/market.hpp"
#include "trilevel/program_ir.hpp"
#include "trilevel/reformulate.hpp"

using namespace trilevel;

namespace {

int nonneg_middle_vars(const TrilevelModel& m) {
  int n = 0;
  for (int j = 0; j < m.n_y; ++j)
    if (m.y_free.empty() || !m.y_free[j]) ++n;
  return n;
}

}  // namespace

TEST_SUITE_BEGIN("reformulate");

TEST_CASE("complementarity counts match the closed forms on market builds") {
  for (auto [i, j, k, d] : {std::array<int, 4>{1, 2, 2, 1},
                            std::array<int, 4>{2, 3, 2, 2},
                            std::array<int, 4>{2, 5, 3, 3}}) {
    GenDims dims{i, j, k, d};
    const auto inst = generate_instance(100 + i + j + k + d, dims);
    const auto model = build_trilevel(inst, 0.5);
    const int n2 = nonneg_middle_vars(model);
    const int n3 = model.bottom_vars();
    const int m3 = model.bottom_constraints();
    const auto f = predicted_sizes(n2, model.m2(), n3, m3);

    const auto sd = count_sizes(strong_duality_reformulate(model));
    CHECK(sd.complementarity_pairs == f.strong_duality_complementarities);

    const auto lc = count_sizes(lcp_reformulate(model));
    CHECK(lc.complementarity_pairs == f.lcp_complementarities);
    CHECK(lc.solution_set_equalities == f.lcp_equalities);
  }
}

TEST_CASE("base-case sizes under the three-line topology") {
  GenDims dims{2, 5, 3, 3};
  GenRanges ranges;
  ranges.topology = Topology::Ring;
  const auto inst = generate_instance(7, dims, ranges);
  REQUIRE(inst.A() == 3);
  const auto model = build_trilevel(inst, 0.5);

  const auto sd = count_sizes(strong_duality_reformulate(model));
  CHECK(sd.affine_sos1 == 288);
  CHECK(sd.quadratic_sos1 == 100);
  CHECK(sd.quadratic_constraints == 100);

  const auto lc = count_sizes(lcp_reformulate(model));
  CHECK(lc.affine_sos1 == 648);
  CHECK(lc.quadratic_sos1 == 99);
  CHECK(lc.quadratic_constraints == 100);

  // strictly smaller strong-duality program
  CHECK(sd.variables < lc.variables);
  CHECK(sd.affine_constraints < lc.affine_constraints);
  CHECK(sd.affine_sos1 < lc.affine_sos1);
  CHECK(sd.quadratic_sos1 - lc.quadratic_sos1 == 1);
}

TEST_CASE("strong-duality pairs shrink whenever a bottom level exists") {
  GenDims dims{1, 2, 2, 2};
  const auto inst = generate_instance(3, dims);
  const auto model = build_trilevel(inst, 0.5);
  REQUIRE(model.bottom_vars() + model.bottom_constraints() > 0);
  const auto sd = count_sizes(strong_duality_reformulate(model));
  const auto lc = count_sizes(lcp_reformulate(model));
  CHECK(sd.complementarity_pairs < lc.complementarity_pairs);
}

TEST_CASE("pure bilevel model reduces to the middle-level optimality system") {
  TrilevelModel m;
  m.n_x = 1;
  m.n_y = 2;
  m.c1 = Vec::Ones(1);
  m.d1 = Vec::Zero(2);
  m.A1 = Mat::Zero(0, 1);
  m.B1 = Mat::Zero(0, 2);
  m.a1 = Vec::Zero(0);
  m.d2 = AffineMap((Vec(2) << 1.0, 2.0).finished());
  m.A2 = Mat::Ones(1, 1);
  m.B2 = Mat::Ones(1, 2);
  m.a2 = Vec::Ones(1);
  const auto p = strong_duality_reformulate(m);
  const auto r = count_sizes(p);
  CHECK(r.complementarity_pairs == 3);  // two variables plus one row
  CHECK(r.quadratic_constraints == 0);
  for (const auto& v : p.vars) CHECK(v.name.find("eps") == std::string::npos);
}

TEST_CASE("dualization") {
  SUBCASE("zero quadratic form gives the linear dual") {
    QpBlock b;
    b.quad = Mat::Zero(2, 2);
    b.cost = AffineMap((Vec(2) << 1.0, 1.0).finished());
    b.con = Mat::Ones(1, 2);
    b.rhs = AffineMap(Vec::Ones(1));
    const auto d = dualize_qp(b);
    CHECK_FALSE(d.has_z);
    CHECK(d.obj.constant[0] == 1.0);
  }
  SUBCASE("non-psd form is rejected") {
    QpBlock b;
    b.quad = -Mat::Identity(1, 1);
    b.cost = AffineMap(Vec::Zero(1));
    b.con = Mat::Zero(0, 1);
    b.rhs = AffineMap(Vec::Zero(0));
    CHECK_THROWS_AS(dualize_qp(b), ValidationError);
  }
}

TEST_CASE("lcp route without top coupling stays affine") {
  TrilevelModel m;
  m.n_x = 1;
  m.n_y = 1;
  m.c1 = Vec::Ones(1);
  m.d1 = Vec::Zero(1);
  m.e1_lcp = Vec::Ones(2);
  m.A1 = Mat::Zero(0, 1);
  m.B1 = Mat::Zero(0, 1);
  m.C1_lcp = Mat::Zero(0, 2);
  m.a1 = Vec::Zero(0);
  m.d2 = AffineMap(Vec::Ones(1));
  m.e2_lcp = Vec::Zero(2);
  m.A2 = Mat::Zero(1, 1);
  m.B2 = Mat::Ones(1, 1);
  m.C2_lcp = Mat::Ones(1, 2);
  m.a2 = Vec::Zero(1);
  LcpBlock l;
  l.q = Vec::Ones(2);
  l.m = (Mat(2, 2) << 2, 0, 0, 1).finished();
  m.lcp = l;

  const auto p = lcp_reformulate(m);
  CHECK(p.bilinear.empty());
  CHECK(p.quadratic.empty());
  const auto r = count_sizes(p);
  CHECK(r.solution_set_equalities == 3);
}

TEST_CASE("strong structure is rejected by both routes") {
  TrilevelModel m;
  m.n_x = 1;
  m.n_y = 1;
  m.c1 = Vec::Ones(1);
  m.d1 = Vec::Zero(1);
  m.e1_lcp = Vec::Ones(1);
  m.A1 = Mat::Zero(0, 1);
  m.B1 = Mat::Zero(0, 1);
  m.C1_lcp = Mat::Zero(0, 1);
  m.a1 = Vec::Zero(0);
  m.d2 = AffineMap(Vec::Ones(1));
  m.e2_lcp = Vec::Zero(1);
  m.A2 = Mat::Zero(1, 1);
  m.B2 = Mat::Ones(1, 1);
  m.C2_lcp = Mat::Zero(1, 1);
  m.a2 = Vec::Zero(1);
  LcpBlock l;
  l.q = Vec::Ones(1);
  l.n_y = Mat::Ones(1, 1);
  l.m = Mat::Identity(1, 1);
  m.lcp = l;

  CHECK_THROWS_AS(lcp_reformulate(m), StructureError);
  CHECK_THROWS_AS(strong_duality_reformulate(m), ValidationError);
}

TEST_CASE("reformulation emits deterministic structures") {
  GenDims dims{2, 2, 2, 2};
  const auto inst = generate_instance(17, dims);
  const auto model = build_trilevel(inst, 0.5);
  const auto a = strong_duality_reformulate(model);
  const auto b = strong_duality_reformulate(model);
  REQUIRE(a.vars.size() == b.vars.size());
  REQUIRE(a.affine.size() == b.affine.size());
  REQUIRE(a.quadratic.size() == b.quadratic.size());
  for (size_t i = 0; i < a.affine.size(); ++i) {
    CHECK(a.affine[i].name == b.affine[i].name);
    CHECK(a.affine[i].lhs.terms == b.affine[i].lhs.terms);
    CHECK(a.affine[i].lhs.constant == b.affine[i].lhs.constant);
  }
  for (size_t i = 0; i < a.quadratic.size(); ++i) {
    CHECK(a.quadratic[i].lhs.lin.terms == b.quadratic[i].lhs.lin.terms);
    CHECK(a.quadratic[i].lhs.quad.size() == b.quadratic[i].lhs.quad.size());
  }
}

TEST_CASE("kkt assembly exposes per-day gap rows and the bottom systems") {
  const auto inst = two_node_two_day_fixture();
  const auto sys = assemble_kkt_system(inst, 0.5);
  REQUIRE(sys.day_lcps.size() == 2);
  REQUIRE(sys.program.groups.size() == 2);
  for (const auto& g : sys.program.groups) CHECK(g.gap_row >= 0);
  for (const auto& l : sys.day_lcps) CHECK(is_psd(l.m));
}

TEST_SUITE_END();
