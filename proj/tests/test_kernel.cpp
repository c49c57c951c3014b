#include <doctest.h>

#include <random>

#include "trilevel/kernel.hpp"

using namespace trilevel;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Exhaustive vertex enumeration over the rows and box faces of a small LP;
/// independent of the interior-point path.
struct VertexOracle {
  bool feasible = false;
  double obj = kInf;
};

VertexOracle enumerate_lp(const KernelProblem& kp) {
  const int n = kp.n;
  // collect all hyperplanes: rows plus finite box faces
  std::vector<Vec> normals;
  std::vector<double> offsets;
  for (int r = 0; r < static_cast<int>(kp.sense.size()); ++r) {
    normals.push_back(kp.A.row(r).transpose());
    offsets.push_back(kp.b[r]);
  }
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(kp.lb[i])) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      normals.push_back(e);
      offsets.push_back(kp.lb[i]);
    }
    if (std::isfinite(kp.ub[i])) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      normals.push_back(e);
      offsets.push_back(kp.ub[i]);
    }
  }
  const int h = static_cast<int>(normals.size());
  VertexOracle out;
  std::vector<int> pick(n);
  auto feasible = [&](const Vec& v) {
    for (int r = 0; r < static_cast<int>(kp.sense.size()); ++r) {
      const double lhs = kp.A.row(r).dot(v);
      if (kp.sense[r] == Sense::Le && lhs > kp.b[r] + 1e-7) return false;
      if (kp.sense[r] == Sense::Ge && lhs < kp.b[r] - 1e-7) return false;
      if (kp.sense[r] == Sense::Eq && std::abs(lhs - kp.b[r]) > 1e-7)
        return false;
    }
    for (int i = 0; i < n; ++i)
      if (v[i] < kp.lb[i] - 1e-7 || v[i] > kp.ub[i] + 1e-7) return false;
    return true;
  };
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Mat M(n, n);
      Vec rhs(n);
      for (int k = 0; k < n; ++k) {
        M.row(k) = normals[pick[k]].transpose();
        rhs[k] = offsets[pick[k]];
      }
      Eigen::FullPivLU<Mat> lu(M);
      if (!lu.isInvertible()) return;
      const Vec v = lu.solve(rhs);
      if (!feasible(v)) return;
      out.feasible = true;
      out.obj = std::min(out.obj, kp.c.dot(v) + kp.c0);
      return;
    }
    for (int i = start; i < h; ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("kernel");

TEST_CASE("one-dimensional lp") {
  KernelBuilder kb;
  const int y = kb.add_var(0.0, kInf);
  kb.obj_lin(y, -1.0);
  kb.add_affine({{y, 1.0}}, Sense::Le, 3.0);
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Optimal);
  CHECK(r.v[y] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(r.obj == doctest::Approx(-3.0).epsilon(1e-8));
  // shadow price of the binding row
  CHECK(r.dual_affine[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("free stationary point of a quadratic") {
  KernelBuilder kb;
  const int z = kb.add_var();
  kb.obj_quad(z, z, 0.5);
  kb.obj_lin(z, -1.0);
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Optimal);
  CHECK(r.v[z] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.obj == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("constrained qp at a weakly active bound") {
  KernelBuilder kb;
  const int z = kb.add_var();
  kb.obj_quad(z, z, 0.5);
  kb.obj_lin(z, -1.0);
  kb.add_affine({{z, 1.0}}, Sense::Ge, 1.0);
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Optimal);
  CHECK(r.v[z] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.obj == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("convex quadratic row") {
  KernelBuilder kb;
  const int x = kb.add_var();
  kb.obj_lin(x, -1.0);
  kb.add_qrow({{x, x, 1.0}}, {}, 4.0);  // x^2 <= 4
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Optimal);
  CHECK(r.v[x] == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(r.dual_quad[0] == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("two-variable qp with equality") {
  // min x^2 + y^2 s.t. x + y = 2 -> (1,1)
  KernelBuilder kb;
  const int x = kb.add_var();
  const int y = kb.add_var();
  kb.obj_quad(x, x, 1.0);
  kb.obj_quad(y, y, 1.0);
  kb.add_affine({{x, 1.0}, {y, 1.0}}, Sense::Eq, 2.0);
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Optimal);
  CHECK(r.v[x] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.v[y] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("infeasibility is certified") {
  KernelBuilder kb;
  const int x = kb.add_var(0.0, 10.0);
  kb.obj_lin(x, 1.0);
  kb.add_affine({{x, 1.0}}, Sense::Ge, 5.0);
  kb.add_affine({{x, 1.0}}, Sense::Le, 4.0);
  const auto r = solve_kernel(kb.build());
  REQUIRE(r.status == KernelStatus::Infeasible);
  CHECK(r.farkas_verified);
}

TEST_CASE("unbounded direction detected") {
  KernelBuilder kb;
  const int x = kb.add_var(0.0, kInf);
  kb.obj_lin(x, -1.0);
  const auto r = solve_kernel(kb.build());
  CHECK(r.status == KernelStatus::Unbounded);
}

TEST_CASE("nonconvex input rejected before solving") {
  KernelProblem kp;
  kp.n = 1;
  kp.c = Vec::Zero(1);
  kp.Q = -Mat::Identity(1, 1);
  kp.A = Mat::Zero(0, 1);
  kp.b = Vec::Zero(0);
  kp.lb = Vec::Constant(1, -1.0);
  kp.ub = Vec::Constant(1, 1.0);
  CHECK_THROWS_AS(solve_kernel(kp), ValidationError);
}

TEST_CASE("random lps agree with vertex enumeration") {
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % (hi - lo + 1));
  };
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = pick(2, 3);
    const int m = pick(2, 6);
    KernelBuilder kb;
    std::vector<int> vars;
    for (int i = 0; i < n; ++i) vars.push_back(kb.add_var(-5.0, 5.0));
    for (int i = 0; i < n; ++i)
      kb.obj_lin(vars[i], static_cast<double>(pick(-3, 3)));
    for (int r = 0; r < m; ++r) {
      std::vector<std::pair<int, double>> terms;
      for (int i = 0; i < n; ++i) {
        const int coef = pick(-3, 3);
        if (coef != 0) terms.emplace_back(vars[i], static_cast<double>(coef));
      }
      if (terms.empty()) terms.emplace_back(vars[0], 1.0);
      kb.add_affine(terms, pick(0, 1) ? Sense::Le : Sense::Ge,
                    static_cast<double>(pick(-4, 8)));
    }
    const auto kp = kb.build();
    const auto truth = enumerate_lp(kp);
    const auto r = solve_kernel(kp);
    if (truth.feasible) {
      REQUIRE(r.status == KernelStatus::Optimal);
      CHECK(r.obj == doctest::Approx(truth.obj).epsilon(1e-8));
      ++solved;
    } else {
      CHECK(r.status == KernelStatus::Infeasible);
    }
  }
  CHECK(solved > 10);  // the batch must exercise the optimal path
}

TEST_CASE("random convex qps satisfy kkt at the reported point") {
  std::mt19937_64 rng(77);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 3);
    Mat R(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = u();
    KernelProblem kp;
    kp.n = n;
    kp.Q = R.transpose() * R + 0.1 * Mat::Identity(n, n);
    kp.c = Vec::Zero(n);
    for (int i = 0; i < n; ++i) kp.c[i] = u();
    kp.lb = Vec::Constant(n, -2.0);
    kp.ub = Vec::Constant(n, 2.0);
    const int m = 2;
    kp.A = Mat::Zero(m, n);
    kp.b = Vec::Zero(m);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < n; ++i) kp.A(r, i) = u();
      kp.b[r] = u();
      kp.sense.push_back(r % 2 ? Sense::Le : Sense::Ge);
    }
    const auto res = solve_kernel(kp);
    REQUIRE(res.status == KernelStatus::Optimal);
    CHECK(res.kkt_residual <= 1e-7);
    CHECK(res.feas_residual <= 1e-7);
  }
}

TEST_SUITE_END();
