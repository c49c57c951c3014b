#include "trilevel/verify.hpp"

#include <cmath>

namespace trilevel {

namespace {

double residual(double value, Sense sense) {
  switch (sense) {
    case Sense::Eq: return std::abs(value);
    case Sense::Ge: return std::max(0.0, -value);
    case Sense::Le: return std::max(0.0, value);
  }
  return 0.0;
}

}  // namespace

VerifyReport verify_solution(const SingleLevelProgram& p, const Vec& point) {
  if (point.size() < p.n())
    throw ValidationError("point dimension does not match the program");
  VerifyReport r;
  const Vec v = point.head(p.n());

  for (const auto& c : p.affine) {
    const double res = residual(c.lhs.eval(v) - c.rhs, c.sense);
    if (res > r.max_affine_residual) {
      r.max_affine_residual = res;
      r.worst_affine = c.name;
    }
  }
  for (const auto& c : p.quadratic) {
    const double res = residual(c.lhs.eval(v) - c.rhs, c.sense);
    if (res > r.max_quad_residual) {
      r.max_quad_residual = res;
      r.worst_quad = c.name;
    }
  }
  for (int i = 0; i < p.n(); ++i) {
    const double res =
        std::max(p.vars[i].lb - v[i], v[i] - p.vars[i].ub);
    if (res > r.max_bound_violation) {
      r.max_bound_violation = res;
      r.worst_bound = p.vars[i].name;
    }
  }
  for (const auto& pr : p.pairs) {
    const double prod = std::abs(v[pr.var] * p.row_value(pr.row, v));
    if (prod > r.max_pair_product) {
      r.max_pair_product = prod;
      r.worst_pair = pr.name;
    }
  }
  for (const auto& g : p.groups)
    r.group_gaps.push_back(
        g.gap_expr.quad.empty() && g.gap_expr.lin.empty()
            ? 0.0
            : g.gap_expr.eval(v));
  return r;
}

}  // namespace trilevel
