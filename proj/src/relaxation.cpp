#include "trilevel/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace trilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convexity of a quadratic row restricted to its support.
enum class RowCurvature { Convex, Concave, Indefinite };

RowCurvature curvature(const QuadExpr& e) {
  std::set<int> sup;
  for (const auto& t : e.quad) {
    sup.insert(t.i);
    sup.insert(t.j);
  }
  std::vector<int> vars(sup.begin(), sup.end());
  std::map<int, int> pos;
  for (size_t i = 0; i < vars.size(); ++i) pos[vars[i]] = static_cast<int>(i);
  Mat m = Mat::Zero(vars.size(), vars.size());
  for (const auto& t : e.quad) {
    const int i = pos[t.i], j = pos[t.j];
    if (i == j)
      m(i, i) += 2.0 * t.coef;
    else {
      m(i, j) += t.coef;
      m(j, i) += t.coef;
    }
  }
  if (is_psd(m, -1e-9)) return RowCurvature::Convex;
  if (is_psd(-m, -1e-9)) return RowCurvature::Concave;
  return RowCurvature::Indefinite;
}

}  // namespace

Relaxation::Relaxation(const SingleLevelProgram& program, double box_fallback)
    : program_(&program), box_fallback_(box_fallback) {
  terms_ = program.bilinear;
  for (size_t t = 0; t < terms_.size(); ++t)
    term_index_[{terms_[t].a, terms_[t].b}] = static_cast<int>(t);
  // every unbounded variable gets the fallback box: bilinear factors need it
  // for the envelopes, and free multipliers with a null space would
  // otherwise wander during the interior-point solves
  for (int v = 0; v < program.n(); ++v) {
    const auto& var = program.vars[v];
    if (!std::isfinite(var.lb) || !std::isfinite(var.ub))
      fallback_boxed_.push_back(v);
  }
}

Boxes Relaxation::root_boxes() const {
  const int n = program_->n();
  Boxes b;
  b.lo = Vec::Constant(n, -kInf);
  b.hi = Vec::Constant(n, kInf);
  for (int i = 0; i < n; ++i) {
    b.lo[i] = program_->vars[i].lb;
    b.hi[i] = program_->vars[i].ub;
  }
  for (int v : fallback_boxed_) {
    b.lo[v] = std::max(b.lo[v], -box_fallback_);
    b.hi[v] = std::min(b.hi[v], box_fallback_);
  }
  return b;
}

std::vector<std::pair<int, double>> Relaxation::linearize(
    const QuadExpr& e, double* constant) const {
  std::vector<std::pair<int, double>> terms;
  const int n = program_->n();
  for (const auto& [idx, c] : e.lin.terms) terms.emplace_back(idx, c);
  for (const auto& t : e.quad) {
    const auto it = term_index_.find({std::min(t.i, t.j), std::max(t.i, t.j)});
    terms.emplace_back(n + it->second, t.coef);
  }
  *constant = e.lin.constant;
  return terms;
}

void Relaxation::envelope_rows(KernelBuilder& kb, int pvar, int a, int b,
                               const Boxes& boxes) const {
  const double la = boxes.lo[a], ua = boxes.hi[a];
  const double lb = boxes.lo[b], ub = boxes.hi[b];
  if (a == b) {
    // square: tangents below, secant above
    for (double t : {la, ua, 0.5 * (la + ua)})
      kb.add_affine({{pvar, 1.0}, {a, -2.0 * t}}, Sense::Ge, -t * t);
    kb.add_affine({{pvar, 1.0}, {a, -(la + ua)}}, Sense::Le, -la * ua);
    return;
  }
  kb.add_affine({{pvar, 1.0}, {a, -lb}, {b, -la}}, Sense::Ge, -la * lb);
  kb.add_affine({{pvar, 1.0}, {a, -ub}, {b, -ua}}, Sense::Ge, -ua * ub);
  kb.add_affine({{pvar, 1.0}, {a, -ub}, {b, -la}}, Sense::Le, -la * ub);
  kb.add_affine({{pvar, 1.0}, {a, -lb}, {b, -ua}}, Sense::Le, -ua * lb);
}

KernelProblem Relaxation::build(const Boxes& boxes,
                                const std::vector<PairFix>& fix) const {
  const auto& p = *program_;
  const int n = p.n();
  const double sgn = p.sense == ObjSense::Min ? 1.0 : -1.0;

  KernelBuilder kb;
  for (int i = 0; i < n; ++i) {
    double lo = boxes.lo[i], hi = boxes.hi[i];
    kb.add_var(lo, hi);
  }
  // pair fixings on the variable side shrink the box to zero
  std::vector<double> lo_override(n, -kInf), hi_override(n, kInf);
  for (size_t k = 0; k < p.pairs.size(); ++k) {
    if (k < fix.size() && fix[k] == PairFix::LeftZero) {
      lo_override[p.pairs[k].var] = 0.0;
      hi_override[p.pairs[k].var] = 0.0;
    }
  }

  // product variables with interval bounds from the box corners
  std::vector<int> pvars(terms_.size());
  for (size_t t = 0; t < terms_.size(); ++t) {
    const int a = terms_[t].a, b = terms_[t].b;
    const double la = boxes.lo[a], ua = boxes.hi[a];
    const double lb = boxes.lo[b], ub = boxes.hi[b];
    double plo, phi;
    if (a == b) {
      phi = std::max(la * la, ua * ua);
      plo = (la <= 0.0 && ua >= 0.0) ? 0.0 : std::min(la * la, ua * ua);
    } else {
      plo = std::min({la * lb, la * ub, ua * lb, ua * ub});
      phi = std::max({la * lb, la * ub, ua * lb, ua * ub});
    }
    if (!std::isfinite(plo)) plo = -kInf;
    if (!std::isfinite(phi)) phi = kInf;
    pvars[t] = kb.add_var(plo, phi);
  }

  KernelProblem kp;  // assembled at the end; collect rows via the builder

  // objective
  for (const auto& [idx, c] : p.objective.terms) kb.obj_lin(idx, sgn * c);
  kb.obj_constant(sgn * p.objective.constant);

  // affine rows
  for (const auto& row : p.affine) {
    std::vector<std::pair<int, double>> terms(row.lhs.terms.begin(),
                                              row.lhs.terms.end());
    kb.add_affine(terms, row.sense, row.rhs - row.lhs.constant);
  }

  // quadratic rows: linearized copy always; additionally a convex row that
  // keeps the sign-definite core exact and relaxes only the remainder
  for (const auto& row : p.quadratic) {
    double cst = 0.0;
    auto terms = linearize(row.lhs, &cst);
    kb.add_affine(terms, row.sense, row.rhs - cst);

    for (double s : {1.0, -1.0}) {
      const bool applies =
          (s > 0 && (row.sense == Sense::Le || row.sense == Sense::Eq)) ||
          (s < 0 && (row.sense == Sense::Ge || row.sense == Sense::Eq));
      if (!applies) continue;
      // core support: variables carrying a square term of the right sign
      std::set<int> core;
      for (const auto& t : row.lhs.quad)
        if (t.i == t.j && s * t.coef > 0.0) core.insert(t.i);
      if (core.empty()) continue;
      QuadExpr core_expr;
      for (const auto& t : row.lhs.quad)
        if (core.count(t.i) && core.count(t.j))
          core_expr.quad.push_back({t.i, t.j, s * t.coef});
      core_expr.canonicalize();
      if (curvature(core_expr) != RowCurvature::Convex) continue;
      std::vector<std::tuple<int, int, double>> q;
      for (const auto& t : core_expr.quad) q.emplace_back(t.i, t.j, t.coef);
      std::vector<std::pair<int, double>> l;
      for (const auto& [idx, c] : row.lhs.lin.terms) l.emplace_back(idx, s * c);
      for (const auto& t : row.lhs.quad) {
        if (core.count(t.i) && core.count(t.j)) continue;
        const auto it =
            term_index_.find({std::min(t.i, t.j), std::max(t.i, t.j)});
        l.emplace_back(n + it->second, s * t.coef);
      }
      kb.add_qrow(q, l, s * (row.rhs - row.lhs.lin.constant));
    }
  }

  // complementarity fixings on the expression side
  for (size_t k = 0; k < p.pairs.size() && k < fix.size(); ++k) {
    if (fix[k] != PairFix::RightZero) continue;
    const auto& pr = p.pairs[k];
    if (pr.row.table == RowRef::Table::Affine) {
      const auto& row = p.affine[pr.row.index];
      std::vector<std::pair<int, double>> terms(row.lhs.terms.begin(),
                                                row.lhs.terms.end());
      kb.add_affine(terms, Sense::Eq, row.rhs - row.lhs.constant);
    } else {
      const auto& row = p.quadratic[pr.row.index];
      double cst = 0.0;
      auto terms = linearize(row.lhs, &cst);
      kb.add_affine(terms, Sense::Eq, row.rhs - cst);
    }
  }

  // envelopes
  for (size_t t = 0; t < terms_.size(); ++t)
    envelope_rows(kb, pvars[t], terms_[t].a, terms_[t].b, boxes);

  kp = kb.build();
  for (int i = 0; i < n; ++i) {
    kp.lb[i] = std::max(kp.lb[i], lo_override[i]);
    kp.ub[i] = std::min(kp.ub[i], hi_override[i]);
  }
  return kp;
}

KernelProblem Relaxation::build_at_point(const Boxes& boxes,
                                         const std::vector<PairFix>& fix,
                                         const Vec& point) const {
  const auto& p = *program_;
  const int n = p.n();
  const double sgn = p.sense == ObjSense::Min ? 1.0 : -1.0;

  KernelBuilder kb;
  for (int i = 0; i < n; ++i) kb.add_var(boxes.lo[i], boxes.hi[i]);
  std::vector<double> lo_override(n, -kInf), hi_override(n, kInf);
  for (size_t k = 0; k < p.pairs.size() && k < fix.size(); ++k) {
    if (fix[k] == PairFix::LeftZero) {
      lo_override[p.pairs[k].var] = 0.0;
      hi_override[p.pairs[k].var] = 0.0;
    }
  }

  for (const auto& [idx, c] : p.objective.terms) kb.obj_lin(idx, sgn * c);
  kb.obj_constant(sgn * p.objective.constant);

  // a*b ~ a*b0 + a0*b - a0*b0 around the expansion point
  auto expand = [&](const QuadExpr& e) {
    std::pair<std::vector<std::pair<int, double>>, double> out;
    out.second = e.lin.constant;
    for (const auto& [idx, c] : e.lin.terms) out.first.emplace_back(idx, c);
    for (const auto& t : e.quad) {
      const double a0 = point[t.i], b0 = point[t.j];
      out.first.emplace_back(t.i, t.coef * b0);
      out.first.emplace_back(t.j, t.coef * a0);
      out.second -= t.coef * a0 * b0;
    }
    return out;
  };

  for (const auto& row : p.affine) {
    std::vector<std::pair<int, double>> terms(row.lhs.terms.begin(),
                                              row.lhs.terms.end());
    kb.add_affine(terms, row.sense, row.rhs - row.lhs.constant);
  }
  for (const auto& row : p.quadratic) {
    auto [terms, cst] = expand(row.lhs);
    kb.add_affine(terms, row.sense, row.rhs - cst);
  }
  for (size_t k = 0; k < p.pairs.size() && k < fix.size(); ++k) {
    if (fix[k] != PairFix::RightZero) continue;
    const auto& pr = p.pairs[k];
    if (pr.row.table == RowRef::Table::Affine) {
      const auto& row = p.affine[pr.row.index];
      std::vector<std::pair<int, double>> terms(row.lhs.terms.begin(),
                                                row.lhs.terms.end());
      kb.add_affine(terms, Sense::Eq, row.rhs - row.lhs.constant);
    } else {
      const auto& row = p.quadratic[pr.row.index];
      auto [terms, cst] = expand(row.lhs);
      kb.add_affine(terms, Sense::Eq, row.rhs - cst);
    }
  }

  KernelProblem kp = kb.build();
  for (int i = 0; i < n; ++i) {
    kp.lb[i] = std::max(kp.lb[i], lo_override[i]);
    kp.ub[i] = std::min(kp.ub[i], hi_override[i]);
  }
  return kp;
}

Vec Relaxation::product_violations(const Vec& kernel_point) const {
  const int n = program_->n();
  Vec v(terms_.size());
  for (size_t t = 0; t < terms_.size(); ++t)
    v[t] = std::abs(kernel_point[n + t] -
                    kernel_point[terms_[t].a] * kernel_point[terms_[t].b]);
  return v;
}

std::map<int, double> Relaxation::factor_violations(
    const Vec& kernel_point) const {
  const Vec viol = product_violations(kernel_point);
  std::map<int, double> out;
  for (size_t t = 0; t < terms_.size(); ++t) {
    out[terms_[t].a] = std::max(out[terms_[t].a], viol[t]);
    out[terms_[t].b] = std::max(out[terms_[t].b], viol[t]);
  }
  return out;
}

}  // namespace trilevel
