#include "trilevel/program_ir.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace trilevel {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void check_map(const AffineMap& m, Eigen::Index rows, int n_x,
               const std::string& what) {
  require(m.constant.size() == rows, what + ": constant size mismatch");
  if (m.has_x()) {
    require(m.coeff.rows() == rows && m.coeff.cols() == n_x,
            what + ": coefficient shape mismatch");
  }
}

}  // namespace

int TrilevelModel::bottom_vars() const {
  if (lcp) return static_cast<int>(lcp->n());
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.n());
  return n;
}

int TrilevelModel::bottom_constraints() const {
  if (lcp) return 0;  // complementarity system carries no separate rows
  int m = 0;
  for (const auto& b : blocks) m += static_cast<int>(b.m());
  return m;
}

void TrilevelModel::validate() const {
  require(n_x >= 0 && n_y >= 0, "negative dimension");
  require(!(lcp.has_value() && !blocks.empty()),
          "bottom level must be either QP blocks or one LCP block");
  require(static_cast<int>(y_free.size()) == n_y || y_free.empty(),
          "y_free size mismatch");
  require(c1.size() == n_x && d1.size() == n_y, "top objective size mismatch");
  if (x_lb.size() > 0)
    require(x_lb.size() == n_x && x_ub.size() == n_x, "x bound size mismatch");

  const auto m1 = a1.size();
  require(A1.rows() == m1 && A1.cols() == n_x, "A1 shape");
  require(B1.rows() == m1 && B1.cols() == n_y, "B1 shape");
  require(static_cast<Eigen::Index>(top_sense.size()) == m1, "top sense size");

  const auto m2r = a2.size();
  require(A2.rows() == m2r && A2.cols() == n_x, "A2 shape");
  require(B2.rows() == m2r && B2.cols() == n_y, "B2 shape");
  check_map(d2, n_y, n_x, "d2");

  if (has_qp_bottom()) {
    require(e1.size() == blocks.size() && C1.size() == blocks.size(),
            "top-level bottom coupling must cover every block");
    require(e2.size() == blocks.size() && C2.size() == blocks.size(),
            "middle-level bottom coupling must cover every block");
    for (size_t b = 0; b < blocks.size(); ++b) {
      const auto& blk = blocks[b];
      const auto nb = blk.n();
      require(blk.quad.rows() == nb && blk.quad.cols() == nb, "F shape");
      require(is_psd(blk.quad),
              "block quadratic form is not positive semidefinite");
      check_map(blk.cost, nb, n_x, "block cost");
      require(blk.con.cols() == nb, "C3 shape");
      check_map(blk.rhs, blk.con.rows(), n_x, "block rhs");
      require(blk.group >= 0 && blk.group < n_groups, "block group range");
      require(e1[b].size() == nb, "e1 block size");
      require(C1[b].rows() == m1 && C1[b].cols() == nb, "C1 block shape");
      check_map(e2[b], nb, n_x, "e2 block");
      require(C2[b].rows() == m2r && C2[b].cols() == nb, "C2 block shape");
    }
    for (const auto& e : C2x) {
      require(e.row >= 0 && e.row < m2r, "coupled entry row range");
      require(e.block >= 0 && e.block < static_cast<int>(blocks.size()),
              "coupled entry block range");
      require(e.col >= 0 && e.col < blocks[e.block].n(),
              "coupled entry column range");
      require(e.xvar >= 0 && e.xvar < n_x, "coupled entry xvar range");
    }
  } else {
    const auto nl = lcp->n();
    require(lcp->m.rows() == nl && lcp->m.cols() == nl, "M shape");
    require(is_psd(lcp->m), "LCP matrix is not positive semidefinite");
    if (lcp->n_x.size() > 0)
      require(lcp->n_x.rows() == nl && lcp->n_x.cols() == n_x, "Nx shape");
    if (lcp->n_y.size() > 0)
      require(lcp->n_y.rows() == nl && lcp->n_y.cols() == n_y, "Ny shape");
    require(e1_lcp.size() == nl, "e1 size for LCP bottom");
    require(C1_lcp.rows() == m1 && C1_lcp.cols() == nl, "C1 shape for LCP");
    require(e2_lcp.size() == nl, "e2 size for LCP bottom");
    require(C2_lcp.rows() == m2r && C2_lcp.cols() == nl, "C2 shape for LCP");
  }
}

Structure classify_structure(const TrilevelModel& model) {
  model.validate();
  if (model.has_qp_bottom()) return Structure::Weak;
  const auto& ny = model.lcp->n_y;
  if (ny.size() == 0) return Structure::Weak;
  return (ny.array() != 0.0).any() ? Structure::Strong : Structure::Weak;
}

// ---------------------------------------------------------------------------

void LinExpr::canonicalize() {
  std::sort(terms.begin(), terms.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, double>> out;
  out.reserve(terms.size());
  for (const auto& [idx, c] : terms) {
    if (!out.empty() && out.back().first == idx)
      out.back().second += c;
    else
      out.emplace_back(idx, c);
  }
  std::erase_if(out, [](const auto& t) { return t.second == 0.0; });
  terms = std::move(out);
}

double LinExpr::eval(const Vec& v) const {
  double s = constant;
  for (const auto& [idx, c] : terms) s += c * v[idx];
  return s;
}

void QuadExpr::canonicalize() {
  for (auto& t : quad)
    if (t.i > t.j) std::swap(t.i, t.j);
  std::sort(quad.begin(), quad.end(), [](const QuadTerm& a, const QuadTerm& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  std::vector<QuadTerm> out;
  out.reserve(quad.size());
  for (const auto& t : quad) {
    if (!out.empty() && out.back().i == t.i && out.back().j == t.j)
      out.back().coef += t.coef;
    else
      out.push_back(t);
  }
  std::erase_if(out, [](const QuadTerm& t) { return t.coef == 0.0; });
  quad = std::move(out);
  lin.canonicalize();
}

double QuadExpr::eval(const Vec& v) const {
  double s = lin.eval(v);
  for (const auto& t : quad) s += t.coef * v[t.i] * v[t.j];
  return s;
}

const QuadExpr* SingleLevelProgram::row_expr_quad(const RowRef& r) const {
  if (r.table != RowRef::Table::Quad) return nullptr;
  return &quadratic[r.index].lhs;
}

double SingleLevelProgram::row_value(const RowRef& r, const Vec& v) const {
  if (r.table == RowRef::Table::Affine)
    return affine[r.index].lhs.eval(v) - affine[r.index].rhs;
  return quadratic[r.index].lhs.eval(v) - quadratic[r.index].rhs;
}

void SingleLevelProgram::validate() const {
  const int nv = n();
  auto check_lin = [&](const LinExpr& e, const std::string& where) {
    for (const auto& [idx, c] : e.terms) {
      (void)c;
      if (idx < 0 || idx >= nv)
        throw ValidationError("variable reference out of range in " + where);
    }
  };
  check_lin(objective, "objective");
  for (const auto& c : affine) check_lin(c.lhs, "affine row " + c.name);
  auto check_quad = [&](const QuadCon& c) {
    check_lin(c.lhs.lin, "quadratic row " + c.name);
    for (const auto& t : c.lhs.quad)
      if (t.i < 0 || t.i >= nv || t.j < 0 || t.j >= nv)
        throw ValidationError("variable reference out of range in " + c.name);
  };
  for (const auto& c : quadratic) check_quad(c);
  for (const auto& c : cuts) check_quad(c);
  if (pairs.size() != sos1.size())
    throw ValidationError("complementarity pairs and SOS1 groups must mirror");
  for (size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    if (p.var < 0 || p.var >= nv)
      throw ValidationError("pair variable out of range: " + p.name);
    if (vars[p.var].lb < 0.0)
      throw ValidationError("pair variable must be sign-constrained: " +
                            p.name);
    const bool affine_side = p.row.table == RowRef::Table::Affine;
    const int nrows =
        affine_side ? static_cast<int>(affine.size())
                    : static_cast<int>(quadratic.size());
    if (p.row.index < 0 || p.row.index >= nrows)
      throw ValidationError("pair row out of range: " + p.name);
    const Sense s =
        affine_side ? affine[p.row.index].sense : quadratic[p.row.index].sense;
    const double rhs =
        affine_side ? affine[p.row.index].rhs : quadratic[p.row.index].rhs;
    if (s != Sense::Ge || rhs != 0.0)
      throw ValidationError("pair rows must be normalized to `expr >= 0`: " +
                            p.name);
    if (!(sos1[k].var == p.var && sos1[k].row == p.row))
      throw ValidationError("SOS1 group does not mirror its pair: " + p.name);
  }
}

void SingleLevelProgram::rebuild_bilinear_registry() {
  std::set<std::pair<int, int>> seen;
  std::vector<BilinearTerm> out;
  auto scan = [&](const std::vector<QuadCon>& rows) {
    for (const auto& c : rows) {
      for (const auto& t : c.lhs.quad) {
        auto key = std::minmax(t.i, t.j);
        if (seen.insert({key.first, key.second}).second)
          out.push_back({key.first, key.second});
      }
    }
  };
  scan(quadratic);
  scan(cuts);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.a != b.a ? a.a < b.a : a.b < b.b;
  });
  bilinear = std::move(out);
}

// ---------------------------------------------------------------------------

SizeReport count_sizes(const SingleLevelProgram& p) {
  SizeReport r;
  r.variables = static_cast<long>(p.vars.size());
  r.affine_constraints = static_cast<long>(p.affine.size());
  r.quadratic_constraints = static_cast<long>(p.quadratic.size());
  r.complementarity_pairs = static_cast<long>(p.pairs.size());
  for (const auto& pr : p.pairs) {
    if (pr.row.table == RowRef::Table::Affine)
      ++r.affine_sos1;
    else
      ++r.quadratic_sos1;
  }
  for (const auto& c : p.affine) {
    if (c.sense == Sense::Eq) {
      ++r.equality_constraints;
      if (c.origin == RowOrigin::SolutionSet) ++r.solution_set_equalities;
    }
  }
  for (const auto& c : p.quadratic) {
    if (c.sense == Sense::Eq) {
      ++r.equality_constraints;
      if (c.origin == RowOrigin::SolutionSet) ++r.solution_set_equalities;
    }
  }
  return r;
}

SizeFormulas predicted_sizes(int n2, int m2, int n3, int m3) {
  SizeFormulas f;
  f.strong_duality_complementarities =
      static_cast<long>(n2) + m2 + 2L * (n3 + m3) + 1;
  f.lcp_complementarities = static_cast<long>(n2) + m2 + 4L * (n3 + m3);
  f.lcp_equalities = static_cast<long>(n3) + m3 + 1;
  return f;
}

}  // namespace trilevel
