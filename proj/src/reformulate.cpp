#include "trilevel/reformulate.hpp"

#include <algorithm>
#include <limits>

namespace trilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string def_name(const std::vector<std::string>& names, int i,
                     const char* prefix) {
  if (i < static_cast<int>(names.size()) && !names[i].empty()) return names[i];
  return std::string(prefix) + "[" + std::to_string(i) + "]";
}

class ProgramBuilder {
 public:
  SingleLevelProgram p;

  int add_var(std::string name, double lb, double ub, VarRole role) {
    p.vars.push_back({std::move(name), lb, ub, role});
    return static_cast<int>(p.vars.size()) - 1;
  }

  /// Routes by content: expressions without surviving quadratic terms land
  /// in the affine table. This keeps the size report reproducible.
  RowRef add_row(QuadExpr expr, Sense sense, double rhs, RowOrigin origin,
                 std::string name, int group = -1) {
    expr.canonicalize();
    if (expr.quad.empty()) {
      p.affine.push_back(
          {std::move(expr.lin), sense, rhs, origin, std::move(name), group});
      return {RowRef::Table::Affine, static_cast<int>(p.affine.size()) - 1};
    }
    p.quadratic.push_back(
        {std::move(expr), sense, rhs, origin, std::move(name), group});
    return {RowRef::Table::Quad, static_cast<int>(p.quadratic.size()) - 1};
  }

  void add_pair(int var, RowRef row, std::string name, int group = -1) {
    p.pairs.push_back({var, row, std::move(name), group});
    p.sos1.push_back({var, row});
  }

  SingleLevelProgram finish() {
    p.objective.canonicalize();
    for (auto& g : p.groups) g.gap_expr.canonicalize();
    p.rebuild_bilinear_registry();
    p.validate();
    return std::move(p);
  }
};

struct CompiledLcp {
  LcpBlock lcp;
  std::vector<std::string> names;  // component names
  std::vector<int> group;          // component -> aggregation group
  Vec e1;                          // top objective on the middle copy
  Mat C1;                          // top rows on the middle copy
  AffineMap e2;                    // middle objective on the copy
  Mat C2;                          // middle rows on the copy
  std::vector<XCoupledEntry> C2x;  // col now indexes the stacked copy
  Vec z_ub;                        // informational bounds on the z parts
};

CompiledLcp compile(const TrilevelModel& model) {
  CompiledLcp out;
  if (!model.has_qp_bottom()) {
    out.lcp = *model.lcp;
    const int nl = static_cast<int>(out.lcp.n());
    out.names.resize(nl);
    for (int c = 0; c < nl; ++c) out.names[c] = "zt[" + std::to_string(c) + "]";
    out.group.assign(nl, -1);
    out.e1 = model.e1_lcp;
    out.C1 = model.C1_lcp;
    out.e2 = AffineMap(model.e2_lcp);
    out.C2 = model.C2_lcp;
    out.z_ub = Vec::Constant(nl, kInf);
    return out;
  }

  int nl = 0;
  for (const auto& b : model.blocks) nl += static_cast<int>(b.n() + b.m());
  const int m1 = static_cast<int>(model.a1.size());
  const int m2 = model.m2();

  out.lcp.q = Vec::Zero(nl);
  out.lcp.n_x = Mat::Zero(nl, model.n_x);
  out.lcp.m = Mat::Zero(nl, nl);
  out.names.resize(nl);
  out.group.assign(nl, -1);
  out.e1 = Vec::Zero(nl);
  out.C1 = Mat::Zero(m1, nl);
  out.e2.constant = Vec::Zero(nl);
  out.e2.coeff = Mat::Zero(nl, model.n_x);
  out.C2 = Mat::Zero(m2, nl);
  out.z_ub = Vec::Constant(nl, kInf);

  int off = 0;
  for (size_t bi = 0; bi < model.blocks.size(); ++bi) {
    const auto& b = model.blocks[bi];
    const int n = static_cast<int>(b.n());
    const int m = static_cast<int>(b.m());
    out.lcp.m.block(off, off, n, n) = b.quad;
    out.lcp.m.block(off, off + n, n, m) = -b.con.transpose();
    out.lcp.m.block(off + n, off, m, n) = b.con;
    out.lcp.q.segment(off, n) = b.cost.constant;
    if (b.cost.has_x()) out.lcp.n_x.middleRows(off, n) = b.cost.coeff;
    out.lcp.q.segment(off + n, m) = -b.rhs.constant;
    if (b.rhs.has_x()) out.lcp.n_x.middleRows(off + n, m) = -b.rhs.coeff;
    for (int c = 0; c < n; ++c) {
      out.names[off + c] = def_name(b.z_names, c,
                                    ("z" + std::to_string(bi)).c_str());
      out.group[off + c] = b.group;
    }
    for (int r = 0; r < m; ++r) {
      out.names[off + n + r] =
          "lam_" + def_name(b.z_names, r, ("b" + std::to_string(bi)).c_str());
      out.group[off + n + r] = b.group;
    }
    out.e1.segment(off, n) = model.e1[bi];
    out.C1.middleCols(off, n) = model.C1[bi];
    out.e2.constant.segment(off, n) = model.e2[bi].constant;
    if (model.e2[bi].has_x())
      out.e2.coeff.middleRows(off, n) = model.e2[bi].coeff;
    out.C2.middleCols(off, n) = model.C2[bi];
    for (const auto& e : model.C2x)
      if (e.block == static_cast<int>(bi))
        out.C2x.push_back({e.row, 0, off + e.col, e.xvar, e.coef});

    // Capacity-style rows -z >= -u yield finite informational bounds.
    for (int r = 0; r < m; ++r) {
      int nz = -1;
      for (int c = 0; c < n; ++c)
        if (b.con(r, c) != 0.0) {
          if (nz >= 0) { nz = -2; break; }
          nz = c;
        }
      if (nz >= 0 && b.con(r, nz) < 0.0 && !b.rhs.has_x()) {
        const double ub = b.rhs.constant[r] / b.con(r, nz);
        out.z_ub[off + nz] = std::min(out.z_ub[off + nz], ub);
      }
    }
    off += n + m;
  }
  return out;
}

}  // namespace

LcpBlock compile_bottom_lcp(const TrilevelModel& model) {
  model.validate();
  return compile(model).lcp;
}

DualQp dualize_qp(const QpBlock& block) {
  if (!is_psd(block.quad))
    throw ValidationError("cannot dualize a block with non-PSD quadratic form");
  DualQp d;
  d.quad = block.quad;
  d.con = block.con;
  d.obj = block.rhs;
  d.rhs = block.cost;
  d.has_z = (block.quad.array() != 0.0).any();
  return d;
}

// ---------------------------------------------------------------------------

SingleLevelProgram strong_duality_reformulate(const TrilevelModel& model,
                                              const ReformulateOptions& opts) {
  model.validate();
  if (!model.has_qp_bottom())
    throw ValidationError(
        "strong-duality route requires a block-form bottom level");
  if (classify_structure(model) != Structure::Weak)
    throw StructureError(
        "strong-duality reformulation requires weak structure");

  const int n_blocks = static_cast<int>(model.blocks.size());
  const int m2 = model.m2();
  const int m1 = static_cast<int>(model.a1.size());

  ProgramBuilder b;
  b.p.sense = ObjSense::Min;

  // variable layout: x, y, per-block z, p, zc, pc, then gamma and eps
  std::vector<int> vx(model.n_x), vy(model.n_y);
  for (int i = 0; i < model.n_x; ++i) {
    const double lb = model.x_lb.size() ? model.x_lb[i] : -kInf;
    const double ub = model.x_ub.size() ? model.x_ub[i] : kInf;
    vx[i] = b.add_var(def_name(model.x_names, i, "x"), lb, ub, VarRole::Primal);
  }
  for (int j = 0; j < model.n_y; ++j) {
    const bool fr = !model.y_free.empty() && model.y_free[j];
    vy[j] = b.add_var(def_name(model.y_names, j, "y"), fr ? -kInf : 0.0, kInf,
                      VarRole::Primal);
  }
  std::vector<std::vector<int>> vz(n_blocks), vp(n_blocks), vzc(n_blocks),
      vpc(n_blocks);
  for (int bi = 0; bi < n_blocks; ++bi) {
    const auto& blk = model.blocks[bi];
    vz[bi].resize(blk.n());
    for (int c = 0; c < blk.n(); ++c)
      vz[bi][c] = b.add_var(def_name(blk.z_names, c,
                                     ("z" + std::to_string(bi)).c_str()),
                            0.0, kInf, VarRole::Primal);
    vp[bi].resize(blk.m());
    for (int r = 0; r < blk.m(); ++r)
      vp[bi][r] = b.add_var(
          "lam_" + def_name(blk.z_names, r, ("b" + std::to_string(bi)).c_str()),
          0.0, kInf, VarRole::Dual);
  }
  for (int bi = 0; bi < n_blocks; ++bi) {
    const auto& blk = model.blocks[bi];
    vzc[bi].resize(blk.n());
    for (int c = 0; c < blk.n(); ++c)
      vzc[bi][c] = b.add_var(
          "zc_" + def_name(blk.z_names, c, ("b" + std::to_string(bi)).c_str()),
          0.0, kInf, VarRole::Dual);
    vpc[bi].resize(blk.m());
    for (int r = 0; r < blk.m(); ++r)
      vpc[bi][r] = b.add_var(
          "lamc_" + def_name(blk.z_names, r,
                             ("b" + std::to_string(bi)).c_str()),
          0.0, kInf, VarRole::Dual);
  }
  std::vector<int> vg(m2);
  for (int r = 0; r < m2; ++r)
    vg[r] = b.add_var("gam_" + def_name(model.middle_row_names, r, "mid"), 0.0,
                      kInf, VarRole::Dual);

  // aggregation units for the duality-gap rows
  int n_units = 1;
  std::vector<int> unit_of_block(n_blocks, 0);
  if (opts.aggregate == GapAggregation::Group) {
    n_units = model.n_groups;
    for (int bi = 0; bi < n_blocks; ++bi)
      unit_of_block[bi] = model.blocks[bi].group;
  } else if (opts.aggregate == GapAggregation::Block) {
    n_units = n_blocks;
    for (int bi = 0; bi < n_blocks; ++bi) unit_of_block[bi] = bi;
  }
  if (n_blocks == 0) n_units = 0;  // pure bilevel: no duality-gap machinery
  std::vector<int> veps(n_units);
  for (int u = 0; u < n_units; ++u)
    veps[u] = b.add_var(n_units == 1 ? "eps" : "eps[" + std::to_string(u) + "]",
                        0.0, kInf, VarRole::Dual);

  for (int i = 0; i < model.n_x; ++i) {
    const auto& v = b.p.vars[vx[i]];
    if (std::isfinite(v.lb) && std::isfinite(v.ub))
      b.p.policy_vars.push_back(vx[i]);
  }
  for (int g = 0; g < model.n_groups; ++g)
    b.p.groups.push_back({"g" + std::to_string(g), -1, {}});

  // informational bounds on bottom variables
  const CompiledLcp aux = compile(model);
  {
    int off = 0;
    for (int bi = 0; bi < n_blocks; ++bi) {
      for (int c = 0; c < model.blocks[bi].n(); ++c)
        b.p.vars[vz[bi][c]].ub = aux.z_ub[off + c];
      off += static_cast<int>(model.blocks[bi].n() + model.blocks[bi].m());
    }
  }

  // top-level rows
  for (int r = 0; r < m1; ++r) {
    QuadExpr e;
    for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], model.A1(r, i));
    for (int j = 0; j < model.n_y; ++j) e.lin.add(vy[j], model.B1(r, j));
    for (int bi = 0; bi < n_blocks; ++bi)
      for (int c = 0; c < model.blocks[bi].n(); ++c)
        e.lin.add(vz[bi][c], model.C1[bi](r, c));
    b.add_row(std::move(e), model.top_sense[r], model.a1[r], RowOrigin::Top,
              def_name(model.top_row_names, r, "top"));
  }

  // middle-level stationarity in y
  for (int j = 0; j < model.n_y; ++j) {
    QuadExpr e;
    e.lin.constant = model.d2.constant[j];
    if (model.d2.has_x())
      for (int i = 0; i < model.n_x; ++i)
        e.lin.add(vx[i], model.d2.coeff(j, i));
    for (int r = 0; r < m2; ++r) e.lin.add(vg[r], -model.B2(r, j));
    const std::string yn = def_name(model.y_names, j, "y");
    if (!model.y_free.empty() && model.y_free[j]) {
      b.add_row(std::move(e), Sense::Eq, 0.0, RowOrigin::MiddleStat,
                "stat_" + yn);
    } else {
      const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                   RowOrigin::MiddleStat, "stat_" + yn);
      b.add_pair(vy[j], row, "cs_" + yn);
    }
  }

  // middle-level feasibility against gamma
  for (int r = 0; r < m2; ++r) {
    QuadExpr e;
    e.lin.constant = -model.a2[r];
    for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], model.A2(r, i));
    for (int j = 0; j < model.n_y; ++j) e.lin.add(vy[j], model.B2(r, j));
    for (int bi = 0; bi < n_blocks; ++bi)
      for (int c = 0; c < model.blocks[bi].n(); ++c)
        e.lin.add(vz[bi][c], model.C2[bi](r, c));
    for (const auto& xc : model.C2x)
      if (xc.row == r) e.add_quad(vx[xc.xvar], vz[xc.block][xc.col], xc.coef);
    const std::string rn = def_name(model.middle_row_names, r, "mid");
    const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                 RowOrigin::MiddleFeas, "feas_" + rn);
    b.add_pair(vg[r], row, "cs_" + rn);
  }

  // per-block rows
  for (int bi = 0; bi < n_blocks; ++bi) {
    const auto& blk = model.blocks[bi];
    const int n = static_cast<int>(blk.n());
    const int m = static_cast<int>(blk.m());
    const int eps = veps[unit_of_block[bi]];
    const int grp = blk.group;

    // stationarity of the middle problem in the block variables
    for (int c = 0; c < n; ++c) {
      QuadExpr e;
      e.lin.constant = model.e2[bi].constant[c];
      if (model.e2[bi].has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.lin.add(vx[i], model.e2[bi].coeff(c, i));
      for (int r = 0; r < m2; ++r) e.lin.add(vg[r], -model.C2[bi](r, c));
      for (const auto& xc : model.C2x)
        if (xc.block == bi && xc.col == c)
          e.add_quad(vx[xc.xvar], vg[xc.row], -xc.coef);
      for (int r = 0; r < m; ++r) e.lin.add(vpc[bi][r], -blk.con(r, c));
      for (int cp = 0; cp < n; ++cp) e.lin.add(vzc[bi][cp], -blk.quad(cp, c));
      for (int cp = 0; cp < n; ++cp)
        e.add_quad(eps, vz[bi][cp], blk.quad(c, cp) + blk.quad(cp, c));
      e.lin.add(eps, blk.cost.constant[c]);
      if (blk.cost.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.add_quad(eps, vx[i], blk.cost.coeff(c, i));
      const std::string nm = def_name(blk.z_names, c, "z");
      const RowRef row =
          b.add_row(std::move(e), Sense::Ge, 0.0, RowOrigin::BottomStat,
                    "stat_" + nm, grp);
      b.add_pair(vz[bi][c], row, "cs_" + nm, grp);
    }
    // stationarity in the block multipliers
    for (int r = 0; r < m; ++r) {
      QuadExpr e;
      for (int c = 0; c < n; ++c) e.lin.add(vzc[bi][c], blk.con(r, c));
      e.lin.add(eps, -blk.rhs.constant[r]);
      if (blk.rhs.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.add_quad(eps, vx[i], -blk.rhs.coeff(r, i));
      const std::string nm =
          def_name(blk.z_names, r, ("b" + std::to_string(bi)).c_str());
      const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                   RowOrigin::BottomStat, "stat_lam_" + nm,
                                   grp);
      b.add_pair(vp[bi][r], row, "cs_lam_" + nm, grp);
    }
    // bottom dual feasibility against the dual copy
    for (int c = 0; c < n; ++c) {
      QuadExpr e;
      e.lin.constant = blk.cost.constant[c];
      if (blk.cost.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.lin.add(vx[i], blk.cost.coeff(c, i));
      for (int r = 0; r < m; ++r) e.lin.add(vp[bi][r], -blk.con(r, c));
      for (int cp = 0; cp < n; ++cp) e.lin.add(vz[bi][cp], blk.quad(c, cp));
      const std::string nm = def_name(blk.z_names, c, "z");
      const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                   RowOrigin::BottomDual, "dfeas_" + nm, grp);
      b.add_pair(vzc[bi][c], row, "cs_zc_" + nm, grp);
    }
    // bottom primal feasibility against the primal-row multiplier copy
    for (int r = 0; r < m; ++r) {
      QuadExpr e;
      e.lin.constant = -blk.rhs.constant[r];
      if (blk.rhs.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.lin.add(vx[i], -blk.rhs.coeff(r, i));
      for (int c = 0; c < n; ++c) e.lin.add(vz[bi][c], blk.con(r, c));
      const std::string nm =
          def_name(blk.z_names, r, ("b" + std::to_string(bi)).c_str());
      const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                   RowOrigin::BottomPrimal, "pfeas_" + nm, grp);
      b.add_pair(vpc[bi][r], row, "cs_lamc_" + nm, grp);
    }
  }

  // dual-copy identities
  if (opts.identity_rows) {
    for (int bi = 0; bi < n_blocks; ++bi)
      for (int c = 0; c < model.blocks[bi].n(); ++c) {
        QuadExpr e;
        e.lin.add(vzc[bi][c], 1.0);
        e.lin.add(vz[bi][c], -1.0);
        b.add_row(std::move(e), Sense::Eq, 0.0, RowOrigin::Identity,
                  "ident_" + def_name(model.blocks[bi].z_names, c, "z"),
                  model.blocks[bi].group);
      }
  }

  // duality-gap rows: one per aggregation unit, stored negated so the pair
  // side reads `expr >= 0`; per-group expressions kept as metadata.
  auto gap_terms = [&](int bi, QuadExpr& e, double sgn) {
    const auto& blk = model.blocks[bi];
    const int n = static_cast<int>(blk.n());
    const int m = static_cast<int>(blk.m());
    for (int c = 0; c < n; ++c)
      for (int cp = 0; cp < n; ++cp)
        e.add_quad(vz[bi][c], vz[bi][cp], sgn * blk.quad(c, cp));
    for (int c = 0; c < n; ++c) {
      e.lin.add(vz[bi][c], sgn * blk.cost.constant[c]);
      if (blk.cost.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.add_quad(vx[i], vz[bi][c], sgn * blk.cost.coeff(c, i));
    }
    for (int r = 0; r < m; ++r) {
      e.lin.add(vp[bi][r], -sgn * blk.rhs.constant[r]);
      if (blk.rhs.has_x())
        for (int i = 0; i < model.n_x; ++i)
          e.add_quad(vx[i], vp[bi][r], -sgn * blk.rhs.coeff(r, i));
    }
  };
  for (int u = 0; u < n_units; ++u) {
    QuadExpr e;
    for (int bi = 0; bi < n_blocks; ++bi)
      if (unit_of_block[bi] == u) gap_terms(bi, e, -1.0);
    const std::string nm =
        n_units == 1 ? "gap" : "gap[" + std::to_string(u) + "]";
    const RowRef row =
        b.add_row(std::move(e), Sense::Ge, 0.0, RowOrigin::DualityGap, nm,
                  opts.aggregate == GapAggregation::Group ? u : -1);
    b.add_pair(veps[u], row, "cs_" + nm,
               opts.aggregate == GapAggregation::Group ? u : -1);
    if (opts.aggregate == GapAggregation::Group)
      b.p.groups[u].gap_row = row.index;
  }
  for (int g = 0; g < model.n_groups; ++g) {
    QuadExpr e;
    for (int bi = 0; bi < n_blocks; ++bi)
      if (model.blocks[bi].group == g) gap_terms(bi, e, 1.0);
    b.p.groups[g].gap_expr = std::move(e);
  }

  // objective
  for (int i = 0; i < model.n_x; ++i) b.p.objective.add(vx[i], model.c1[i]);
  for (int j = 0; j < model.n_y; ++j) b.p.objective.add(vy[j], model.d1[j]);
  for (int bi = 0; bi < n_blocks; ++bi)
    for (int c = 0; c < model.blocks[bi].n(); ++c)
      b.p.objective.add(vz[bi][c], model.e1[bi][c]);

  return b.finish();
}

// ---------------------------------------------------------------------------

SingleLevelProgram lcp_reformulate(const TrilevelModel& model) {
  model.validate();
  if (classify_structure(model) != Structure::Weak)
    throw StructureError("solution-set reformulation requires weak structure");

  const CompiledLcp cl = compile(model);
  const int nl = static_cast<int>(cl.lcp.n());
  const int m1 = static_cast<int>(model.a1.size());
  const int m2 = model.m2();
  const Mat& M = cl.lcp.m;
  const Mat Msym = M + M.transpose();
  const bool has_nx = cl.lcp.n_x.size() > 0;

  ProgramBuilder b;
  b.p.sense = ObjSense::Min;

  std::vector<int> vx(model.n_x), vy(model.n_y), vzt(nl), vza(nl), vbe(nl),
      vde(nl), vg(m2), vet(nl);
  for (int i = 0; i < model.n_x; ++i) {
    const double lb = model.x_lb.size() ? model.x_lb[i] : -kInf;
    const double ub = model.x_ub.size() ? model.x_ub[i] : kInf;
    vx[i] = b.add_var(def_name(model.x_names, i, "x"), lb, ub, VarRole::Primal);
  }
  for (int j = 0; j < model.n_y; ++j) {
    const bool fr = !model.y_free.empty() && model.y_free[j];
    vy[j] = b.add_var(def_name(model.y_names, j, "y"), fr ? -kInf : 0.0, kInf,
                      VarRole::Primal);
  }
  for (int c = 0; c < nl; ++c)
    vzt[c] = b.add_var("mc_" + cl.names[c], 0.0, cl.z_ub[c], VarRole::Primal);
  for (int c = 0; c < nl; ++c)
    vza[c] = b.add_var("sol_" + cl.names[c], 0.0, cl.z_ub[c],
                       VarRole::Auxiliary);
  for (int c = 0; c < nl; ++c)
    vbe[c] = b.add_var("beta_" + cl.names[c], 0.0, kInf, VarRole::Dual);
  for (int c = 0; c < nl; ++c)
    vde[c] = b.add_var("delta_" + cl.names[c], 0.0, kInf, VarRole::Dual);
  for (int r = 0; r < m2; ++r)
    vg[r] = b.add_var("gam_" + def_name(model.middle_row_names, r, "mid"), 0.0,
                      kInf, VarRole::Dual);
  const int vze = b.add_var("zeta", -kInf, kInf, VarRole::Dual);
  for (int c = 0; c < nl; ++c)
    vet[c] = b.add_var("etaeq_" + cl.names[c], -kInf, kInf, VarRole::Dual);

  for (int i = 0; i < model.n_x; ++i) {
    const auto& v = b.p.vars[vx[i]];
    if (std::isfinite(v.lb) && std::isfinite(v.ub))
      b.p.policy_vars.push_back(vx[i]);
  }
  for (int g = 0; g < model.n_groups; ++g)
    b.p.groups.push_back({"g" + std::to_string(g), -1, {}});

  // top-level rows on the middle copy
  for (int r = 0; r < m1; ++r) {
    QuadExpr e;
    for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], model.A1(r, i));
    for (int j = 0; j < model.n_y; ++j) e.lin.add(vy[j], model.B1(r, j));
    for (int c = 0; c < nl; ++c) e.lin.add(vzt[c], cl.C1(r, c));
    b.add_row(std::move(e), model.top_sense[r], model.a1[r], RowOrigin::Top,
              def_name(model.top_row_names, r, "top"));
  }

  // middle stationarity in y (same shape as the strong-duality route)
  for (int j = 0; j < model.n_y; ++j) {
    QuadExpr e;
    e.lin.constant = model.d2.constant[j];
    if (model.d2.has_x())
      for (int i = 0; i < model.n_x; ++i)
        e.lin.add(vx[i], model.d2.coeff(j, i));
    for (int r = 0; r < m2; ++r) e.lin.add(vg[r], -model.B2(r, j));
    const std::string yn = def_name(model.y_names, j, "y");
    if (!model.y_free.empty() && model.y_free[j]) {
      b.add_row(std::move(e), Sense::Eq, 0.0, RowOrigin::MiddleStat,
                "stat_" + yn);
    } else {
      const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                   RowOrigin::MiddleStat, "stat_" + yn);
      b.add_pair(vy[j], row, "cs_" + yn);
    }
  }

  // middle feasibility on the copy
  for (int r = 0; r < m2; ++r) {
    QuadExpr e;
    e.lin.constant = -model.a2[r];
    for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], model.A2(r, i));
    for (int j = 0; j < model.n_y; ++j) e.lin.add(vy[j], model.B2(r, j));
    for (int c = 0; c < nl; ++c) e.lin.add(vzt[c], cl.C2(r, c));
    for (const auto& xc : cl.C2x)
      if (xc.row == r) e.add_quad(vx[xc.xvar], vzt[xc.col], xc.coef);
    const std::string rn = def_name(model.middle_row_names, r, "mid");
    const RowRef row = b.add_row(std::move(e), Sense::Ge, 0.0,
                                 RowOrigin::MiddleFeas, "feas_" + rn);
    b.add_pair(vg[r], row, "cs_" + rn);
  }

  // middle stationarity in the copy
  for (int c = 0; c < nl; ++c) {
    QuadExpr e;
    e.lin.constant = cl.e2.constant[c];
    if (cl.e2.has_x())
      for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], cl.e2.coeff(c, i));
    for (int r = 0; r < m2; ++r) e.lin.add(vg[r], -cl.C2(r, c));
    for (const auto& xc : cl.C2x)
      if (xc.col == c) e.add_quad(vx[xc.xvar], vg[xc.row], -xc.coef);
    for (int cp = 0; cp < nl; ++cp) e.lin.add(vde[cp], -M(cp, c));
    e.lin.add(vze, -cl.lcp.q[c]);
    if (has_nx)
      for (int i = 0; i < model.n_x; ++i)
        e.add_quad(vze, vx[i], -cl.lcp.n_x(c, i));
    for (int cp = 0; cp < nl; ++cp) e.lin.add(vet[cp], -Msym(cp, c));
    const RowRef row =
        b.add_row(std::move(e), Sense::Ge, 0.0, RowOrigin::BottomStat,
                  "stat_mc_" + cl.names[c], cl.group[c]);
    b.add_pair(vzt[c], row, "cs_mc_" + cl.names[c], cl.group[c]);
  }

  auto feas_expr = [&](const std::vector<int>& zvars, int c) {
    QuadExpr e;
    e.lin.constant = cl.lcp.q[c];
    if (has_nx)
      for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], cl.lcp.n_x(c, i));
    for (int cp = 0; cp < nl; ++cp) e.lin.add(zvars[cp], M(c, cp));
    return e;
  };

  // auxiliary solution stationarity and feasibility
  for (int c = 0; c < nl; ++c) {
    QuadExpr e;
    e.lin.constant = cl.lcp.q[c];
    if (has_nx)
      for (int i = 0; i < model.n_x; ++i) e.lin.add(vx[i], cl.lcp.n_x(c, i));
    for (int cp = 0; cp < nl; ++cp) e.lin.add(vza[cp], Msym(c, cp));
    for (int cp = 0; cp < nl; ++cp) e.lin.add(vbe[cp], -M(cp, c));
    const RowRef row =
        b.add_row(std::move(e), Sense::Ge, 0.0, RowOrigin::BottomStat,
                  "stat_sol_" + cl.names[c], cl.group[c]);
    b.add_pair(vza[c], row, "cs_sol_" + cl.names[c], cl.group[c]);
  }
  for (int c = 0; c < nl; ++c) {
    const RowRef row =
        b.add_row(feas_expr(vza, c), Sense::Ge, 0.0, RowOrigin::BottomPrimal,
                  "feas_sol_" + cl.names[c], cl.group[c]);
    b.add_pair(vbe[c], row, "cs_beta_" + cl.names[c], cl.group[c]);
  }
  // feasibility of the middle copy
  for (int c = 0; c < nl; ++c) {
    const RowRef row =
        b.add_row(feas_expr(vzt, c), Sense::Ge, 0.0, RowOrigin::BottomPrimal,
                  "feas_mc_" + cl.names[c], cl.group[c]);
    b.add_pair(vde[c], row, "cs_delta_" + cl.names[c], cl.group[c]);
  }

  // solution-set equalities: the full symmetric block, then the scalar row
  for (int c = 0; c < nl; ++c) {
    QuadExpr e;
    for (int cp = 0; cp < nl; ++cp) {
      e.lin.add(vzt[cp], Msym(c, cp));
      e.lin.add(vza[cp], -Msym(c, cp));
    }
    b.add_row(std::move(e), Sense::Eq, 0.0, RowOrigin::SolutionSet,
              "set_" + cl.names[c], cl.group[c]);
  }
  {
    QuadExpr e;
    for (int c = 0; c < nl; ++c) {
      e.lin.add(vzt[c], cl.lcp.q[c]);
      e.lin.add(vza[c], -cl.lcp.q[c]);
      if (has_nx)
        for (int i = 0; i < model.n_x; ++i) {
          e.add_quad(vx[i], vzt[c], cl.lcp.n_x(c, i));
          e.add_quad(vx[i], vza[c], -cl.lcp.n_x(c, i));
        }
    }
    b.add_row(std::move(e), Sense::Eq, 0.0, RowOrigin::SolutionSet, "set_q");
  }

  // objective
  for (int i = 0; i < model.n_x; ++i) b.p.objective.add(vx[i], model.c1[i]);
  for (int j = 0; j < model.n_y; ++j) b.p.objective.add(vy[j], model.d1[j]);
  for (int c = 0; c < nl; ++c) b.p.objective.add(vzt[c], cl.e1[c]);

  return b.finish();
}

}  // namespace trilevel
