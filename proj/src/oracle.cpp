#include "trilevel/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <map>
#include <thread>

#include "trilevel/kernel.hpp"

namespace trilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DayData {
  ArbitrageReduction red;
  Mat b;          // Cournot interaction
  Vec zmax;       // capacities for the day
  Vec alpha;
  double weight;  // P_d
};

struct DaySolve {
  bool feasible = false;
  std::string note;
  DayEquilibrium eq;
};

/// One convex solve of the fee-parameterized day problem. Variables are
/// [z (nb), lam (nb), y (K)]; rows: line limits, renewable shares, dual
/// feasibility, market clearing. The producer duality gap enters the
/// objective as a penalty; zero gap certifies the equilibrium.
struct DayProblem {
  const PowerMarketInstance& inst;
  const DayData& day;
  int d;
  double rho;
  Vec gamma;  // effective costs at the policy tax

  int nb() const { return inst.I() * inst.J() * inst.K(); }

  Vec cost_vector(const Vec& w) const {
    const int K = inst.K();
    Vec e(nb());
    const double alpha_h = day.red.h.dot(day.alpha - w);
    for (int i = 0; i < inst.I(); ++i)
      for (int j = 0; j < inst.J(); ++j)
        for (int k = 0; k < K; ++k) {
          const int c = inst.ijk(i, j, k);
          e[c] = gamma[c] - w[k] - alpha_h;
        }
    return e;
  }

  struct Built {
    KernelProblem kp;
    int z0 = 0, l0 = 0, y0 = 0;
    int row_lines0 = 0, row_share0 = 0, row_dual0 = 0, row_clear0 = 0;
  };

  /// stage 0: operator profit + gap penalty; stage 1: regulator value with
  /// the stage-0 objective pinned by `cap`
  Built build(const Vec& w, double sigma, int stage, double cap,
              double prod_weight) const {
    const int K = inst.K(), A = inst.A();
    const int n = nb();
    const Vec e = cost_vector(w);
    KernelBuilder kb;
    Built bt;
    bt.z0 = 0;
    for (int c = 0; c < n; ++c) kb.add_var(0.0, day.zmax[c]);
    bt.l0 = n;
    for (int c = 0; c < n; ++c) kb.add_var(0.0, kInf);
    bt.y0 = 2 * n;
    for (int k = 0; k < K; ++k) kb.add_var(-kInf, kInf);

    auto gap_terms_obj = [&](double scale) {
      for (int c = 0; c < n; ++c)
        for (int cp = c; cp < n; ++cp)
          kb.obj_quad(c, cp,
                      scale * (c == cp ? day.b(c, c) : 2.0 * day.b(c, cp)));
      for (int c = 0; c < n; ++c) {
        kb.obj_lin(bt.z0 + c, scale * e[c]);
        kb.obj_lin(bt.l0 + c, scale * day.zmax[c]);
      }
    };
    if (stage == 0) {
      for (int k = 0; k < K; ++k) kb.obj_lin(bt.y0 + k, -w[k]);
      gap_terms_obj(sigma);
    } else {
      // maximize the day's regulator share
      for (int c = 0; c < n; ++c)
        kb.obj_lin(bt.z0 + c,
                   -day.weight *
                       (prod_weight - (1.0 - prod_weight) * inst.eta[c]));
      // pin the stage-0 objective
      std::vector<std::tuple<int, int, double>> q;
      for (int c = 0; c < n; ++c)
        for (int cp = c; cp < n; ++cp)
          q.emplace_back(c, cp,
                         sigma * (c == cp ? day.b(c, c) : 2.0 * day.b(c, cp)));
      std::vector<std::pair<int, double>> l;
      for (int k = 0; k < K; ++k) l.emplace_back(bt.y0 + k, -w[k]);
      for (int c = 0; c < n; ++c) {
        l.emplace_back(bt.z0 + c, sigma * e[c]);
        l.emplace_back(bt.l0 + c, sigma * day.zmax[c]);
      }
      kb.add_qrow(q, l, cap);
    }

    bt.row_lines0 = 0;
    for (int a = 0; a < A; ++a) {
      std::vector<std::pair<int, double>> lo, hi;
      for (int k = 0; k < K; ++k) {
        if (inst.ptdf(k, a) == 0.0) continue;
        lo.emplace_back(bt.y0 + k, inst.ptdf(k, a));
        hi.emplace_back(bt.y0 + k, -inst.ptdf(k, a));
      }
      kb.add_affine(lo, Sense::Ge, -inst.lines[a].t_minus);
      kb.add_affine(hi, Sense::Ge, -inst.lines[a].t_plus);
    }
    bt.row_share0 = 2 * A;
    for (int k = 0; k < K; ++k) {
      std::vector<std::pair<int, double>> terms;
      for (int i = 0; i < inst.I(); ++i)
        for (int j = 0; j < inst.J(); ++j) {
          const double coef =
              (inst.sources[j].renewable ? 1.0 : 0.0) - rho;
          if (coef != 0.0)
            terms.emplace_back(bt.z0 + inst.ijk(i, j, k), coef);
        }
      if (terms.empty()) terms.emplace_back(bt.z0, 0.0);
      kb.add_affine(terms, Sense::Ge, 0.0);
    }
    bt.row_dual0 = bt.row_share0 + K;
    for (int c = 0; c < n; ++c) {
      std::vector<std::pair<int, double>> terms;
      for (int cp = 0; cp < n; ++cp)
        if (day.b(c, cp) != 0.0) terms.emplace_back(bt.z0 + cp, day.b(c, cp));
      terms.emplace_back(bt.l0 + c, 1.0);
      kb.add_affine(terms, Sense::Ge, -e[c]);
    }
    bt.row_clear0 = bt.row_dual0 + n;
    const Vec lw = day.red.L * (day.alpha - w);
    for (int k = 0; k < K; ++k) {
      std::vector<std::pair<int, double>> terms;
      for (int i = 0; i < inst.I(); ++i)
        for (int j = 0; j < inst.J(); ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double coef = day.red.h[k] - (kp == k ? 1.0 : 0.0);
            if (coef != 0.0)
              terms.emplace_back(bt.z0 + inst.ijk(i, j, kp), coef);
          }
      terms.emplace_back(bt.y0 + k, -1.0);
      kb.add_affine(terms, Sense::Eq, -lw[k]);
    }
    bt.kp = kb.build();
    return bt;
  }
};

DaySolve solve_day(const PowerMarketInstance& inst, const DayData& day, int d,
                   double prod_weight, double tax, double rho,
                   const OracleOptions& opt) {
  DaySolve out;
  DayProblem prob{inst, day, d, rho, effective_cost(inst, tax)};
  const int K = inst.K(), A = inst.A(), n = prob.nb();

  Vec w = Vec::Zero(K);
  double sigma = opt.penalty;
  double damping = opt.fee_damping;
  KernelResult kr;
  DayProblem::Built bt;
  bool converged = false;
  int iters = 0;
  double resid = kInf;
  for (int it = 0; it < opt.max_fee_iters; ++it) {
    iters = it + 1;
    bt = prob.build(w, sigma, 0, 0.0, prod_weight);
    KernelOptions ko;
    ko.tol = 1e-10;
    kr = solve_kernel(bt.kp, ko);
    if (kr.status == KernelStatus::Infeasible) {
      out.note = "infeasible at day " + std::to_string(d);
      return out;
    }
    if (kr.status != KernelStatus::Optimal) {
      out.note = std::string("kernel ") + kernel_status_str(kr.status) +
                 " at day " + std::to_string(d);
      return out;
    }
    // duality-gap penalty must be exact; escalate until the gap closes
    const Vec z = kr.v.segment(bt.z0, n);
    const Vec lam = kr.v.segment(bt.l0, n);
    const Vec e = prob.cost_vector(w);
    const double gap =
        z.dot(day.b * z) + e.dot(z) + day.zmax.dot(lam);
    const double gscale = 1.0 + std::abs(e.cwiseAbs().sum());
    if (gap > opt.gap_tol * gscale) {
      if (sigma < 1e8) {
        sigma *= 10.0;
        continue;
      }
      out.note = "duality-gap penalty saturated at day " + std::to_string(d);
      return out;
    }
    // fee update from the line-limit shadow prices
    Vec w_new = Vec::Zero(K);
    for (int a = 0; a < A; ++a) {
      const double phim = -kr.dual_affine[bt.row_lines0 + 2 * a];
      const double phip = -kr.dual_affine[bt.row_lines0 + 2 * a + 1];
      for (int k = 0; k < K; ++k)
        w_new[k] += inst.ptdf(k, a) * (phip - phim);
    }
    resid = (w_new - w).cwiseAbs().maxCoeff();
    if (resid <= opt.fee_tol * (1.0 + w.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
    if (it == opt.max_fee_iters / 2) damping *= 0.5;
    w += damping * (w_new - w);
  }
  if (!converged && A > 0) {
    out.note = "fee iteration did not converge at day " + std::to_string(d) +
               " (residual " + std::to_string(resid) + ")";
    return out;
  }

  // lexicographic pass: regulator value among operator-optimal points; only
  // adopted on a material improvement so cap slack cannot inject noise
  if (opt.lexicographic) {
    const double cap = kr.obj + 1e-9 * (1.0 + std::abs(kr.obj));
    const auto bt2 = prob.build(w, sigma, 1, cap, prod_weight);
    KernelOptions ko;
    ko.tol = 1e-10;
    const KernelResult kr2 = solve_kernel(bt2.kp, ko);
    if (kr2.status == KernelStatus::Optimal) {
      const Vec z1 = kr.v.segment(bt.z0, n);
      const Vec z2 = kr2.v.segment(bt2.z0, n);
      double day_obj1 = 0.0, day_obj2 = 0.0;
      for (int c = 0; c < n; ++c) {
        const double coef =
            prod_weight - (1.0 - prod_weight) * inst.eta[c];
        day_obj1 += coef * z1[c];
        day_obj2 += coef * z2[c];
      }
      const Vec lam2 = kr2.v.segment(bt2.l0, n);
      const Vec e = prob.cost_vector(w);
      const double gap = z2.dot(day.b * z2) + e.dot(z2) + day.zmax.dot(lam2);
      if (day_obj2 > day_obj1 + 1e-4 * (1.0 + std::abs(day_obj1)) &&
          gap <= 10 * opt.gap_tol * (1.0 + std::abs(e.cwiseAbs().sum()))) {
        bt = bt2;
        kr = kr2;
      }
    }
  }

  out.feasible = true;
  auto& eq = out.eq;
  eq.z = kr.v.segment(bt.z0, n);
  eq.lam = kr.v.segment(bt.l0, n);
  eq.y = kr.v.segment(bt.y0, K);
  eq.w = w;

  // active-set snap: when no network or share row interferes, the producer
  // system on the detected active sets is linear and can be solved exactly,
  // removing the flat-objective noise of the interior-point path
  {
    const double act = 1e-5;
    bool rows_slack = true;
    for (int a = 0; a < A; ++a) {
      const double flow = inst.ptdf.col(a).dot(eq.y);
      if (inst.lines[a].t_plus - flow < act || flow + inst.lines[a].t_minus < act)
        rows_slack = false;
    }
    const Vec e = prob.cost_vector(w);
    if (rows_slack) {
      std::vector<int> free_set, cap_set;
      for (int c = 0; c < n; ++c) {
        if (day.zmax[c] - eq.z[c] < act && day.zmax[c] > act)
          cap_set.push_back(c);
        else if (eq.z[c] > act)
          free_set.push_back(c);
      }
      Vec z = Vec::Zero(n);
      for (int c : cap_set) z[c] = day.zmax[c];
      bool ok = true;
      if (!free_set.empty()) {
        const int nf = static_cast<int>(free_set.size());
        Mat bff(nf, nf);
        Vec rhs(nf);
        for (int r = 0; r < nf; ++r) {
          rhs[r] = -e[free_set[r]];
          for (int c = 0; c < nf; ++c)
            bff(r, c) = day.b(free_set[r], free_set[c]);
          for (int c : cap_set) rhs[r] -= day.b(free_set[r], c) * z[c];
        }
        Eigen::FullPivLU<Mat> lu(bff);
        if (lu.isInvertible()) {
          const Vec zf = lu.solve(rhs);
          for (int r = 0; r < nf; ++r) z[free_set[r]] = zf[r];
        } else {
          ok = false;
        }
      }
      if (ok) {
        Vec lam = Vec::Zero(n);
        const Vec stat = day.b * z + e;
        for (int c : cap_set) lam[c] = std::max(0.0, -stat[c]);
        // sign and feasibility audit before adopting the snapped point
        for (int c = 0; c < n && ok; ++c) {
          if (z[c] < -1e-12 || z[c] > day.zmax[c] + 1e-12) ok = false;
          if (std::abs(stat[c] + lam[c]) > 1e-9 && z[c] > 1e-12) ok = false;
          if (z[c] <= 1e-12 && stat[c] < -1e-9) ok = false;
        }
        Vec z_node = Vec::Zero(K);
        for (int i = 0; i < inst.I() && ok; ++i)
          for (int j = 0; j < inst.J(); ++j)
            for (int k = 0; k < K; ++k) z_node[k] += z[inst.ijk(i, j, k)];
        Vec y_new;
        if (ok) {
          y_new = day.red.arbitrage(z_node, day.alpha, w);
          for (int a = 0; a < A && ok; ++a) {
            const double flow = inst.ptdf.col(a).dot(y_new);
            if (flow > inst.lines[a].t_plus + 1e-9 ||
                -flow > inst.lines[a].t_minus + 1e-9)
              ok = false;
          }
          for (int k = 0; k < K && ok; ++k) {
            double share = 0.0;
            for (int i = 0; i < inst.I(); ++i)
              for (int j = 0; j < inst.J(); ++j) {
                const double coef =
                    (inst.sources[j].renewable ? 1.0 : 0.0) - rho;
                share += coef * z[inst.ijk(i, j, k)];
              }
            if (share < -1e-9) ok = false;
          }
        }
        if (ok) {
          eq.z = z;
          eq.lam = lam;
          eq.y = y_new;
        }
      }
    }
  }
  eq.phi_minus = Vec::Zero(A);
  eq.phi_plus = Vec::Zero(A);
  for (int a = 0; a < A; ++a) {
    eq.phi_minus[a] = std::max(0.0, -kr.dual_affine[bt.row_lines0 + 2 * a]);
    eq.phi_plus[a] = std::max(0.0, -kr.dual_affine[bt.row_lines0 + 2 * a + 1]);
  }
  eq.psi = Vec::Zero(K);
  for (int k = 0; k < K; ++k)
    eq.psi[k] = std::max(0.0, -kr.dual_affine[bt.row_share0 + k]);
  const Vec e = prob.cost_vector(w);
  eq.gap = eq.z.dot(day.b * eq.z) + e.dot(eq.z) + day.zmax.dot(eq.lam);
  eq.fee_residual = A > 0 ? resid : 0.0;
  eq.fee_iterations = iters;
  return out;
}

}  // namespace

EquilibriumPoint solve_equilibrium(const PowerMarketInstance& inst,
                                   double production_weight, double tax,
                                   double rho, const OracleOptions& opt) {
  inst.validate();
  EquilibriumPoint pt;
  std::vector<DayData> days(inst.D());
  const int n = inst.I() * inst.J() * inst.K();
  for (int d = 0; d < inst.D(); ++d) {
    days[d].red = arbitrage_reduction(inst, d);
    days[d].b = cournot_interaction(inst, d);
    days[d].alpha = inst.alpha.col(d);
    days[d].weight = inst.day_weights[d];
    days[d].zmax = Vec(n);
    for (int i = 0; i < inst.I(); ++i)
      for (int j = 0; j < inst.J(); ++j)
        for (int k = 0; k < inst.K(); ++k)
          days[d].zmax[inst.ijk(i, j, k)] =
              inst.zmax[inst.ijkd(i, j, k, d)];
  }

  pt.days.resize(inst.D());
  for (int d = 0; d < inst.D(); ++d) {
    const DaySolve ds =
        solve_day(inst, days[d], d, production_weight, tax, rho, opt);
    if (!ds.feasible) {
      pt.feasible = false;
      pt.note = ds.note;
      return pt;
    }
    pt.days[d] = ds.eq;
  }
  pt.feasible = true;
  double renew = 0.0;
  for (int d = 0; d < inst.D(); ++d) {
    const auto& z = pt.days[d].z;
    for (int i = 0; i < inst.I(); ++i)
      for (int j = 0; j < inst.J(); ++j)
        for (int k = 0; k < inst.K(); ++k) {
          const int c = inst.ijk(i, j, k);
          const double p = inst.day_weights[d] * z[c];
          pt.production += p;
          pt.emissions += p * inst.eta[c];
          if (inst.sources[j].renewable) renew += p;
          pt.objective +=
              inst.day_weights[d] *
              (production_weight - (1.0 - production_weight) * inst.eta[c]) *
              z[c];
        }
  }
  pt.renewable_share = pt.production > 0.0 ? renew / pt.production : 0.0;
  return pt;
}

OracleResult grid_oracle(const PowerMarketInstance& inst,
                         double production_weight, const OracleOptions& opt) {
  inst.validate();
  OracleResult out;
  const double xmax = opt.x_max >= 0.0 ? opt.x_max : saturation_tax(inst);
  std::vector<double> xs, rhos;
  if (xmax <= 0.0) {
    xs = {0.0};
    out.x_step_used = 0.0;
  } else {
    const int nx = std::max(2, static_cast<int>(std::ceil(xmax / opt.x_step)) + 1);
    out.x_step_used = xmax / (nx - 1);
    for (int i = 0; i < nx; ++i) xs.push_back(i * out.x_step_used);
  }
  if (!opt.sweep_rho) {
    rhos = {opt.rho_fixed};
    out.rho_step_used = 0.0;
  } else if (opt.rho_max <= 0.0) {
    rhos = {0.0};
    out.rho_step_used = 0.0;
  } else {
    const int nr =
        std::max(2, static_cast<int>(std::ceil(opt.rho_max / opt.rho_step)) + 1);
    out.rho_step_used = opt.rho_max / (nr - 1);
    for (int i = 0; i < nr; ++i) rhos.push_back(i * out.rho_step_used);
  }

  struct Cell {
    SweepRow row;
    EquilibriumPoint pt;
  };
  std::vector<Cell> cells(xs.size() * rhos.size());
  const int threads = std::max(1, opt.threads);
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= cells.size()) return;
      const double tax = xs[idx / rhos.size()];
      const double rho = rhos[idx % rhos.size()];
      Cell& c = cells[idx];
      c.pt = solve_equilibrium(inst, production_weight, tax, rho, opt);
      c.row.tax = tax;
      c.row.rho = rho;
      c.row.feasible = c.pt.feasible;
      c.row.note = c.pt.note;
      c.row.objective = c.pt.objective;
      c.row.emissions = c.pt.emissions;
      c.row.production = c.pt.production;
      c.row.renewable_share = c.pt.renewable_share;
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  out.sweep.reserve(cells.size());
  double best = -kInf;
  size_t best_idx = cells.size();
  for (size_t i = 0; i < cells.size(); ++i) {
    out.sweep.push_back(cells[i].row);
    if (cells[i].row.feasible && cells[i].row.objective > best) {
      best = cells[i].row.objective;
      best_idx = i;
    }
  }
  if (best_idx < cells.size()) {
    out.found = true;
    out.best_tax = cells[best_idx].row.tax;
    out.best_rho = cells[best_idx].row.rho;
    out.objective = best;
    out.best = cells[best_idx].pt;
  }
  return out;
}

Vec embed_equilibrium(const PowerMarketInstance& inst,
                      const SingleLevelProgram& program, double tax,
                      double rho, const EquilibriumPoint& point) {
  std::map<std::string, int> index;
  for (int i = 0; i < program.n(); ++i) index[program.vars[i].name] = i;
  Vec v = Vec::Zero(program.n());
  auto set = [&](const std::string& name, double value) {
    const auto it = index.find(name);
    if (it == index.end())
      throw ValidationError("embedding: no variable named " + name);
    v[it->second] = value;
  };
  set("tax", tax);
  set("rho", rho);
  for (int d = 0; d < inst.D(); ++d) {
    const auto& eq = point.days[d];
    const std::string ds = ",d" + std::to_string(d) + "]";
    for (int k = 0; k < inst.K(); ++k) {
      set("w[" + inst.nodes[k] + ds, eq.w[k]);
      set("imp[" + inst.nodes[k] + ds, eq.y[k]);
      set("gam_share[" + inst.nodes[k] + ds, eq.psi[k]);
    }
    for (int a = 0; a < inst.A(); ++a) {
      set("gam_flow_lo[" + inst.lines[a].id + ds, eq.phi_minus[a]);
      set("gam_flow_hi[" + inst.lines[a].id + ds, eq.phi_plus[a]);
    }
    for (int i = 0; i < inst.I(); ++i)
      for (int j = 0; j < inst.J(); ++j)
        for (int k = 0; k < inst.K(); ++k) {
          const int c = inst.ijk(i, j, k);
          const std::string stem = "[" + inst.producers[i] + "," +
                                   inst.sources[j].id + "," + inst.nodes[k] +
                                   ds;
          const double share =
              ((inst.sources[j].renewable ? 1.0 : 0.0) - rho) * eq.psi[k];
          set("z" + stem, eq.z[c]);
          set("lam_z" + stem, eq.lam[c]);
          set("zc_z" + stem, eq.z[c]);
          set("lamc_z" + stem, std::max(0.0, eq.lam[c] + share));
        }
    const auto ei = index.find("eps[" + std::to_string(d) + "]");
    if (ei != index.end())
      v[ei->second] = 1.0;
    else
      set("eps", 1.0);
  }
  return v;
}

double cournot_monopoly_total(double alpha, double beta, double gamma,
                              double zmax) {
  return std::clamp((alpha - gamma) / (2.0 * beta), 0.0, zmax);
}

double cournot_duopoly_each(double alpha, double beta, double gamma,
                            double zmax) {
  return std::clamp((alpha - gamma) / (3.0 * beta), 0.0, zmax);
}

}  // namespace trilevel
