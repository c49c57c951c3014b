#include "trilevel/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace trilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Normalized {
  int n = 0;
  // equalities E v = f (includes fixed variables)
  Mat E;
  Vec f;
  std::vector<int> eq_src;  // original affine row, -1 for fixed-var rows
  // affine inequalities normalized to a'v - b <= 0
  Mat Ai;
  Vec bi;
  std::vector<int> in_src;
  std::vector<double> in_sign;
  // bounds kept separately (diagonal treatment)
  std::vector<int> ub_var, lb_var;
  Vec ub_val, lb_val;
};

Normalized normalize(const KernelProblem& kp) {
  Normalized nm;
  nm.n = kp.n;
  int p = 0, m = 0;
  std::vector<int> fixed;
  for (int i = 0; i < kp.n; ++i)
    if (kp.lb[i] == kp.ub[i] && std::isfinite(kp.lb[i])) fixed.push_back(i);
  for (size_t r = 0; r < kp.sense.size(); ++r)
    (kp.sense[r] == Sense::Eq ? p : m)++;
  nm.E = Mat::Zero(p + static_cast<int>(fixed.size()), kp.n);
  nm.f = Vec::Zero(nm.E.rows());
  nm.Ai = Mat::Zero(m, kp.n);
  nm.bi = Vec::Zero(m);
  int ep = 0, im = 0;
  for (int r = 0; r < static_cast<int>(kp.sense.size()); ++r) {
    if (kp.sense[r] == Sense::Eq) {
      nm.E.row(ep) = kp.A.row(r);
      nm.f[ep] = kp.b[r];
      nm.eq_src.push_back(r);
      ++ep;
    } else {
      const double sgn = kp.sense[r] == Sense::Le ? 1.0 : -1.0;
      nm.Ai.row(im) = sgn * kp.A.row(r);
      nm.bi[im] = sgn * kp.b[r];
      nm.in_src.push_back(r);
      nm.in_sign.push_back(sgn);
      ++im;
    }
  }
  for (int i : fixed) {
    nm.E(ep, i) = 1.0;
    nm.f[ep] = kp.lb[i];
    nm.eq_src.push_back(-1);
    ++ep;
  }
  for (int i = 0; i < kp.n; ++i) {
    const bool fx = kp.lb[i] == kp.ub[i] && std::isfinite(kp.lb[i]);
    if (fx) continue;
    if (std::isfinite(kp.ub[i])) {
      nm.ub_var.push_back(i);
    }
    if (std::isfinite(kp.lb[i])) {
      nm.lb_var.push_back(i);
    }
  }
  nm.ub_val = Vec(nm.ub_var.size());
  for (size_t k = 0; k < nm.ub_var.size(); ++k)
    nm.ub_val[k] = kp.ub[nm.ub_var[k]];
  nm.lb_val = Vec(nm.lb_var.size());
  for (size_t k = 0; k < nm.lb_var.size(); ++k)
    nm.lb_val[k] = kp.lb[nm.lb_var[k]];
  return nm;
}

class Ipm {
 public:
  Ipm(const KernelProblem& kp, const Normalized& nm, const KernelOptions& opt)
      : kp_(kp), nm_(nm), opt_(opt) {
    n_ = kp.n;
    p_ = static_cast<int>(nm.E.rows());
    ma_ = static_cast<int>(nm.Ai.rows());
    mq_ = static_cast<int>(kp.qrows.size());
    mu_ = static_cast<int>(nm.ub_var.size());
    ml_ = static_cast<int>(nm.lb_var.size());
    m_ = ma_ + mq_ + mu_ + ml_;
    has_Q_ = kp.Q.size() > 0;
  }

  KernelResult run(const Vec* start);

 private:
  double g_of(int i, const Vec& v) const {
    if (i < ma_) return nm_.Ai.row(i).dot(v) - nm_.bi[i];
    if (i < ma_ + mq_) {
      const auto& q = kp_.qrows[i - ma_];
      return 0.5 * v.dot(q.q * v) + q.lin.dot(v) - q.rhs;
    }
    if (i < ma_ + mq_ + mu_) {
      const int k = i - ma_ - mq_;
      return v[nm_.ub_var[k]] - nm_.ub_val[k];
    }
    const int k = i - ma_ - mq_ - mu_;
    return nm_.lb_val[k] - v[nm_.lb_var[k]];
  }

  Vec grad_of(int i, const Vec& v) const {
    if (i < ma_) return nm_.Ai.row(i).transpose();
    if (i < ma_ + mq_) {
      const auto& q = kp_.qrows[i - ma_];
      return q.q * v + q.lin;
    }
    Vec g = Vec::Zero(n_);
    if (i < ma_ + mq_ + mu_)
      g[nm_.ub_var[i - ma_ - mq_]] = 1.0;
    else
      g[nm_.lb_var[i - ma_ - mq_ - mu_]] = -1.0;
    return g;
  }

  Vec obj_grad(const Vec& v) const {
    Vec g = kp_.c;
    if (has_Q_) g += kp_.Q * v;
    return g;
  }

  const KernelProblem& kp_;
  const Normalized& nm_;
  const KernelOptions& opt_;
  int n_ = 0, p_ = 0, ma_ = 0, mq_ = 0, mu_ = 0, ml_ = 0, m_ = 0;
  bool has_Q_ = false;
};

KernelResult Ipm::run(const Vec* start) {
  KernelResult res;
  const double reg = 1e-10;

  Vec v = Vec::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    const double lo = kp_.lb[i], hi = kp_.ub[i];
    if (std::isfinite(lo) && std::isfinite(hi))
      v[i] = 0.5 * (lo + hi);
    else if (std::isfinite(lo))
      v[i] = lo + 1.0;
    else if (std::isfinite(hi))
      v[i] = hi - 1.0;
  }
  if (start && start->size() == n_) v = *start;
  Vec y = Vec::Zero(p_);
  Vec s(m_), lam(m_);
  for (int i = 0; i < m_; ++i) {
    s[i] = std::max(1.0, -g_of(i, v) + 0.1);
    lam[i] = 1.0;
  }

  const double scale_c = 1.0 + kp_.c.cwiseAbs().maxCoeff();
  double scale_b = 1.0;
  if (nm_.f.size()) scale_b = std::max(scale_b, nm_.f.cwiseAbs().maxCoeff());
  if (nm_.bi.size()) scale_b = std::max(scale_b, nm_.bi.cwiseAbs().maxCoeff());

  // pure equality-constrained problem: one Newton solve
  if (m_ == 0) {
    Mat kkt = Mat::Zero(n_ + p_, n_ + p_);
    if (has_Q_) kkt.topLeftCorner(n_, n_) = kp_.Q;
    kkt.topLeftCorner(n_, n_).diagonal().array() += reg;
    kkt.block(0, n_, n_, p_) = nm_.E.transpose();
    kkt.block(n_, 0, p_, n_) = nm_.E;
    kkt.bottomRightCorner(p_, p_).diagonal().array() -= reg;
    Vec rhs(n_ + p_);
    rhs.head(n_) = -kp_.c;
    rhs.tail(p_) = nm_.f;
    const Vec sol = kkt.partialPivLu().solve(rhs);
    res.v = sol.head(n_);
    if (!res.v.allFinite() || res.v.cwiseAbs().maxCoeff() > 1e14) {
      res.status = KernelStatus::Unbounded;
      return res;
    }
    res.dual_affine = Vec::Zero(kp_.sense.size());
    for (int e = 0; e < p_; ++e)
      if (nm_.eq_src[e] >= 0) res.dual_affine[nm_.eq_src[e]] = sol[n_ + e];
    res.dual_quad = Vec::Zero(0);
    res.obj = 0.5 * (has_Q_ ? res.v.dot(kp_.Q * res.v) : 0.0) +
              kp_.c.dot(res.v) + kp_.c0;
    const Vec rd = obj_grad(res.v) + nm_.E.transpose() * sol.tail(p_);
    const Vec rp = nm_.E * res.v - nm_.f;
    res.kkt_residual = rd.size() ? rd.cwiseAbs().maxCoeff() : 0.0;
    res.feas_residual = rp.size() ? rp.cwiseAbs().maxCoeff() : 0.0;
    res.status = (res.kkt_residual <= opt_.tol * scale_c * 10 &&
                  res.feas_residual <= opt_.tol * scale_b * 10)
                     ? KernelStatus::Optimal
                     : KernelStatus::NumericalTrouble;
    return res;
  }

  double best_err = kInf;
  Vec best_v = v, best_y = y, best_s = s, best_lam = lam;
  int stall = 0;

  const int bound_off = ma_ + mq_;
  Mat grads(m_, n_);  // row i: gradient of g_i (bounds handled separately)

  for (int it = 0; it < opt_.max_iter; ++it) {
    res.iterations = it + 1;
    // residuals
    Vec gval(m_);
    for (int i = 0; i < m_; ++i) gval[i] = g_of(i, v);
    for (int i = 0; i < bound_off; ++i) grads.row(i) = grad_of(i, v);

    Vec rd = obj_grad(v);
    if (p_) rd += nm_.E.transpose() * y;
    for (int i = 0; i < bound_off; ++i) rd += lam[i] * grads.row(i).transpose();
    for (int k = 0; k < mu_; ++k) rd[nm_.ub_var[k]] += lam[bound_off + k];
    for (int k = 0; k < ml_; ++k) rd[nm_.lb_var[k]] -= lam[bound_off + mu_ + k];

    const Vec rp = p_ ? Vec(nm_.E * v - nm_.f) : Vec();
    const Vec rg = gval + s;
    const double mu = s.dot(lam) / m_;

    const double err_d = rd.cwiseAbs().maxCoeff() / scale_c;
    const double err_p =
        std::max(p_ ? rp.cwiseAbs().maxCoeff() : 0.0, rg.cwiseAbs().maxCoeff()) /
        scale_b;
    const double err = std::max({err_d, err_p, mu});
    if (err < 0.99 * best_err) {
      stall = 0;
    } else {
      ++stall;
    }
    if (err < best_err) {
      best_err = err;
      best_v = v;
      best_y = y;
      best_s = s;
      best_lam = lam;
    }
    if (err_d <= opt_.tol && err_p <= opt_.tol && mu <= 100 * opt_.tol * opt_.tol) {
      break;
    }
    if (!v.allFinite() || v.cwiseAbs().maxCoeff() > 1e14) break;
    if (stall > 30) break;

    // assemble the condensed system
    Mat K = Mat::Zero(n_, n_);
    if (has_Q_) K = kp_.Q;
    for (int j = 0; j < mq_; ++j) K += lam[ma_ + j] * kp_.qrows[j].q;
    K.diagonal().array() += reg + 1e-12;
    Vec w(m_);
    for (int i = 0; i < m_; ++i) w[i] = lam[i] / std::max(s[i], 1e-300);
    for (int i = 0; i < bound_off; ++i)
      K.selfadjointView<Eigen::Lower>().rankUpdate(grads.row(i).transpose(),
                                                   w[i]);
    for (int k = 0; k < mu_; ++k)
      K(nm_.ub_var[k], nm_.ub_var[k]) += w[bound_off + k];
    for (int k = 0; k < ml_; ++k)
      K(nm_.lb_var[k], nm_.lb_var[k]) += w[bound_off + mu_ + k];
    K = K.selfadjointView<Eigen::Lower>();

    Eigen::LLT<Mat> llt(K);
    bool use_lu = llt.info() != Eigen::Success;
    Eigen::PartialPivLU<Mat> lu;
    Mat saddle;
    if (use_lu || p_ == 0) {
      // fall through; assembled on demand below
    }
    Mat KiET;
    Mat schur;
    Eigen::LLT<Mat> schur_llt;
    bool schur_lu_mode = false;
    Eigen::PartialPivLU<Mat> schur_lu;
    if (!use_lu && p_ > 0) {
      KiET = llt.solve(nm_.E.transpose());
      schur = nm_.E * KiET;
      schur.diagonal().array() += reg;
      schur_llt.compute(schur);
      if (schur_llt.info() != Eigen::Success) {
        schur_lu.compute(schur);
        schur_lu_mode = true;
      }
    }
    if (use_lu) {
      saddle = Mat::Zero(n_ + p_, n_ + p_);
      saddle.topLeftCorner(n_, n_) = K;
      if (p_) {
        saddle.block(0, n_, n_, p_) = nm_.E.transpose();
        saddle.block(n_, 0, p_, n_) = nm_.E;
        saddle.bottomRightCorner(p_, p_).diagonal().array() -= reg;
      }
      lu.compute(saddle);
    }

    auto solve_step = [&](const Vec& rc) {
      // returns (dv, dy, dlam, ds)
      Vec rhs1 = -rd;
      for (int i = 0; i < m_; ++i) {
        const double t = w[i] * rg[i] - rc[i] / std::max(s[i], 1e-300);
        if (i < bound_off)
          rhs1 -= t * grads.row(i).transpose();
        else if (i < bound_off + mu_)
          rhs1[nm_.ub_var[i - bound_off]] -= t;
        else
          rhs1[nm_.lb_var[i - bound_off - mu_]] += t;
      }
      Vec dv, dy = Vec::Zero(p_);
      if (use_lu) {
        Vec rhs(n_ + p_);
        rhs.head(n_) = rhs1;
        if (p_) rhs.tail(p_) = -rp;
        const Vec sol = lu.solve(rhs);
        dv = sol.head(n_);
        if (p_) dy = sol.tail(p_);
      } else if (p_ > 0) {
        const Vec kr = llt.solve(rhs1);
        const Vec srhs = nm_.E * kr + rp;
        if (schur_lu_mode)
          dy = schur_lu.solve(srhs);
        else
          dy = schur_llt.solve(srhs);
        dv = kr - KiET * dy;
      } else {
        dv = llt.solve(rhs1);
      }
      Vec dlam(m_), ds(m_);
      for (int i = 0; i < m_; ++i) {
        double gdv;
        if (i < bound_off)
          gdv = grads.row(i).dot(dv);
        else if (i < bound_off + mu_)
          gdv = dv[nm_.ub_var[i - bound_off]];
        else
          gdv = -dv[nm_.lb_var[i - bound_off - mu_]];
        dlam[i] = w[i] * gdv + w[i] * rg[i] - rc[i] / std::max(s[i], 1e-300);
        ds[i] = -(rc[i] + s[i] * dlam[i]) / std::max(lam[i], 1e-300);
      }
      return std::make_tuple(dv, dy, dlam, ds);
    };

    auto max_step = [&](const Vec& x, const Vec& dx) {
      double a = 1.0;
      for (int i = 0; i < x.size(); ++i)
        if (dx[i] < 0.0) a = std::min(a, -x[i] / dx[i]);
      return a;
    };

    // predictor
    Vec rc_aff(m_);
    for (int i = 0; i < m_; ++i) rc_aff[i] = lam[i] * s[i];
    auto [dv_a, dy_a, dlam_a, ds_a] = solve_step(rc_aff);
    const double ap = max_step(s, ds_a);
    const double ad = max_step(lam, dlam_a);
    const double a_aff = std::min(ap, ad);
    double mu_aff = 0.0;
    for (int i = 0; i < m_; ++i)
      mu_aff += (lam[i] + a_aff * dlam_a[i]) * (s[i] + a_aff * ds_a[i]);
    mu_aff /= m_;
    const double sigma = std::pow(std::min(1.0, mu_aff / mu), 3);

    // corrector
    Vec rc(m_);
    for (int i = 0; i < m_; ++i)
      rc[i] = lam[i] * s[i] + dlam_a[i] * ds_a[i] - sigma * mu;
    auto [dv, dy, dlam, ds] = solve_step(rc);
    const double alpha =
        0.995 * std::min(max_step(s, ds), max_step(lam, dlam));
    v += alpha * dv;
    if (p_) y += alpha * dy;
    s += alpha * ds;
    lam += alpha * dlam;
    for (int i = 0; i < m_; ++i) {
      s[i] = std::max(s[i], 1e-300);
      lam[i] = std::max(lam[i], 1e-300);
    }
  }

  v = best_v;
  y = best_y;
  s = best_s;
  lam = best_lam;

  // active-set polish: one or two Newton refinements on the rows that look
  // binding, then verification that the multipliers keep their signs
  if (opt_.polish) {
    std::vector<int> act;
    for (int i = 0; i < m_; ++i)
      if (s[i] <= lam[i]) act.push_back(i);
    const int na = static_cast<int>(act.size());
    Vec la(na);
    for (int k = 0; k < na; ++k) la[k] = lam[act[k]];
    Vec pv = v, py = y;
    bool ok = true;
    for (int step = 0; step < 3 && ok; ++step) {
      Mat H = Mat::Zero(n_, n_);
      if (has_Q_) H = kp_.Q;
      for (int k = 0; k < na; ++k) {
        const int i = act[k];
        if (i >= ma_ && i < ma_ + mq_) H += la[k] * kp_.qrows[i - ma_].q;
      }
      H.diagonal().array() += 1e-12;
      Mat J(na, n_);
      Vec gv(na);
      for (int k = 0; k < na; ++k) {
        J.row(k) = grad_of(act[k], pv).transpose();
        gv[k] = g_of(act[k], pv);
      }
      Mat kkt = Mat::Zero(n_ + p_ + na, n_ + p_ + na);
      kkt.topLeftCorner(n_, n_) = H;
      if (p_) {
        kkt.block(0, n_, n_, p_) = nm_.E.transpose();
        kkt.block(n_, 0, p_, n_) = nm_.E;
      }
      kkt.block(0, n_ + p_, n_, na) = J.transpose();
      kkt.block(n_ + p_, 0, na, n_) = J;
      kkt.bottomRightCorner(p_ + na, p_ + na).diagonal().array() -= 1e-12;
      Vec F(n_ + p_ + na);
      Vec rd = obj_grad(pv);
      if (p_) rd += nm_.E.transpose() * py;
      for (int k = 0; k < na; ++k) rd += la[k] * J.row(k).transpose();
      F.head(n_) = rd;
      if (p_) F.segment(n_, p_) = nm_.E * pv - nm_.f;
      F.tail(na) = gv;
      const Vec dz = kkt.partialPivLu().solve(-F);
      if (!dz.allFinite()) {
        ok = false;
        break;
      }
      pv += dz.head(n_);
      if (p_) py += dz.segment(n_, p_);
      la += dz.tail(na);
    }
    if (ok && pv.allFinite()) {
      // signs and inactive feasibility
      for (int k = 0; k < na && ok; ++k)
        if (la[k] < -1e-8) ok = false;
      for (int i = 0; i < m_ && ok; ++i)
        if (g_of(i, pv) > 1e-8 * scale_b) ok = false;
      if (ok) {
        Vec rd = obj_grad(pv);
        if (p_) rd += nm_.E.transpose() * py;
        for (int k = 0; k < na; ++k) rd += la[k] * grad_of(act[k], pv);
        double err_d = rd.cwiseAbs().maxCoeff() / scale_c;
        double err_p = p_ ? (nm_.E * pv - nm_.f).cwiseAbs().maxCoeff() / scale_b
                          : 0.0;
        if (std::max(err_d, err_p) <= std::max(best_err, opt_.tol)) {
          v = pv;
          y = py;
          for (int i = 0; i < m_; ++i) {
            s[i] = std::max(-g_of(i, v), 0.0);
            lam[i] = 0.0;
          }
          for (int k = 0; k < na; ++k)
            lam[act[k]] = std::max(la[k], 0.0);
          best_err = std::max(err_d, err_p);
        }
      }
    }
  }

  // final residual accounting
  Vec gval(m_);
  for (int i = 0; i < m_; ++i) gval[i] = g_of(i, v);
  Vec rd = obj_grad(v);
  if (p_) rd += nm_.E.transpose() * y;
  for (int i = 0; i < m_; ++i) rd += lam[i] * grad_of(i, v);
  double err_d = rd.cwiseAbs().maxCoeff() / scale_c;
  double feas = 0.0;
  if (p_) feas = (nm_.E * v - nm_.f).cwiseAbs().maxCoeff();
  feas = std::max(feas, gval.maxCoeff());
  double comp = 0.0;
  for (int i = 0; i < m_; ++i)
    comp = std::max(comp, std::abs(lam[i] * std::max(-gval[i], 0.0)));

  res.v = v;
  res.obj = 0.5 * (has_Q_ ? v.dot(kp_.Q * v) : 0.0) + kp_.c.dot(v) + kp_.c0;
  res.kkt_residual = std::max(err_d, comp / (scale_b * scale_c));
  res.feas_residual = std::max(feas, 0.0) / scale_b;
  res.dual_affine = Vec::Zero(kp_.sense.size());
  for (int e = 0; e < p_; ++e)
    if (nm_.eq_src[e] >= 0) res.dual_affine[nm_.eq_src[e]] = y[e];
  for (int i = 0; i < ma_; ++i)
    res.dual_affine[nm_.in_src[i]] = nm_.in_sign[i] * lam[i];
  res.dual_quad = Vec::Zero(mq_);
  for (int j = 0; j < mq_; ++j) res.dual_quad[j] = lam[ma_ + j];

  const double tol10 = 100 * opt_.tol;
  if (res.feas_residual <= tol10 && err_d <= tol10 &&
      comp / (scale_b * scale_c) <= tol10) {
    res.status = KernelStatus::Optimal;
  } else if (!v.allFinite() || v.cwiseAbs().maxCoeff() > 1e13) {
    res.status = KernelStatus::Unbounded;
  } else if (res.feas_residual > tol10) {
    res.status = KernelStatus::Infeasible;  // provisional; phase 1 decides
  } else {
    res.status = KernelStatus::IterationLimit;
  }
  return res;
}

// Elastic feasibility phase: minimizes total constraint violation with hard
// variable bounds. Zero optimum means the original rows are satisfiable.
KernelProblem phase1_problem(const KernelProblem& kp) {
  const int n = kp.n;
  int extra = 0;
  const int m_rows = static_cast<int>(kp.sense.size());
  for (int r = 0; r < m_rows; ++r) extra += kp.sense[r] == Sense::Eq ? 2 : 1;
  extra += static_cast<int>(kp.qrows.size());

  KernelProblem p1;
  p1.n = n + extra;
  p1.c = Vec::Zero(p1.n);
  p1.c.tail(extra).setOnes();
  p1.lb = Vec::Constant(p1.n, -kInf);
  p1.ub = Vec::Constant(p1.n, kInf);
  p1.lb.head(n) = kp.lb;
  p1.ub.head(n) = kp.ub;
  p1.lb.tail(extra).setZero();

  p1.A = Mat::Zero(m_rows, p1.n);
  p1.b = kp.b;
  p1.sense = kp.sense;
  int e = n;
  for (int r = 0; r < m_rows; ++r) {
    p1.A.row(r).head(n) = kp.A.row(r);
    if (kp.sense[r] == Sense::Eq) {
      p1.A(r, e) = 1.0;
      p1.A(r, e + 1) = -1.0;
      e += 2;
    } else {
      p1.A(r, e) = kp.sense[r] == Sense::Le ? -1.0 : 1.0;
      e += 1;
    }
  }
  for (const auto& q : kp.qrows) {
    QuadRow qe;
    qe.q = Mat::Zero(p1.n, p1.n);
    qe.q.topLeftCorner(n, n) = q.q;
    qe.lin = Vec::Zero(p1.n);
    qe.lin.head(n) = q.lin;
    qe.lin[e] = -1.0;
    qe.rhs = q.rhs;
    p1.qrows.push_back(std::move(qe));
    e += 1;
  }
  return p1;
}

bool verify_farkas(const KernelProblem& kp, const Vec& dual, double tol) {
  // every feasible point satisfies (sum d_r a_r)'v <= sum d_r b_r, so a
  // box-minimum above the right-hand side certifies an empty feasible set
  Vec w = Vec::Zero(kp.n);
  double rhs = 0.0;
  for (int r = 0; r < static_cast<int>(kp.sense.size()); ++r) {
    const double d = dual[r];
    if (kp.sense[r] == Sense::Le && d < -tol) return false;
    if (kp.sense[r] == Sense::Ge && d > tol) return false;
    w += d * kp.A.row(r).transpose();
    rhs += d * kp.b[r];
  }
  double lo = 0.0;  // min of w'v over the box
  for (int i = 0; i < kp.n; ++i) {
    if (w[i] > 0) {
      if (!std::isfinite(kp.lb[i])) return false;
      lo += w[i] * kp.lb[i];
    } else if (w[i] < 0) {
      if (!std::isfinite(kp.ub[i])) return false;
      lo += w[i] * kp.ub[i];
    }
  }
  const double scale = 1.0 + std::abs(rhs) + w.cwiseAbs().sum();
  return lo > rhs + tol * scale;
}

KernelResult solve_impl(const KernelProblem& kp, const KernelOptions& opt,
                        bool allow_phase1);

/// Looks for a feasible recession direction with negative objective slope;
/// a verified ray upgrades a stalled solve to Unbounded.
bool has_negative_ray(const KernelProblem& kp, const KernelOptions& opt) {
  KernelProblem ray;
  ray.n = kp.n;
  ray.c = kp.c;
  if (kp.Q.size() > 0) {
    // descent within the null space of the objective form
    ray.Q = Mat();
  }
  ray.lb = Vec::Constant(kp.n, -1.0);
  ray.ub = Vec::Constant(kp.n, 1.0);
  for (int i = 0; i < kp.n; ++i) {
    if (std::isfinite(kp.lb[i])) ray.lb[i] = 0.0;
    if (std::isfinite(kp.ub[i])) ray.ub[i] = 0.0;
  }
  int rows = static_cast<int>(kp.sense.size());
  int qrows_eq = 0;
  for (const auto& q : kp.qrows) {
    (void)q;
    qrows_eq += kp.n + 1;
  }
  if (kp.Q.size() > 0) qrows_eq += kp.n;
  ray.A = Mat::Zero(rows + qrows_eq, kp.n);
  ray.b = Vec::Zero(rows + qrows_eq);
  for (int r = 0; r < rows; ++r) {
    ray.A.row(r) = kp.A.row(r);
    ray.sense.push_back(kp.sense[r] == Sense::Ge ? Sense::Ge : Sense::Le);
    if (kp.sense[r] == Sense::Eq) ray.sense.back() = Sense::Eq;
  }
  int r = rows;
  for (const auto& q : kp.qrows) {
    for (int i = 0; i < kp.n; ++i) {
      ray.A.row(r) = q.q.row(i);
      ray.sense.push_back(Sense::Eq);
      ++r;
    }
    ray.A.row(r) = q.lin.transpose();
    ray.sense.push_back(Sense::Le);
    ++r;
  }
  if (kp.Q.size() > 0)
    for (int i = 0; i < kp.n; ++i) {
      ray.A.row(r) = kp.Q.row(i);
      ray.sense.push_back(Sense::Eq);
      ++r;
    }
  KernelOptions o = opt;
  o.tol = 1e-9;
  const KernelResult rr = solve_impl(ray, o, false);
  if (rr.status != KernelStatus::Optimal) return false;
  if (rr.obj >= -1e-7) return false;
  // verify the ray numerically
  const Vec& d = rr.v;
  for (int i = 0; i < static_cast<int>(kp.sense.size()); ++i) {
    const double ad = kp.A.row(i).dot(d);
    if (kp.sense[i] == Sense::Le && ad > 1e-7) return false;
    if (kp.sense[i] == Sense::Ge && ad < -1e-7) return false;
    if (kp.sense[i] == Sense::Eq && std::abs(ad) > 1e-7) return false;
  }
  return kp.c.dot(d) < -1e-8;
}

KernelResult solve_impl(const KernelProblem& kp, const KernelOptions& opt,
                        bool allow_phase1) {
  const Normalized nm = normalize(kp);
  Ipm ipm(kp, nm, opt);
  KernelResult res = ipm.run(nullptr);
  if (res.status == KernelStatus::Optimal ||
      res.status == KernelStatus::Unbounded)
    return res;
  if (!allow_phase1) return res;
  if (res.status == KernelStatus::IterationLimit &&
      res.feas_residual <= 100 * opt.tol && has_negative_ray(kp, opt)) {
    res.status = KernelStatus::Unbounded;
    return res;
  }

  // classify: feasibility phase with elastic rows
  const KernelProblem p1 = phase1_problem(kp);
  KernelOptions o1 = opt;
  o1.tol = std::max(opt.tol, 1e-9);
  const KernelResult r1 = solve_impl(p1, o1, false);
  const double viol = r1.status == KernelStatus::Optimal ? r1.obj : kInf;
  if (viol > 1e-7 * (1.0 + nm.f.size() + kp.b.cwiseAbs().sum() * 0)) {
    KernelResult out;
    out.status = KernelStatus::Infeasible;
    out.v = r1.v.size() >= kp.n ? Vec(r1.v.head(kp.n)) : Vec();
    out.obj = kInf;
    out.iterations = res.iterations + r1.iterations;
    if (r1.dual_affine.size() == static_cast<Eigen::Index>(kp.sense.size())) {
      out.farkas = r1.dual_affine;
      out.farkas_verified = verify_farkas(kp, out.farkas, 1e-9);
    }
    return out;
  }
  // feasible after all: restart from the feasibility point
  if (r1.v.size() >= kp.n) {
    Vec start = r1.v.head(kp.n);
    KernelResult res2 = ipm.run(&start);
    if (res2.status == KernelStatus::Optimal) return res2;
    if (res2.kkt_residual < res.kkt_residual) res = res2;
  }
  if (res.status == KernelStatus::Infeasible)
    res.status = KernelStatus::NumericalTrouble;
  return res;
}

}  // namespace

void KernelProblem::validate() const {
  if (c.size() != n || lb.size() != n || ub.size() != n)
    throw ValidationError("kernel problem: vector sizes disagree with n");
  if (A.rows() != static_cast<Eigen::Index>(sense.size()) || A.cols() != n ||
      b.size() != A.rows())
    throw ValidationError("kernel problem: affine block shape mismatch");
  if (Q.size() > 0) {
    if (Q.rows() != n || Q.cols() != n)
      throw ValidationError("kernel problem: objective form shape mismatch");
    if (!is_psd(Q)) throw ValidationError("kernel objective is not convex");
  }
  for (const auto& q : qrows) {
    if (q.q.rows() != n || q.q.cols() != n || q.lin.size() != n)
      throw ValidationError("kernel problem: quadratic row shape mismatch");
    if (!is_psd(q.q))
      throw ValidationError("kernel quadratic row is not convex");
  }
  for (int i = 0; i < n; ++i)
    if (lb[i] > ub[i]) throw ValidationError("kernel problem: empty box");
}

int KernelBuilder::add_var(double lb, double ub) {
  lb_.push_back(lb);
  ub_.push_back(ub);
  return static_cast<int>(lb_.size()) - 1;
}

void KernelBuilder::obj_lin(int i, double coef) { obj_.emplace_back(i, coef); }

void KernelBuilder::obj_quad(int i, int j, double coef) {
  objq_.emplace_back(i, j, coef);
}

int KernelBuilder::add_affine(const std::vector<std::pair<int, double>>& terms,
                              Sense sense, double rhs) {
  rows_.push_back({terms, sense, rhs});
  return static_cast<int>(rows_.size()) - 1;
}

int KernelBuilder::add_qrow(
    const std::vector<std::tuple<int, int, double>>& qterms,
    const std::vector<std::pair<int, double>>& lterms, double rhs) {
  qrows_.push_back({qterms, lterms, rhs});
  return static_cast<int>(qrows_.size()) - 1;
}

KernelProblem KernelBuilder::build() {
  KernelProblem kp;
  kp.n = static_cast<int>(lb_.size());
  kp.lb = Eigen::Map<Vec>(lb_.data(), kp.n);
  kp.ub = Eigen::Map<Vec>(ub_.data(), kp.n);
  kp.c = Vec::Zero(kp.n);
  for (const auto& [i, coef] : obj_) kp.c[i] += coef;
  kp.c0 = c0_;
  if (!objq_.empty()) {
    kp.Q = Mat::Zero(kp.n, kp.n);
    for (const auto& [i, j, coef] : objq_) {
      if (i == j)
        kp.Q(i, i) += 2.0 * coef;
      else {
        kp.Q(i, j) += coef;
        kp.Q(j, i) += coef;
      }
    }
  }
  kp.A = Mat::Zero(rows_.size(), kp.n);
  kp.b = Vec::Zero(rows_.size());
  for (size_t r = 0; r < rows_.size(); ++r) {
    for (const auto& [i, coef] : rows_[r].terms) kp.A(r, i) += coef;
    kp.b[r] = rows_[r].rhs;
    kp.sense.push_back(rows_[r].sense);
  }
  for (const auto& q : qrows_) {
    QuadRow row;
    row.q = Mat::Zero(kp.n, kp.n);
    for (const auto& [i, j, coef] : q.qterms) {
      if (i == j)
        row.q(i, i) += 2.0 * coef;
      else {
        row.q(i, j) += coef;
        row.q(j, i) += coef;
      }
    }
    row.lin = Vec::Zero(kp.n);
    for (const auto& [i, coef] : q.lterms) row.lin[i] += coef;
    row.rhs = q.rhs;
    kp.qrows.push_back(std::move(row));
  }
  kp.validate();
  return kp;
}

KernelResult solve_kernel(const KernelProblem& problem,
                          const KernelOptions& options) {
  problem.validate();
  return solve_impl(problem, options, true);
}

}  // namespace trilevel
