#include "trilevel/market.hpp"

#include <algorithm>
#include <cmath>

namespace trilevel {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

int PowerMarketInstance::renewable_count() const {
  int n = 0;
  for (const auto& s : sources) n += s.renewable ? 1 : 0;
  return n;
}

void PowerMarketInstance::validate() const {
  require(!nodes.empty(), "instance has no nodes");
  require(!producers.empty(), "instance has no producers");
  require(!sources.empty(), "instance has no sources");
  require(day_weights.size() > 0, "instance has no representative days");
  require(ptdf.rows() == K() && ptdf.cols() == A(),
          "PTDF must be |nodes| x |lines|");
  for (const auto& l : lines)
    require(l.t_minus >= 0.0 && l.t_plus >= 0.0,
            "line limits must be nonnegative: " + l.id);
  require(eta.size() == I() * J() * K(), "eta size mismatch");
  require(nu.size() == I() * J() * K(), "nu size mismatch");
  require(zmax.size() == I() * J() * K() * D(), "zmax size mismatch");
  require(alpha.rows() == K() && alpha.cols() == D(), "alpha shape mismatch");
  require(beta.rows() == K() && beta.cols() == D(), "beta shape mismatch");
  require((eta.array() >= 0.0).all(), "emission factors must be nonnegative");
  require((zmax.array() >= 0.0).all(), "capacities must be nonnegative");
  for (int k = 0; k < K(); ++k)
    for (int d = 0; d < D(); ++d) {
      require(alpha(k, d) > 0.0, "demand intercept must be positive at node " +
                                     nodes[k] + " day " + std::to_string(d));
      require(beta(k, d) > 0.0, "demand slope must be positive at node " +
                                    nodes[k] + " day " + std::to_string(d));
    }
  require((day_weights.array() > 0.0).all(), "day weights must be positive");
  require(std::abs(day_weights.sum() - 1.0) <= 1e-12,
          "day weights must sum to one");
}

void RegulatorPolicy::validate() const {
  require(tax >= 0.0, "carbon tax must be nonnegative");
  require(min_renewable >= 0.0 && min_renewable <= 1.0,
          "minimum renewable share must lie in [0,1]");
  require(production_weight > 0.0 && production_weight < 1.0,
          "production weight must lie in (0,1)");
}

// ---------------------------------------------------------------------------

Vec ArbitrageReduction::arbitrage(const Vec& z_node, const Vec& alpha,
                                  const Vec& w) const {
  return h * z_node.sum() - z_node + L * (alpha - w);
}

double ArbitrageReduction::hub_price(double z_total, const Vec& alpha,
                                     const Vec& w) const {
  return h.dot(alpha - w) - z_total * hhat;
}

ArbitrageReduction arbitrage_reduction(const PowerMarketInstance& inst,
                                       int d) {
  const int K = inst.K();
  for (int k = 0; k < K; ++k)
    require(inst.beta(k, d) > 0.0,
            "demand slope must be positive for the arbitrage reduction");
  ArbitrageReduction red;
  Vec binv(K);
  for (int k = 0; k < K; ++k) binv[k] = 1.0 / inst.beta(k, d);
  red.hhat = 1.0 / binv.sum();
  red.h = binv * red.hhat;
  red.L = Mat::Zero(K, K);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp) {
      if (k == kp)
        red.L(k, k) = red.hhat * binv[k] * (binv.sum() - binv[k]);
      else
        red.L(k, kp) = -red.hhat * binv[k] * binv[kp];
    }
  return red;
}

double arbitrage_residual(const PowerMarketInstance& inst, int d,
                          const ArbitrageReduction& red, const Vec& z_node,
                          const Vec& w) {
  const int K = inst.K();
  const Vec alpha = inst.alpha.col(d);
  const Vec a = red.arbitrage(z_node, alpha, w);
  const double ph = red.hub_price(z_node.sum(), alpha, w);
  double res = std::abs(a.sum());
  for (int k = 0; k < K; ++k) {
    const double price = alpha[k] - inst.beta(k, d) * (z_node[k] + a[k]);
    res = std::max(res, std::abs(price - ph - w[k]));
  }
  return res;
}

Vec effective_cost(const PowerMarketInstance& inst, double tax) {
  return inst.nu + tax * inst.eta;
}

double saturation_tax(const PowerMarketInstance& inst) {
  const double amax = inst.alpha.maxCoeff();
  double t = 0.0;
  for (int c = 0; c < inst.eta.size(); ++c) {
    if (inst.eta[c] > 0.0)
      t = std::max(t, (amax - inst.nu[c]) / inst.eta[c]);
  }
  return std::max(t, 0.0);
}

// ---------------------------------------------------------------------------

Mat cournot_interaction(const PowerMarketInstance& inst, int d) {
  const ArbitrageReduction red = arbitrage_reduction(inst, d);
  const int nb = inst.I() * inst.J() * inst.K();
  const int per = inst.J() * inst.K();
  Mat B(nb, nb);
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < nb; ++c)
      B(r, c) = (r / per == c / per) ? 2.0 * red.hhat : red.hhat;
  return B;
}

QpBlock build_reduced_producer_block(const PowerMarketInstance& inst, int d) {
  const int I = inst.I(), J = inst.J(), K = inst.K();
  const int nb = I * J * K;
  const int n_x = market_n_x(inst);
  const ArbitrageReduction red = arbitrage_reduction(inst, d);

  QpBlock blk;
  blk.group = d;
  blk.quad = cournot_interaction(inst, d);
  blk.cost.constant = Vec(nb);
  blk.cost.coeff = Mat::Zero(nb, n_x);
  const double alpha_h = red.h.dot(inst.alpha.col(d));
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k) {
        const int c = inst.ijk(i, j, k);
        blk.cost.constant[c] = inst.nu[c] - alpha_h;
        blk.cost.coeff(c, x_tax_index()) = inst.eta[c];
        for (int kp = 0; kp < K; ++kp) {
          double coef = red.h[kp] - (kp == k ? 1.0 : 0.0);
          if (coef != 0.0) blk.cost.coeff(c, x_w_index(inst, kp, d)) = coef;
        }
      }
  blk.con = -Mat::Identity(nb, nb);
  blk.rhs.constant = Vec(nb);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k)
        blk.rhs.constant[inst.ijk(i, j, k)] = -inst.zmax[inst.ijkd(i, j, k, d)];
  blk.z_names.resize(nb);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k)
        blk.z_names[inst.ijk(i, j, k)] =
            "z[" + inst.producers[i] + "," + inst.sources[j].id + "," +
            inst.nodes[k] + ",d" + std::to_string(d) + "]";
  return blk;
}

TrilevelModel build_trilevel(const PowerMarketInstance& inst,
                             double production_weight) {
  inst.validate();
  RegulatorPolicy check;
  check.production_weight = production_weight;
  check.validate();

  const int I = inst.I(), J = inst.J(), K = inst.K(), A = inst.A(),
            D = inst.D();
  const int nb = I * J * K;
  const double inf = std::numeric_limits<double>::infinity();

  TrilevelModel m;
  m.n_x = market_n_x(inst);
  m.n_y = K * D;
  m.n_groups = D;

  m.x_names.resize(m.n_x);
  m.x_names[x_tax_index()] = "tax";
  m.x_names[x_rho_index()] = "rho";
  m.x_lb = Vec::Constant(m.n_x, -inf);
  m.x_ub = Vec::Constant(m.n_x, inf);
  m.x_lb[x_tax_index()] = 0.0;
  m.x_ub[x_tax_index()] = saturation_tax(inst);
  m.x_lb[x_rho_index()] = 0.0;
  m.x_ub[x_rho_index()] = 1.0;
  m.y_names.resize(m.n_y);
  m.y_free.assign(m.n_y, true);
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      m.x_names[x_w_index(inst, k, d)] =
          "w[" + inst.nodes[k] + ",d" + std::to_string(d) + "]";
      m.y_names[y_index(inst, k, d)] =
          "imp[" + inst.nodes[k] + ",d" + std::to_string(d) + "]";
    }

  // Producer blocks, one per day, with the day's arbitrage reduction baked
  // into costs and the Cournot interaction.
  std::vector<ArbitrageReduction> red(D);
  for (int d = 0; d < D; ++d) {
    red[d] = arbitrage_reduction(inst, d);
    m.blocks.push_back(build_reduced_producer_block(inst, d));
  }

  // Regulator: maximize weighted production minus weighted emissions, stated
  // here in minimization form.
  m.c1 = Vec::Zero(m.n_x);
  m.d1 = Vec::Zero(m.n_y);
  for (int d = 0; d < D; ++d) {
    Vec e1 = Vec::Zero(nb);
    for (int c = 0; c < nb; ++c)
      e1[c] = -inst.day_weights[d] *
              (production_weight - (1.0 - production_weight) * inst.eta[c]);
    m.e1.push_back(std::move(e1));
  }

  // Market clearing held at the top level, one equality per node and day,
  // with the wheeling fees as the associated variables.
  const int m1 = K * D;
  m.A1 = Mat::Zero(m1, m.n_x);
  m.B1 = Mat::Zero(m1, m.n_y);
  m.a1 = Vec::Zero(m1);
  m.top_sense.assign(m1, Sense::Eq);
  m.top_row_names.resize(m1);
  for (int d = 0; d < D; ++d) m.C1.push_back(Mat::Zero(m1, nb));
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      const int r = clearing_row(inst, k, d);
      m.top_row_names[r] =
          "clear[" + inst.nodes[k] + ",d" + std::to_string(d) + "]";
      m.B1(r, y_index(inst, k, d)) = -1.0;
      double rhs = 0.0;
      for (int kp = 0; kp < K; ++kp) {
        if (red[d].L(k, kp) != 0.0)
          m.A1(r, x_w_index(inst, kp, d)) = -red[d].L(k, kp);
        rhs -= red[d].L(k, kp) * inst.alpha(kp, d);
      }
      m.a1[r] = rhs;
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double coef = red[d].h[k] - (kp == k ? 1.0 : 0.0);
            if (coef != 0.0) m.C1[d](r, inst.ijk(i, j, kp)) = coef;
          }
    }

  // System operator, per day: profit from fee-weighted net imports under
  // line limits, plus the minimum-renewable-share rows scaled by rho.
  const int m2 = D * mid_rows_per_day(inst);
  m.d2.constant = Vec::Zero(m.n_y);
  m.d2.coeff = Mat::Zero(m.n_y, m.n_x);
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k)
      m.d2.coeff(y_index(inst, k, d), x_w_index(inst, k, d)) = -1.0;
  for (int d = 0; d < D; ++d) m.e2.emplace_back(Vec::Zero(nb));
  m.A2 = Mat::Zero(m2, m.n_x);
  m.B2 = Mat::Zero(m2, m.n_y);
  m.a2 = Vec::Zero(m2);
  m.middle_row_names.resize(m2);
  for (int d = 0; d < D; ++d) m.C2.push_back(Mat::Zero(m2, nb));
  for (int d = 0; d < D; ++d) {
    for (int a = 0; a < A; ++a) {
      const int rm = phi_minus_row(inst, a, d);
      const int rp = phi_plus_row(inst, a, d);
      m.middle_row_names[rm] =
          "flow_lo[" + inst.lines[a].id + ",d" + std::to_string(d) + "]";
      m.middle_row_names[rp] =
          "flow_hi[" + inst.lines[a].id + ",d" + std::to_string(d) + "]";
      for (int k = 0; k < K; ++k) {
        if (inst.ptdf(k, a) != 0.0) {
          m.B2(rm, y_index(inst, k, d)) = inst.ptdf(k, a);
          m.B2(rp, y_index(inst, k, d)) = -inst.ptdf(k, a);
        }
      }
      m.a2[rm] = -inst.lines[a].t_minus;
      m.a2[rp] = -inst.lines[a].t_plus;
    }
    for (int k = 0; k < K; ++k) {
      const int r = psi_row(inst, k, d);
      m.middle_row_names[r] =
          "share[" + inst.nodes[k] + ",d" + std::to_string(d) + "]";
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) {
          const int c = inst.ijk(i, j, k);
          if (inst.sources[j].renewable) m.C2[d](r, c) = 1.0;
          m.C2x.push_back({r, d, c, x_rho_index(), -1.0});
        }
    }
  }

  m.validate();
  if (classify_structure(m) != Structure::Weak)
    throw ValidationError("assembled market model must be weak");
  return m;
}

LcpBlock day_lcp(const PowerMarketInstance& inst, int d) {
  const QpBlock blk = build_reduced_producer_block(inst, d);
  const int nb = static_cast<int>(blk.n());
  LcpBlock l;
  l.q = Vec(2 * nb);
  l.q.head(nb) = blk.cost.constant;
  l.q.tail(nb) = -blk.rhs.constant;  // capacity rows: zmax - z >= 0
  l.n_x = Mat::Zero(2 * nb, market_n_x(inst));
  l.n_x.topRows(nb) = blk.cost.coeff;
  l.m = Mat::Zero(2 * nb, 2 * nb);
  l.m.topLeftCorner(nb, nb) = blk.quad;
  l.m.topRightCorner(nb, nb) = Mat::Identity(nb, nb);
  l.m.bottomLeftCorner(nb, nb) = -Mat::Identity(nb, nb);
  return l;
}

double unreduced_producer_profit(const PowerMarketInstance& inst, int d,
                                 int producer, const Vec& z_all,
                                 const Vec& sales, const Vec& arb, const Vec& w,
                                 double tax) {
  const int J = inst.J(), K = inst.K();
  const Vec gamma = effective_cost(inst, tax);
  double profit = 0.0;
  for (int k = 0; k < K; ++k) {
    double sold = 0.0;  // total sales into node k over all producers
    for (int i = 0; i < inst.I(); ++i) sold += sales[i * K + k];
    const double price = inst.alpha(k, d) - inst.beta(k, d) * (sold + arb[k]);
    double produced = 0.0;
    double cost = 0.0;
    for (int j = 0; j < J; ++j) {
      const double z = z_all[inst.ijk(producer, j, k)];
      produced += z;
      cost += gamma[inst.ijk(producer, j, k)] * z;
    }
    const double s = sales[producer * K + k];
    profit += price * s - cost - (s - produced) * w[k];
  }
  return profit;
}

double reduced_producer_profit(const PowerMarketInstance& inst, int d,
                               int producer, const Vec& z_all, const Vec& w,
                               double tax) {
  const int J = inst.J(), K = inst.K();
  const ArbitrageReduction red = arbitrage_reduction(inst, d);
  const Vec gamma = effective_cost(inst, tax);
  const double z_total = z_all.sum();
  double own = 0.0;
  double lin = 0.0;
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < K; ++k) {
      const double z = z_all[inst.ijk(producer, j, k)];
      own += z;
      lin += (gamma[inst.ijk(producer, j, k)] - w[k]) * z;
    }
  const double margin = red.h.dot(inst.alpha.col(d) - w) - z_total * red.hhat;
  return margin * own - lin;
}

}  // namespace trilevel
