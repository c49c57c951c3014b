#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trilevel/program_ir.hpp"

namespace trilevel {

// ---------------------------------------------------------------------------
// Power-market instance data
// ---------------------------------------------------------------------------

struct Line {
  std::string id;
  double t_minus = 0.0;  // limit against the reference direction, MW
  double t_plus = 0.0;   // limit along the reference direction, MW
};

struct Source {
  std::string id;
  bool renewable = false;
};

/// All exogenous market data. Index convention throughout: i producers,
/// j sources, k nodes, d representative days; flat offsets are produced by
/// the ijk()/ijkd() helpers below.
struct PowerMarketInstance {
  std::vector<std::string> nodes;
  std::vector<Line> lines;
  Mat ptdf;  // |K| x |A|, flow on line a = sum_k ptdf(k,a) * net import k
  std::vector<std::string> producers;
  std::vector<Source> sources;
  Vec eta;          // tCO2/MWh, (i,j,k)
  Vec nu;           // EUR/MWh, (i,j,k)
  Vec zmax;         // MW, (i,j,k,d)
  Mat alpha;        // EUR/MWh, (k,d)
  Mat beta;         // EUR/MWh per MW, (k,d)
  Vec day_weights;  // P_d, sums to one

  int I() const { return static_cast<int>(producers.size()); }
  int J() const { return static_cast<int>(sources.size()); }
  int K() const { return static_cast<int>(nodes.size()); }
  int A() const { return static_cast<int>(lines.size()); }
  int D() const { return static_cast<int>(day_weights.size()); }

  int ijk(int i, int j, int k) const { return (i * J() + j) * K() + k; }
  int ijkd(int i, int j, int k, int d) const {
    return ijk(i, j, k) * D() + d;
  }

  int renewable_count() const;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

struct RegulatorPolicy {
  double tax = 0.0;             // EUR/tCO2
  double min_renewable = 0.0;   // share in [0,1]
  double production_weight = 0.5;  // r in (0,1)

  void validate() const;
};

// ---------------------------------------------------------------------------
// Arbitrage reduction (per day): closed-form elimination of the price-taking
// arbitrager from the producer problems.
// ---------------------------------------------------------------------------

struct ArbitrageReduction {
  double hhat = 0.0;  // 1 / sum_k beta_k^-1
  Vec h;              // beta_k^-1 * hhat, sums to one
  Mat L;              // symmetric |K| x |K| response matrix

  /// Arbitrage quantities implied by nodal totals Z_k and fees w.
  Vec arbitrage(const Vec& z_node, const Vec& alpha, const Vec& w) const;
  /// Hub price implied by the total Z and fees w.
  double hub_price(double z_total, const Vec& alpha, const Vec& w) const;
};

ArbitrageReduction arbitrage_reduction(const PowerMarketInstance& inst, int d);

/// Max residual of the closed-form (a, hub price) in the arbitrager
/// optimality system for given nodal totals and fees.
double arbitrage_residual(const PowerMarketInstance& inst, int d,
                          const ArbitrageReduction& red, const Vec& z_node,
                          const Vec& w);

/// Effective marginal costs nu + eta * tax, flattened (i,j,k).
Vec effective_cost(const PowerMarketInstance& inst, double tax);

/// Smallest tax at which every emitting source is priced above the highest
/// demand intercept; beyond it the tax has no further behavioral effect.
double saturation_tax(const PowerMarketInstance& inst);

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

/// Cournot interaction matrix for one day: 2*hhat on same-producer entries,
/// hhat across producers. Positive semidefinite.
Mat cournot_interaction(const PowerMarketInstance& inst, int d);

/// One reduced producer-side block per day over all producers jointly; the
/// stacked first-order conditions reproduce every producer's best response.
QpBlock build_reduced_producer_block(const PowerMarketInstance& inst, int d);

/// Assembles the full three-level model: regulator objective over (tax, rho),
/// per-day system-operator problems, reduced producer blocks, and the
/// market-clearing rows held at the top level with the fees as variables.
TrilevelModel build_trilevel(const PowerMarketInstance& inst,
                             double production_weight);

/// Bottom-level complementarity system for one day in (z, lambda) order.
LcpBlock day_lcp(const PowerMarketInstance& inst, int d);

struct MarketKktSystem {
  SingleLevelProgram program;       // per-day duality-gap rows
  std::vector<LcpBlock> day_lcps;   // bottom complementarity systems
};

/// Full per-day complementarity system: producer stationarity with the
/// renewable-share indicator, primal/dual feasibility copies, line and share
/// rows, per-day duality-gap rows, fee definitions and market clearing.
MarketKktSystem assemble_kkt_system(const PowerMarketInstance& inst,
                                    double production_weight);

/// Producer profit evaluated on the pre-reduction formulation (sales and
/// arbitrage kept explicit); used to validate the reduced objective.
double unreduced_producer_profit(const PowerMarketInstance& inst, int d,
                                 int producer, const Vec& z_all,
                                 const Vec& sales, const Vec& arb,
                                 const Vec& w, double tax);

/// Reduced objective for one producer at the same point (maximization form).
double reduced_producer_profit(const PowerMarketInstance& inst, int d,
                               int producer, const Vec& z_all, const Vec& w,
                               double tax);

// ---------------------------------------------------------------------------
// Random instances and fixtures
// ---------------------------------------------------------------------------

// Variable/row layout of the assembled model. Top-level vector x holds the
// policy scalars first, then the per-day wheeling fees; middle-level y holds
// the per-day net imports.
inline int x_tax_index() { return 0; }
inline int x_rho_index() { return 1; }
inline int x_w_index(const PowerMarketInstance& inst, int k, int d) {
  return 2 + d * inst.K() + k;
}
inline int market_n_x(const PowerMarketInstance& inst) {
  return 2 + inst.K() * inst.D();
}
inline int y_index(const PowerMarketInstance& inst, int k, int d) {
  return d * inst.K() + k;
}
inline int mid_rows_per_day(const PowerMarketInstance& inst) {
  return 2 * inst.A() + inst.K();
}
inline int phi_minus_row(const PowerMarketInstance& inst, int a, int d) {
  return d * mid_rows_per_day(inst) + a;
}
inline int phi_plus_row(const PowerMarketInstance& inst, int a, int d) {
  return d * mid_rows_per_day(inst) + inst.A() + a;
}
inline int psi_row(const PowerMarketInstance& inst, int k, int d) {
  return d * mid_rows_per_day(inst) + 2 * inst.A() + k;
}
inline int clearing_row(const PowerMarketInstance& inst, int k, int d) {
  return d * inst.K() + k;
}

enum class Topology { Star, Ring, Complete };

struct GenDims {
  int producers = 2, sources = 5, nodes = 3, days = 3;
};

struct GenRanges {
  double alpha_lo = 40, alpha_hi = 80;
  double beta_lo = 0.08, beta_hi = 0.3;
  double nu_fossil_lo = 8, nu_fossil_hi = 40;
  double nu_renew_lo = 0, nu_renew_hi = 3;
  double eta_lo = 0.3, eta_hi = 1.0;
  double zmax_lo = 20, zmax_hi = 100;
  double avail_lo = 0.25, avail_hi = 1.0;  // renewable day availability
  double line_lo = 10, line_hi = 60;
  double renewable_fraction = 0.4;
  Topology topology = Topology::Star;

  void validate() const;
};

/// Deterministic random instance for a seed; identical seeds produce
/// identical instances.
PowerMarketInstance generate_instance(std::uint64_t seed, const GenDims& dims,
                                      const GenRanges& ranges = {});

/// DC power transfer distribution factors for unit reactances with node 0 as
/// the reference; reference-node sensitivities are zero.
Mat dc_ptdf(int nodes, const std::vector<std::pair<int, int>>& arcs);

PowerMarketInstance monopoly_fixture();
PowerMarketInstance duopoly_fixture();
PowerMarketInstance two_node_two_day_fixture();
PowerMarketInstance nordic5_fixture();

}  // namespace trilevel
