#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trilevel/market.hpp"
#include "trilevel/program_ir.hpp"

namespace trilevel {

struct OracleOptions {
  double x_step = 0.5;
  double x_max = -1.0;  // negative: saturation tax of the instance
  double rho_step = 0.05;
  double rho_max = 1.0;
  bool sweep_rho = true;
  double rho_fixed = 0.0;   // used when sweep_rho is false
  double penalty = 10.0;    // duality-gap penalty weight (adapted upward)
  double fee_damping = 0.5;
  int max_fee_iters = 200;
  double fee_tol = 1e-9;
  double gap_tol = 1e-8;
  int threads = 1;
  bool lexicographic = true;  // re-optimize the regulator among operator ties
};

struct DayEquilibrium {
  Vec z, lam;             // production and capacity duals
  Vec y, w;               // net imports and wheeling fees
  Vec phi_minus, phi_plus, psi;
  double gap = 0.0;       // producer-block duality gap
  double fee_residual = 0.0;
  int fee_iterations = 0;
};

struct EquilibriumPoint {
  bool feasible = false;
  std::string note;
  double objective = 0.0;  // regulator value, maximization sense
  double emissions = 0.0;
  double production = 0.0;
  double renewable_share = 0.0;
  std::vector<DayEquilibrium> days;
};

/// Market equilibrium at a fixed policy: per-day convex programs with the
/// duality gap as an exact penalty, iterated to a fixed point of the
/// congestion fees, then (optionally) a lexicographic regulator pass over
/// the remaining operator ties.
EquilibriumPoint solve_equilibrium(const PowerMarketInstance& inst,
                                   double production_weight, double tax,
                                   double rho, const OracleOptions& opt = {});

struct SweepRow {
  double tax = 0.0, rho = 0.0;
  bool feasible = false;
  std::string note;
  double objective = 0.0, emissions = 0.0, production = 0.0,
         renewable_share = 0.0;
};

struct OracleResult {
  bool found = false;
  double best_tax = 0.0, best_rho = 0.0;
  double objective = 0.0;
  EquilibriumPoint best;
  std::vector<SweepRow> sweep;
  double x_step_used = 0.0, rho_step_used = 0.0;
};

/// Full policy sweep; per-point failures are recorded in the table rather
/// than aborting the sweep.
OracleResult grid_oracle(const PowerMarketInstance& inst,
                         double production_weight,
                         const OracleOptions& opt = {});

/// Lifts an equilibrium point into the variable space of the assembled
/// per-day optimality system (canonical multipliers; the gap multiplier is
/// one and the dual copy equals the bottom solution).
Vec embed_equilibrium(const PowerMarketInstance& inst,
                      const SingleLevelProgram& program, double tax,
                      double rho, const EquilibriumPoint& point);

/// Capacity-clipped closed forms for the single-node analytic cases.
double cournot_monopoly_total(double alpha, double beta, double gamma,
                              double zmax);
double cournot_duopoly_each(double alpha, double beta, double gamma,
                            double zmax);

}  // namespace trilevel
