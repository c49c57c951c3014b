#pragma once

#include "trilevel/program_ir.hpp"

namespace trilevel {

/// How many duality-gap rows the strong-duality route emits: one for the
/// whole model (default; smallest program), one per block group (e.g. per
/// day), or one per block (debugging).
enum class GapAggregation { Model, Group, Block };

struct ReformulateOptions {
  GapAggregation aggregate = GapAggregation::Model;
  bool identity_rows = true;  // explicit dual-copy identities zc = z
};

/// Single-level program built from middle-level optimality conditions plus
/// bottom-level primal/dual feasibility and an aggregated duality-gap row.
/// Requires weak structure and a block-form bottom level.
SingleLevelProgram strong_duality_reformulate(const TrilevelModel& model,
                                              const ReformulateOptions& opts = {});

/// Single-level program built from the polyhedral description of the bottom
/// complementarity solution set (auxiliary solution, its multipliers, and the
/// solution-set equality block). Requires weak structure and a PSD bottom.
SingleLevelProgram lcp_reformulate(const TrilevelModel& model);

/// Stacks the per-block optimality systems into one complementarity block in
/// (z, multiplier) order per block, blocks concatenated in model order.
LcpBlock compile_bottom_lcp(const TrilevelModel& model);

/// Lagrangian dual of a convex QP block:
///   max -1/2 z'Fz + a(x)'p   s.t.  C'p - Fz <= e(x),  p >= 0.
/// When F == 0 this degenerates to the familiar LP dual and carries no z.
struct DualQp {
  Mat quad;       // F
  Mat con;        // C
  AffineMap obj;  // a(x), objective coefficients on p
  AffineMap rhs;  // e(x), constraint right-hand side
  bool has_z = false;
};

DualQp dualize_qp(const QpBlock& block);

}  // namespace trilevel
