#pragma once

#include <string>
#include <vector>

#include "trilevel/program_ir.hpp"
#include "trilevel/relaxation.hpp"
#include "trilevel/verify.hpp"

namespace trilevel {

struct SolveLimits {
  double time_limit_s = std::numeric_limits<double>::infinity();
  long node_limit = -1;  // negative: unlimited
  double tol_abs = 1e-6;
  double tol_rel = 1e-5;
  double compl_tol = 1e-6;
  double fathom_tol = 1e-9;
  int threads = 1;
  double box_fallback = 1e3;   // artificial box for unbounded bilinear factors
  double min_box_width = 1e-7;
};

enum class SolveStatus {
  Optimal,
  Feasible,  // search exhausted its handles with a residual gap
  Infeasible,
  Unbounded,
  TimeLimit,
  NodeLimit,
};

inline const char* solve_status_str(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::TimeLimit: return "TimeLimit";
    case SolveStatus::NodeLimit: return "NodeLimit";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  Vec point;               // program variables at the incumbent
  bool has_point = false;
  double objective = 0.0;  // in the program's stated sense
  double best_bound = 0.0;
  double gap_abs = std::numeric_limits<double>::infinity();
  double gap_rel = std::numeric_limits<double>::infinity();
  long nodes = 0;
  double wall_s = 0.0;
  VerifyReport verification;
  std::vector<std::string> warnings;
};

double objective_value(const SingleLevelProgram& program, const Vec& point);

/// Best-first complementarity branch-and-bound over the relaxation: pairs
/// are split LeftZero/RightZero, then policy scalars and remaining bilinear
/// factors are bisected by largest envelope violation.
SolveResult branch_and_bound(const SingleLevelProgram& program,
                             const SolveLimits& limits = {});

}  // namespace trilevel
