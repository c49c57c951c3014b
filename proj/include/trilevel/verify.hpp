#pragma once

#include <string>
#include <vector>

#include "trilevel/program_ir.hpp"

namespace trilevel {

struct VerifyReport {
  double max_affine_residual = 0.0;
  std::string worst_affine;
  double max_quad_residual = 0.0;
  std::string worst_quad;
  double max_pair_product = 0.0;
  std::string worst_pair;
  double max_bound_violation = 0.0;
  std::string worst_bound;
  std::vector<double> group_gaps;  // raw duality-gap values per group

  bool pass(double tol) const {
    double worst_gap = 0.0;
    for (double g : group_gaps) worst_gap = std::max(worst_gap, g);
    return max_affine_residual <= tol && max_quad_residual <= tol &&
           max_pair_product <= tol && max_bound_violation <= tol &&
           worst_gap <= tol;
  }
};

/// Residual audit of a candidate point against every table of the program.
VerifyReport verify_solution(const SingleLevelProgram& program,
                             const Vec& point);

}  // namespace trilevel
