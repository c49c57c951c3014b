#pragma once

#include <map>
#include <vector>

#include "trilevel/kernel.hpp"
#include "trilevel/program_ir.hpp"

namespace trilevel {

enum class PairFix { Undecided, LeftZero, RightZero };

/// Interval boxes for every program variable; products are relaxed over
/// these, so factors of bilinear terms need finite entries.
struct Boxes {
  Vec lo, hi;
};

/// Convex relaxation machinery shared by the search: one product variable
/// per registered bilinear term, four-inequality envelopes over the node
/// boxes (tangent/secant form for squares), exact convex rows kept.
class Relaxation {
 public:
  Relaxation(const SingleLevelProgram& program, double box_fallback);

  const SingleLevelProgram& program() const { return *program_; }
  int n_products() const { return static_cast<int>(terms_.size()); }
  const std::vector<BilinearTerm>& terms() const { return terms_; }

  /// Initial boxes from variable bounds, falling back to the configured
  /// width for unbounded factors of bilinear terms.
  Boxes root_boxes() const;

  /// Variables whose artificial fallback box may bind; reported when active.
  const std::vector<int>& fallback_boxed() const { return fallback_boxed_; }

  /// Builds the node subproblem in minimization form: program variables
  /// first, then one product variable per bilinear term.
  KernelProblem build(const Boxes& boxes,
                      const std::vector<PairFix>& fix) const;

  /// Pattern-fixed subproblem with every bilinear product replaced by its
  /// first-order expansion around `point` (no product variables); convex
  /// rows are kept exact. One step of a sequential bilinear scheme.
  KernelProblem build_at_point(const Boxes& boxes,
                               const std::vector<PairFix>& fix,
                               const Vec& point) const;

  /// Per-product violation |P - a*b| evaluated on a kernel point.
  Vec product_violations(const Vec& kernel_point) const;

  /// Worst violation attributable to each program variable (max over the
  /// products it participates in).
  std::map<int, double> factor_violations(const Vec& kernel_point) const;

 private:
  void envelope_rows(KernelBuilder& kb, int pvar, int a, int b,
                     const Boxes& boxes) const;
  /// Linearized copy of a quadratic expression with products replaced by
  /// their relaxation variables.
  std::vector<std::pair<int, double>> linearize(const QuadExpr& e,
                                                double* constant) const;

  const SingleLevelProgram* program_;
  double box_fallback_;
  std::vector<BilinearTerm> terms_;
  std::map<std::pair<int, int>, int> term_index_;
  std::vector<int> fallback_boxed_;
};

}  // namespace trilevel
