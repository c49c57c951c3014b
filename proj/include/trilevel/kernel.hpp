#pragma once

#include <limits>
#include <string>
#include <vector>

#include "trilevel/common.hpp"
#include "trilevel/linalg.hpp"

namespace trilevel {

/// Convex subproblem: linear or convex-quadratic objective, affine rows,
/// a small set of convex quadratic inequality rows, and variable bounds.
///   min 1/2 v'Qv + c'v + c0
///   s.t. A v {<=,=,>=} b,   1/2 v'Qj v + qj'v <= rj,   lb <= v <= ub
struct QuadRow {
  Mat q;      // PSD
  Vec lin;
  double rhs = 0.0;
};

struct KernelProblem {
  int n = 0;
  Vec c;
  double c0 = 0.0;
  Mat Q;  // may be 0x0 for a linear objective
  Mat A;
  Vec b;
  std::vector<Sense> sense;
  std::vector<QuadRow> qrows;
  Vec lb, ub;

  void validate() const;
};

/// Incremental construction helper used by the relaxation builder, the grid
/// oracle, and tests.
class KernelBuilder {
 public:
  int add_var(double lb = -std::numeric_limits<double>::infinity(),
              double ub = std::numeric_limits<double>::infinity());
  void obj_constant(double c0) { c0_ += c0; }
  void obj_lin(int i, double coef);
  /// Adds coef * v_i * v_j to the objective.
  void obj_quad(int i, int j, double coef);
  int add_affine(const std::vector<std::pair<int, double>>& terms, Sense sense,
                 double rhs);
  /// Adds a convex row sum(qterms) + sum(lterms) <= rhs where qterms are
  /// (i, j, coef) products.
  int add_qrow(const std::vector<std::tuple<int, int, double>>& qterms,
               const std::vector<std::pair<int, double>>& lterms, double rhs);
  KernelProblem build();

 private:
  std::vector<double> lb_, ub_;
  std::vector<std::pair<int, double>> obj_;
  std::vector<std::tuple<int, int, double>> objq_;
  double c0_ = 0.0;
  struct Row {
    std::vector<std::pair<int, double>> terms;
    Sense sense;
    double rhs;
  };
  std::vector<Row> rows_;
  struct QRowSpec {
    std::vector<std::tuple<int, int, double>> qterms;
    std::vector<std::pair<int, double>> lterms;
    double rhs;
  };
  std::vector<QRowSpec> qrows_;
};

enum class KernelStatus {
  Optimal,
  Infeasible,
  Unbounded,
  IterationLimit,
  NumericalTrouble,
};

inline const char* kernel_status_str(KernelStatus s) {
  switch (s) {
    case KernelStatus::Optimal: return "Optimal";
    case KernelStatus::Infeasible: return "Infeasible";
    case KernelStatus::Unbounded: return "Unbounded";
    case KernelStatus::IterationLimit: return "IterationLimit";
    case KernelStatus::NumericalTrouble: return "NumericalTrouble";
  }
  return "?";
}

struct KernelResult {
  KernelStatus status = KernelStatus::NumericalTrouble;
  Vec v;
  double obj = 0.0;
  /// Multiplier per affine row such that stationarity reads
  ///   Qv + c + sum_i dual_affine[i] * a_i + sum_j dual_quad[j] * grad g_j
  ///   + bound multipliers = 0,
  /// with dual_affine >= 0 on <= rows, <= 0 on >= rows, free on equalities.
  Vec dual_affine;
  Vec dual_quad;   // >= 0
  double kkt_residual = 0.0;
  double feas_residual = 0.0;
  int iterations = 0;
  /// Certificate of infeasibility over the affine rows (verified Farkas
  /// combination) when status == Infeasible and the conflict is affine.
  Vec farkas;
  bool farkas_verified = false;
};

struct KernelOptions {
  double tol = 1e-9;
  int max_iter = 120;
  bool polish = true;
};

/// Rejects nonconvex input (non-PSD objective or row forms) up front.
KernelResult solve_kernel(const KernelProblem& problem,
                          const KernelOptions& options = {});

}  // namespace trilevel
