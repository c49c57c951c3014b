#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trilevel/common.hpp"
#include "trilevel/linalg.hpp"

namespace trilevel {

// ---------------------------------------------------------------------------
// Trilevel block model
//
// Canonical minimization form on every level:
//   top:    min c1'x + d1'y + sum_b e1_b'z_b   s.t. A1 x + B1 y + sum C1_b z_b {sense} a1
//   middle: min d2(x)'y + sum_b e2_b(x)'z_b    s.t. A2 x + B2 y + sum C2_b(x) z_b >= a2,
//           y_j >= 0 unless flagged free
//   bottom: per block   min 1/2 z'F z + e3(x)'z  s.t. C3 z >= a3(x), z >= 0
//           or a single LCP block  0 <= z  _|_  q + Nx x + Ny y + M z >= 0
//
// Objective and constraint data that legitimately varies with the top-level
// variables is stored as explicit affine maps; dependence on middle-level
// variables is structurally impossible in block form, so weak structure is
// guaranteed by construction there.
// ---------------------------------------------------------------------------

/// v(x) = constant + coeff * x.  An empty coeff matrix means no x-dependence.
struct AffineMap {
  Vec constant;
  Mat coeff;  // rows() x n_x, or 0x0

  AffineMap() = default;
  explicit AffineMap(Vec c) : constant(std::move(c)) {}
  AffineMap(Vec c, Mat k) : constant(std::move(c)), coeff(std::move(k)) {}

  Eigen::Index rows() const { return constant.size(); }
  bool has_x() const { return coeff.size() > 0; }

  Vec eval(const Vec& x) const {
    if (!has_x()) return constant;
    return constant + coeff * x;
  }
};

/// Adds coef * x[xvar] to entry (row, col) of a middle-level constraint
/// block; this is how policy variables scale middle-level coefficients.
struct XCoupledEntry {
  int row = 0;    // middle-level constraint row
  int block = 0;  // bottom block owning the column
  int col = 0;    // column within the block
  int xvar = 0;
  double coef = 0.0;
};

struct QpBlock {
  Mat quad;        // F, symmetric PSD
  AffineMap cost;  // e3(x)
  Mat con;         // C3
  AffineMap rhs;   // a3(x)
  int group = 0;   // aggregation group (market model: day index)
  std::vector<std::string> z_names;

  Eigen::Index n() const { return quad.rows(); }
  Eigen::Index m() const { return con.rows(); }
};

struct LcpBlock {
  Vec q;
  Mat n_x;  // q.size() x n_x, may be empty (no top coupling)
  Mat n_y;  // q.size() x n_y, must be zero for weak structure
  Mat m;

  Eigen::Index n() const { return q.size(); }
};

enum class Structure { Weak, Strong };

struct TrilevelModel {
  int n_x = 0;
  int n_y = 0;

  std::vector<std::string> x_names, y_names;
  Vec x_lb, x_ub;                // policy-variable domains
  std::vector<bool> y_free;      // free middle variables get equality
                                 // stationarity rows instead of pairs

  // top level
  Vec c1, d1;
  std::vector<Vec> e1;           // per block, empty vector for LCP bottom
  Vec e1_lcp;                    // used when bottom is an LCP block
  Mat A1, B1;
  std::vector<Mat> C1;           // per block
  Mat C1_lcp;
  Vec a1;
  std::vector<Sense> top_sense;
  std::vector<std::string> top_row_names;

  // middle level
  AffineMap d2;                  // objective on y, affine in x
  std::vector<AffineMap> e2;     // objective on z_b, affine in x
  Vec e2_lcp;
  Mat A2, B2;
  std::vector<Mat> C2;
  Mat C2_lcp;
  std::vector<XCoupledEntry> C2x;
  Vec a2;
  std::vector<std::string> middle_row_names;

  // bottom level: exactly one of the two is populated
  std::vector<QpBlock> blocks;
  std::optional<LcpBlock> lcp;

  int n_groups = 1;

  // Block form is the default; an empty block list is a valid (pure bilevel)
  // bottom level.
  bool has_qp_bottom() const { return !lcp.has_value(); }
  int m2() const { return static_cast<int>(a2.size()); }
  int bottom_vars() const;         // n3: total bottom-level variables
  int bottom_constraints() const;  // m3: total bottom-level constraints

  /// Shape and PSD validation; throws ValidationError with the offending
  /// piece named.
  void validate() const;
};

/// Weak iff the bottom level is not parameterized by middle-level variables:
/// zero Ny in LCP form; block form is weak by construction.
Structure classify_structure(const TrilevelModel& model);

// ---------------------------------------------------------------------------
// Flat single-level program
// ---------------------------------------------------------------------------

enum class VarRole { Primal, Dual, Auxiliary };

enum class RowOrigin {
  Top,
  MiddleStat,
  MiddleFeas,
  BottomStat,
  BottomPrimal,
  BottomDual,
  DualityGap,
  SolutionSet,  // equality block pinning the middle copy to the bottom solution
  Identity,     // explicit dual-copy identities
  Aux,
};

struct Variable {
  std::string name;
  double lb = 0.0;
  double ub = std::numeric_limits<double>::infinity();
  VarRole role = VarRole::Primal;
};

/// Sparse linear expression: sum coef*v[idx] + constant.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  void add(int var, double coef) {
    if (coef != 0.0) terms.emplace_back(var, coef);
  }
  void canonicalize();
  double eval(const Vec& v) const;
  bool empty() const { return terms.empty() && constant == 0.0; }
};

struct QuadTerm {
  int i = 0, j = 0;  // i <= j after canonicalization
  double coef = 0.0; // coefficient of v[i]*v[j]
};

struct QuadExpr {
  std::vector<QuadTerm> quad;
  LinExpr lin;

  void add_quad(int i, int j, double coef) {
    if (coef != 0.0) quad.push_back({i, j, coef});
  }
  void canonicalize();
  double eval(const Vec& v) const;
  bool is_affine() const { return quad.empty(); }
};

struct AffineCon {
  LinExpr lhs;  // constant folded into lhs; compare against rhs
  Sense sense = Sense::Ge;
  double rhs = 0.0;
  RowOrigin origin = RowOrigin::Aux;
  std::string name;
  int group = -1;
};

struct QuadCon {
  QuadExpr lhs;
  Sense sense = Sense::Le;
  double rhs = 0.0;
  RowOrigin origin = RowOrigin::Aux;
  std::string name;
  int group = -1;
};

/// Reference to a constraint row in either table.
struct RowRef {
  enum class Table { Affine, Quad } table = Table::Affine;
  int index = -1;
  bool operator==(const RowRef&) const = default;
};

/// Two nonnegative quantities whose product must vanish: a nonnegative
/// variable paired with a row expression held >= 0 in its table.
struct ComplPair {
  int var = -1;
  RowRef row;
  std::string name;
  int group = -1;
};

/// SOS1 mirror of a complementarity pair (at most one member nonzero).
struct Sos1Group {
  int var = -1;
  RowRef row;
};

struct BilinearTerm {
  int a = -1, b = -1;  // a <= b; a == b marks a square
  bool operator==(const BilinearTerm&) const = default;
};

enum class ObjSense { Min, Max };

struct GroupMeta {
  std::string label;
  int gap_row = -1;   // quadratic duality-gap row for this group, if any
  QuadExpr gap_expr;  // the group's own duality-gap expression (metadata;
                      // populated by the strong-duality route even when the
                      // constraint row aggregates several groups)
};

struct SingleLevelProgram {
  ObjSense sense = ObjSense::Min;
  LinExpr objective;
  std::vector<Variable> vars;
  std::vector<AffineCon> affine;
  std::vector<QuadCon> quadratic;
  std::vector<ComplPair> pairs;
  std::vector<Sos1Group> sos1;
  std::vector<BilinearTerm> bilinear;
  std::vector<GroupMeta> groups;
  std::vector<int> policy_vars;  // branching scalars, boxed by construction
  /// Redundant rows implied by the complementarity tables (aggregated
  /// products summed to zero). They sharpen relaxations but add nothing to
  /// the feasible set, so they live outside the counted constraint tables.
  std::vector<QuadCon> cuts;

  int n() const { return static_cast<int>(vars.size()); }
  const QuadExpr* row_expr_quad(const RowRef& r) const;
  double row_value(const RowRef& r, const Vec& v) const;
  bool row_is_quadratic(const RowRef& r) const {
    return r.table == RowRef::Table::Quad;
  }

  /// Structural checks: variable references in range, pairs mirrored by
  /// SOS1 groups one-to-one, pair rows stored as `expr >= 0`.
  void validate() const;

  /// Collects every distinct product of two variables appearing in the
  /// quadratic tables into the bilinear registry.
  void rebuild_bilinear_registry();
};

// ---------------------------------------------------------------------------
// Size accounting
// ---------------------------------------------------------------------------

struct SizeReport {
  long variables = 0;
  long affine_constraints = 0;
  long quadratic_constraints = 0;
  long affine_sos1 = 0;
  long quadratic_sos1 = 0;
  long equality_constraints = 0;
  long complementarity_pairs = 0;
  long solution_set_equalities = 0;  // equality rows introduced by the
                                     // LCP solution-set reformulation
  bool operator==(const SizeReport&) const = default;
};

SizeReport count_sizes(const SingleLevelProgram& program);

/// Closed-form complementarity/equality predictions given middle and bottom
/// dimensions (n2 counts only sign-constrained middle variables).
struct SizeFormulas {
  long strong_duality_complementarities = 0;
  long lcp_complementarities = 0;
  long lcp_equalities = 0;
};

SizeFormulas predicted_sizes(int n2, int m2, int n3, int m3);

}  // namespace trilevel
