#pragma once

#include <Eigen/Dense>

namespace trilevel {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Smallest eigenvalue of the symmetrized matrix; 0 for empty matrices.
inline double min_eigenvalue(const Mat& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// PSD test with an eigenvalue floor; matrices are symmetrized first so
/// floating-point input asymmetry does not fail the check.
inline bool is_psd(const Mat& m, double floor = -1e-9) {
  if (m.rows() != m.cols()) return false;
  return min_eigenvalue(m) >= floor;
}

}  // namespace trilevel
