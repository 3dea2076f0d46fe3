#pragma once

// Sparse LDL' for quasi-definite matrices with known pivot signs.
// Pivots of the wrong sign or too close to zero are replaced by
// sign * delta (dynamic regularization); refinement against the true
// matrix recovers the accuracy.

#include <Eigen/Sparse>

#include <vector>

namespace adn::conic::detail {

class QuasiDefiniteLdl {
 public:
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  /// `upper` holds the upper triangle (diagonal included) of the
  /// already permuted matrix. The pattern must stay fixed afterwards.
  void analyze(const SpMat& upper);
  /// Returns the number of regularized pivots, or -1 on a non-finite pivot.
  int factor(const SpMat& upper, const std::vector<int>& signs, double eps, double delta);
  void solve_in_place(Eigen::VectorXd& b) const;

 private:
  int n_ = 0;
  std::vector<int> etree_, lnz_, lp_, li_;
  std::vector<double> lx_, d_, dinv_;
};

}  // namespace adn::conic::detail
