#include "ldl.hpp"

#include <cmath>
#include <stdexcept>

namespace adn::conic::detail {

void QuasiDefiniteLdl::analyze(const SpMat& upper) {
  n_ = static_cast<int>(upper.cols());
  const int* ap = upper.outerIndexPtr();
  const int* ai = upper.innerIndexPtr();
  etree_.assign(static_cast<std::size_t>(n_), -1);
  lnz_.assign(static_cast<std::size_t>(n_), 0);
  std::vector<int> work(static_cast<std::size_t>(n_), -1);
  for (int j = 0; j < n_; ++j) {
    work[static_cast<std::size_t>(j)] = j;
    for (int p = ap[j]; p < ap[j + 1]; ++p) {
      int i = ai[p];
      if (i > j) throw std::logic_error("ldl: matrix is not upper triangular");
      while (work[static_cast<std::size_t>(i)] != j) {
        if (etree_[static_cast<std::size_t>(i)] == -1) etree_[static_cast<std::size_t>(i)] = j;
        ++lnz_[static_cast<std::size_t>(i)];
        work[static_cast<std::size_t>(i)] = j;
        i = etree_[static_cast<std::size_t>(i)];
      }
    }
  }
  lp_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (int i = 0; i < n_; ++i) lp_[static_cast<std::size_t>(i) + 1] = lp_[static_cast<std::size_t>(i)] + lnz_[static_cast<std::size_t>(i)];
  li_.assign(static_cast<std::size_t>(lp_.back()), 0);
  lx_.assign(static_cast<std::size_t>(lp_.back()), 0.0);
  d_.assign(static_cast<std::size_t>(n_), 0.0);
  dinv_.assign(static_cast<std::size_t>(n_), 0.0);
}

int QuasiDefiniteLdl::factor(const SpMat& upper, const std::vector<int>& signs, double eps, double delta) {
  const int* ap = upper.outerIndexPtr();
  const int* ai = upper.innerIndexPtr();
  const double* ax = upper.valuePtr();
  const auto n = static_cast<std::size_t>(n_);
  std::vector<char> marked(n, 0);
  std::vector<double> y(n, 0.0);
  std::vector<int> pattern(n), stack(n);
  std::vector<int> next(lp_.begin(), lp_.end() - 1);
  int regularized = 0;

  for (int k = 0; k < n_; ++k) {
    int count = 0;
    d_[static_cast<std::size_t>(k)] = 0.0;
    for (int p = ap[k]; p < ap[k + 1]; ++p) {
      const int b = ai[p];
      if (b == k) {
        d_[static_cast<std::size_t>(k)] = ax[p];
        continue;
      }
      y[static_cast<std::size_t>(b)] = ax[p];
      if (marked[static_cast<std::size_t>(b)]) continue;
      int depth = 0;
      int i = b;
      while (i != -1 && i < k && !marked[static_cast<std::size_t>(i)]) {
        marked[static_cast<std::size_t>(i)] = 1;
        stack[static_cast<std::size_t>(depth++)] = i;
        i = etree_[static_cast<std::size_t>(i)];
      }
      while (depth > 0) pattern[static_cast<std::size_t>(count++)] = stack[static_cast<std::size_t>(--depth)];
    }
    for (int t = count - 1; t >= 0; --t) {
      const auto c = static_cast<std::size_t>(pattern[static_cast<std::size_t>(t)]);
      const double yc = y[c];
      const int end = next[c];
      for (int j = lp_[c]; j < end; ++j) y[static_cast<std::size_t>(li_[static_cast<std::size_t>(j)])] -= lx_[static_cast<std::size_t>(j)] * yc;
      li_[static_cast<std::size_t>(end)] = k;
      const double l = yc * dinv_[c];
      lx_[static_cast<std::size_t>(end)] = l;
      d_[static_cast<std::size_t>(k)] -= yc * l;
      ++next[c];
      y[c] = 0.0;
      marked[c] = 0;
    }
    auto& dk = d_[static_cast<std::size_t>(k)];
    const int s = signs[static_cast<std::size_t>(k)];
    if (s * dk <= eps) {
      dk = s * delta;
      ++regularized;
    }
    if (!std::isfinite(dk)) return -1;
    dinv_[static_cast<std::size_t>(k)] = 1.0 / dk;
  }
  return regularized;
}

void QuasiDefiniteLdl::solve_in_place(Eigen::VectorXd& x) const {
  for (int i = 0; i < n_; ++i)
    for (int j = lp_[static_cast<std::size_t>(i)]; j < lp_[static_cast<std::size_t>(i) + 1]; ++j)
      x[li_[static_cast<std::size_t>(j)]] -= lx_[static_cast<std::size_t>(j)] * x[i];
  for (int i = 0; i < n_; ++i) x[i] *= dinv_[static_cast<std::size_t>(i)];
  for (int i = n_ - 1; i >= 0; --i)
    for (int j = lp_[static_cast<std::size_t>(i)]; j < lp_[static_cast<std::size_t>(i) + 1]; ++j)
      x[i] -= lx_[static_cast<std::size_t>(j)] * x[li_[static_cast<std::size_t>(j)]];
}

}  // namespace adn::conic::detail
