#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace kmono {

struct NnlsResult
{
  Eigen::VectorXd x;
  double residual_norm{ 0.0 };
  int iterations{ 0 };
};

//! Lawson-Hanson active-set solver for min ||A x - b||_2 subject to x >= 0.
inline NnlsResult
nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter = 0)
{
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  if (b.size() != m)
    throw ShapeError("nnls: right-hand side length does not match rows");
  if (max_iter <= 0)
    max_iter = static_cast<int>(3 * n + 30);

  // gradient threshold relative to the problem scale
  const double tol = 1e-16 * A.colwise().norm().maxCoeff() * std::max(b.norm(), 1e-300);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  Eigen::VectorXd w = A.transpose() * b;
  int iter = 0;

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[j])
        idx.push_back(j);
    Eigen::MatrixXd Ap(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
      Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Ap);
    qr.setThreshold(1e-15);
    Eigen::VectorXd zp = qr.solve(b);
    z.setZero(n);
    for (std::size_t c = 0; c < idx.size(); ++c)
      z[idx[c]] = zp[static_cast<Eigen::Index>(c)];
  };

  for (;;) {
    Eigen::Index jmax = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[j] && w[j] > wmax) {
        wmax = w[j];
        jmax = j;
      }
    if (jmax < 0)
      break;
    if (++iter > max_iter)
      break;
    passive[jmax] = true;

    Eigen::VectorXd z;
    for (int inner = 0; inner < 3 * n + 30; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && z[j] <= 0.0)
          feasible = false;
      if (feasible)
        break;
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && z[j] <= 0.0)
          alpha = std::min(alpha, x[j] / (x[j] - z[j]));
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && x[j] <= 0.0) {
          passive[j] = false;
          x[j] = 0.0;
        }
    }
    // entering column was numerically useless: keep previous solution
    bool moved = false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[j] && z[j] > 0.0)
        moved = true;
    if (!moved)
      break;
    for (Eigen::Index j = 0; j < n; ++j)
      x[j] = passive[j] ? std::max(0.0, z[j]) : 0.0;
    w = A.transpose() * (b - A * x);
    if (!passive[jmax])
      w[jmax] = 0.0; // guard against re-selecting a column that was just dropped
  }

  NnlsResult r;
  r.residual_norm = (A * x - b).norm();
  if (!std::isfinite(r.residual_norm))
    throw NumericError("nnls: non-finite residual");
  r.x = std::move(x);
  r.iterations = iter;
  return r;
}

} // namespace kmono
