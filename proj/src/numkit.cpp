#include "lipb/numkit.hpp"

#include <cmath>
#include <string>

#include "lipb/error.hpp"

namespace lipb {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

PowerIterationResult power_iteration(const Matrix& w, const Vector& u, int iters) {
  if (iters < 1) {
    throw std::invalid_argument("power_iteration: iters must be positive");
  }
  if (u.size() != w.rows()) {
    throw std::invalid_argument("power_iteration: u length must equal W rows");
  }
  require_finite(w, "power_iteration W");
  require_finite(u, "power_iteration u");

  PowerIterationResult out;
  if (w.squaredNorm() == 0.0) {
    out.u = u;
    out.degenerate = true;
    return out;
  }
  const double u_norm = u.norm();
  if (u_norm == 0.0) {
    throw std::invalid_argument("power_iteration: u must be nonzero");
  }

  Vector left = u / u_norm;
  Vector right(w.cols());
  for (int it = 0; it < iters; ++it) {
    right.noalias() = w.transpose() * left;
    double right_norm = right.norm();
    if (right_norm == 0.0) {
      // u is orthogonal to the column space; restart from the largest column.
      Eigen::Index col = 0;
      w.colwise().squaredNorm().maxCoeff(&col);
      left = w.col(col).normalized();
      right.noalias() = w.transpose() * left;
      right_norm = right.norm();
    }
    right /= right_norm;
    left.noalias() = w * right;
    left /= left.norm();
  }
  out.sigma = left.dot(w * right);
  out.u = std::move(left);
  return out;
}

double svd_max_singular(const Matrix& w) {
  require_finite(w, "svd_max_singular W");
  if (w.size() == 0) {
    return 0.0;
  }
  const Eigen::MatrixXd gram = w.transpose() * w;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  const double lambda_max = solver.eigenvalues().maxCoeff();
  return std::sqrt(std::max(lambda_max, 0.0));
}

Bimodality bimodality_coefficient(std::span<const double> x) {
  Bimodality out;
  const std::size_t n = x.size();
  if (n < 4) {
    out.degenerate = true;
    return out;
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double nd = static_cast<double>(n);
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  // Relative threshold: a spread this small is rounding noise around a constant.
  if (m2 <= 1e-28 * std::max(1.0, mean * mean)) {
    out.degenerate = true;
    return out;
  }
  out.skewness = m3 / std::pow(m2, 1.5);
  out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  const double correction = 3.0 * (nd - 1.0) * (nd - 1.0) / ((nd - 2.0) * (nd - 3.0));
  out.value = (out.skewness * out.skewness + 1.0) / (out.excess_kurtosis + correction);
  return out;
}

Matrix gaussian_sample(const RngStream& stream, std::size_t rows, std::size_t cols) {
  Engine engine = stream.engine();
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = engine.normal();
  }
  return m;
}

}  // namespace lipb
