#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "lipb/rng.hpp"

namespace lipb {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Throws NumericalError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

struct PowerIterationResult {
  double sigma = 0.0;  // Rayleigh-quotient estimate u^T W v
  Vector u;            // refined left singular vector, unit norm
  bool degenerate = false;  // W was the zero matrix; u returned unchanged
};

// Runs `iters` alternating steps v <- W^T u / |W^T u|, u <- W v / |W v|.
PowerIterationResult power_iteration(const Matrix& w, const Vector& u, int iters);

// Largest singular value from the eigen-decomposition of W^T W. Test oracle;
// cubic cost in the column count.
double svd_max_singular(const Matrix& w);

struct Bimodality {
  double value = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool degenerate = false;  // zero variance or fewer than four samples
};

// Sarle's bimodality coefficient (g1^2 + 1) / (g2 + 3(n-1)^2 / ((n-2)(n-3)))
// with moment-based skewness g1 and excess kurtosis g2.
Bimodality bimodality_coefficient(std::span<const double> x);

// i.i.d. standard normal matrix drawn from `stream`.
Matrix gaussian_sample(const RngStream& stream, std::size_t rows, std::size_t cols);

}  // namespace lipb
