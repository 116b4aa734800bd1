#pragma once

// Reference implementations used as test oracles. They are written from the
// defining formulas and share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "lipb/evalkit.hpp"
#include "lipb/header.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// KL(N(mu, e^{2 rho}) || N(0, s0^2)) summed elementwise.
inline double closed_form_kl(const lipb::Matrix& mu, const lipb::Matrix& rho, double s0) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double s = std::exp(rho.data()[i]);
    kl += std::log(s0 / s) + (s * s + mu.data()[i] * mu.data()[i]) / (2 * s0 * s0) - 0.5;
  }
  return kl;
}

struct HeaderParams {
  lipb::Matrix mu1, rho1, mu2, rho2;

  static HeaderParams of(const lipb::BayesHeader& h) {
    return {h.layer1.mu, h.layer1.rho, h.layer2.mu, h.layer2.rho};
  }
};

// Negative ELBO of one frozen posterior draw: both epsilons and both
// spectral divisors are taken from `d` and held fixed.
inline double header_loss(const HeaderParams& p, const lipb::DrawRecord& d, const lipb::Matrix& z,
                          const std::vector<int>& y, double beta, double s0) {
  lipb::Matrix w1 = (p.mu1.array() + p.rho1.array().exp() * d.eps1.array()) / d.divisor1;
  lipb::Matrix w2 = (p.mu2.array() + p.rho2.array().exp() * d.eps2.array()) / d.divisor2;
  lipb::Matrix h = (z * w1.transpose()).cwiseMax(0.0);
  lipb::Matrix logits = h * w2.transpose();
  double ce = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    ce += lse - logits(i, y[static_cast<std::size_t>(i)]);
  }
  ce /= static_cast<double>(logits.rows());
  return ce + beta * (closed_form_kl(p.mu1, p.rho1, s0) + closed_form_kl(p.mu2, p.rho2, s0));
}

// Largest relative error between the analytic ELBO gradients and central
// finite differences of header_loss with step h.
inline double worst_gradient_error(const HeaderParams& p, const lipb::DrawRecord& d,
                                   const lipb::Matrix& z, const std::vector<int>& y, double beta,
                                   double s0, const lipb::HeaderGrads& g, double h = 1e-5) {
  double worst = 0.0;
  auto probe = [&](lipb::Matrix HeaderParams::*field, const lipb::Matrix& analytic) {
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      HeaderParams hi = p, lo = p;
      (hi.*field).data()[i] += h;
      (lo.*field).data()[i] -= h;
      const double fd =
          (header_loss(hi, d, z, y, beta, s0) - header_loss(lo, d, z, y, beta, s0)) / (2 * h);
      worst = std::max(worst, rel_err(analytic.data()[i], fd));
    }
  };
  probe(&HeaderParams::mu1, g.mu1);
  probe(&HeaderParams::rho1, g.rho1);
  probe(&HeaderParams::mu2, g.mu2);
  probe(&HeaderParams::rho2, g.rho2);
  return worst;
}

// All positive-negative pairs, half credit for ties.
inline double pairwise_auc(const lipb::ScoredTruth& st) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < st.scores.size(); ++i) {
    if (!st.truth[i]) continue;
    for (std::size_t j = 0; j < st.scores.size(); ++j) {
      if (st.truth[j]) continue;
      pairs += 1.0;
      if (st.scores[i] > st.scores[j]) credit += 1.0;
      if (st.scores[i] == st.scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Thresholds at every distinct score, highest first; flag score >= t and add
// the recall gain times the precision at that threshold.
inline double threshold_pr(const lipb::ScoredTruth& st) {
  std::set<double, std::greater<>> thresholds(st.scores.begin(), st.scores.end());
  double pos = 0.0;
  for (bool t : st.truth) pos += t ? 1.0 : 0.0;
  double area = 0.0, prev = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, flagged = 0.0;
    for (std::size_t i = 0; i < st.scores.size(); ++i) {
      if (st.scores[i] >= t) {
        flagged += 1.0;
        tp += st.truth[i] ? 1.0 : 0.0;
      }
    }
    area += (tp / pos - prev) * (tp / flagged);
    prev = tp / pos;
  }
  return area;
}

// Coarse-grid scores so that ties are common; rows 0 and 1 fix both classes.
inline lipb::ScoredTruth random_scored(std::size_t n, std::uint64_t seed) {
  lipb::Engine e(seed);
  lipb::ScoredTruth st;
  for (std::size_t i = 0; i < n; ++i) {
    st.scores.push_back(static_cast<double>(e.below(5)) / 4.0);
    st.truth.push_back(e.below(3) == 0);
  }
  st.truth[0] = true;
  st.truth[1] = false;
  return st;
}

}  // namespace oracle
