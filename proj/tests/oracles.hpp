#pragma once

// Reference computations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cd = std::complex<double>;

/// Monic characteristic polynomial coefficients c_0..c_n (c_n = 1) via
/// Faddeev-LeVerrier.
inline std::vector<double> characteristic_polynomial(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = a * m + c[n - k + 1] * I;
    c[n - k] = -(a * m).trace() / static_cast<double>(k);
  }
  return c;
}

inline cd eval_poly(const std::vector<double>& c, cd z) {
  cd v = 0;
  for (std::size_t i = c.size(); i-- > 0;) v = v * z + c[i];
  return v;
}

inline cd eval_derivative(const std::vector<double>& c, cd z) {
  cd v = 0;
  for (std::size_t i = c.size(); i-- > 1;) v = v * z + static_cast<double>(i) * c[i];
  return v;
}

/// Roots of a monic polynomial by Durand-Kerner, polished with Newton steps.
inline std::vector<cd> polynomial_roots(const std::vector<double>& c) {
  const std::size_t n = c.size() - 1;
  double bound = 0;
  for (std::size_t i = 0; i < n; ++i) bound = std::max(bound, std::abs(c[i]));
  bound += 1;
  std::vector<cd> z(n);
  const cd seed(0.4, 0.9);
  for (std::size_t i = 0; i < n; ++i) z[i] = bound * std::pow(seed, static_cast<double>(i));
  for (int it = 0; it < 2000; ++it) {
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cd denom = 1;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) denom *= z[i] - z[j];
      }
      const cd step = eval_poly(c, z[i]) / denom;
      z[i] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-15 * bound) break;
  }
  for (auto& r : z) {
    for (int it = 0; it < 5; ++it) {
      const cd d = eval_derivative(c, r);
      if (std::abs(d) == 0) break;
      r -= eval_poly(c, r) / d;
    }
  }
  return z;
}

inline std::vector<cd> eigenvalues(const Eigen::MatrixXd& a) {
  return polynomial_roots(characteristic_polynomial(a));
}

inline double spectral_radius(const Eigen::MatrixXd& a) {
  double r = 0;
  for (const auto& z : eigenvalues(a)) r = std::max(r, std::abs(z));
  return r;
}

/// X with AᵀXA − X = −Q from the Kronecker-product linear system.
inline Eigen::MatrixXd lyapunov_kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd big = Eigen::MatrixXd::Identity(n * n, n * n);
  // vec(AᵀXA) = (Aᵀ ⊗ Aᵀ) vec(X), column-major vec.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      big.block(i * n, j * n, n, n) -= a(j, i) * a.transpose();
    }
  }
  const Eigen::VectorXd vq = Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  const Eigen::VectorXd vx = big.fullPivLu().solve(vq);
  return Eigen::Map<const Eigen::MatrixXd>(vx.data(), n, n);
}

/// ΔN_k of the cumulative-sine model with rate 1/200 and decay 0.5.
inline double cumulative_sine_difference(long k) {
  return std::sin(static_cast<double>(k + 1) / 200.0) / std::sqrt(static_cast<double>(k + 2));
}

struct Random {
  std::mt19937_64 engine;
  explicit Random(std::uint64_t seed) : engine(seed * 0x9E3779B97F4A7C15ULL + 12345) {}

  double uniform(double lo = -1, double hi = 1) {
    return std::uniform_real_distribution<double>(lo, hi)(engine);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
  Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c, double scale = 1) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * uniform();
    }
    return m;
  }
  Eigen::VectorXd vector(Eigen::Index n, double scale = 1) { return matrix(n, 1, scale); }

  /// Random p×m with singular values bounded away from zero.
  Eigen::MatrixXd full_row_rank(Eigen::Index p, Eigen::Index m) {
    for (;;) {
      Eigen::MatrixXd a = matrix(p, m);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
      const auto& s = svd.singularValues();
      if (s(s.size() - 1) > 0.2 * s(0)) return a;
    }
  }

  /// Random dense matrix rescaled to a given spectral radius.
  Eigen::MatrixXd with_radius(Eigen::Index n, double rho) {
    for (;;) {
      Eigen::MatrixXd a = matrix(n, n);
      const double r = spectral_radius(a);
      if (r > 1e-3) return a * (rho / r);
    }
  }
};

/// Pairs each expected root with its nearest unused computed value and returns
/// the worst distance.
inline double matched_distance(std::vector<cd> expected, std::vector<cd> computed) {
  double worst = 0;
  for (const auto& e : expected) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < computed.size(); ++i) {
      if (std::abs(computed[i] - e) < std::abs(computed[best] - e)) best = i;
    }
    worst = std::max(worst, std::abs(computed[best] - e));
    computed.erase(computed.begin() + static_cast<long>(best));
  }
  return worst;
}

}  // namespace oracle
