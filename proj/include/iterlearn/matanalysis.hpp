#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace iterlearn {

/// Raised when an iterative numerical method fails or a numerically
/// meaningful result cannot be produced (non-convergence, excessive
/// conditioning, divergence, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NormKind { one, infinity, two };

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(who) + ": matrix must be square and non-empty, got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": matrix has non-finite entries");
  }
}

}  // namespace detail

/// Max row abs sum. Works for real and complex matrices.
template <typename Derived>
typename Eigen::NumTraits<typename Derived::Scalar>::Real infinity_norm(
    const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

template <typename Derived>
typename Derived::Scalar induced_norm(const Eigen::MatrixBase<Derived>& m, NormKind kind) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  switch (kind) {
    case NormKind::one:
      return m.cwiseAbs().colwise().sum().maxCoeff();
    case NormKind::infinity:
      return infinity_norm(m);
    case NormKind::two: {
      Eigen::JacobiSVD<MatrixX<Scalar>> svd(m.eval());
      return svd.singularValues()(0);
    }
  }
  return Scalar(0);
}

/// All eigenvalues of a real square matrix with algebraic multiplicity.
///
/// Hessenberg reduction followed by Francis double-shift QR; the iteration
/// budget is 100·n sweeps in total. Throws NumericError on non-convergence.
template <typename Derived>
VectorX<std::complex<typename Derived::Scalar>> eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(m, "eigenvalues");
  detail::require_finite(m, "eigenvalues");
  const Eigen::Index n = m.rows();
  if (n == 1) {
    VectorX<std::complex<Scalar>> out(1);
    out(0) = std::complex<Scalar>(m(0, 0), Scalar(0));
    return out;
  }
  Eigen::EigenSolver<MatrixX<Scalar>> solver;
  solver.setMaxIterations(100 * n);
  solver.compute(m.eval(), /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalues: QR iteration did not converge within " +
                       std::to_string(100 * n) + " iterations");
  }
  return solver.eigenvalues();
}

template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& m) {
  return eigenvalues(m).cwiseAbs().maxCoeff();
}

/// Numerical rank from singular values above `rel_tol` times the largest one.
template <typename Derived>
Eigen::Index numerical_rank(const Eigen::MatrixBase<Derived>& m,
                            typename Derived::Scalar rel_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m.eval());
  const auto& s = svd.singularValues();
  if (s(0) == Scalar(0)) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

template <typename Derived>
bool has_full_row_rank(const Eigen::MatrixBase<Derived>& m,
                       typename Derived::Scalar rel_tol = 1e-10) {
  return m.rows() <= m.cols() && numerical_rank(m, rel_tol) == m.rows();
}

/// A weighted infinity norm ‖x‖_W = ‖W x‖_∞ under which a given matrix is
/// (nearly) as contractive as its spectral radius allows.
///
/// The weight is complex: its rows come from the complex Schur vectors, which
/// is what lets matrices with complex eigenvalues reach ρ + ε in a max-norm.
template <typename Scalar>
struct WeightedNorm {
  MatrixX<std::complex<Scalar>> weight;
  MatrixX<std::complex<Scalar>> weight_inverse;
  Scalar attained_norm = 0;
  Scalar condition_number = 1;

  /// ‖W x‖_∞ for a real vector.
  template <typename Derived>
  Scalar vector_norm(const Eigen::MatrixBase<Derived>& x) const {
    return (weight * x.template cast<std::complex<Scalar>>()).cwiseAbs().maxCoeff();
  }

  /// ‖W M W⁻¹‖_∞ for a real matrix of matching size.
  template <typename Derived>
  Scalar matrix_norm(const Eigen::MatrixBase<Derived>& m) const {
    return infinity_norm((weight * m.template cast<std::complex<Scalar>>() * weight_inverse).eval());
  }
};

constexpr double kContractionConditionCap = 1e12;

/// Builds W with ‖W M W⁻¹‖_∞ ≤ ρ(M) + epsilon.
///
/// Complex Schur form M = U T Uᴴ, then W = D Uᴴ with D = diag(1, t⁻¹, t⁻², ...)
/// shrinking the strictly upper part of T geometrically. The largest t meeting
/// the bound (with half of epsilon held back for rounding) is found by bisection.
/// Throws NumericError if cond(W) would exceed 1e12 or the bound is not met.
template <typename Derived>
WeightedNorm<typename Derived::Scalar> contraction_norm(const Eigen::MatrixBase<Derived>& m,
                                                        typename Derived::Scalar epsilon) {
  using Scalar = typename Derived::Scalar;
  using Complex = std::complex<Scalar>;
  detail::require_square(m, "contraction_norm");
  detail::require_finite(m, "contraction_norm");
  if (!(epsilon > Scalar(0))) {
    throw std::invalid_argument("contraction_norm: epsilon must be positive");
  }
  const Eigen::Index n = m.rows();
  const Scalar rho = spectral_radius(m);
  const Scalar target = rho + epsilon / 2;

  Eigen::ComplexSchur<MatrixX<Complex>> schur;
  schur.setMaxIterations(100 * n);
  schur.compute(m.template cast<Complex>().eval());
  if (schur.info() != Eigen::Success) {
    throw NumericError("contraction_norm: Schur iteration did not converge");
  }
  const MatrixX<Complex>& T = schur.matrixT();
  const MatrixX<Complex>& U = schur.matrixU();
  const MatrixX<Scalar> abs_t = T.cwiseAbs();

  auto scaled_norm = [&](Scalar t) {
    Scalar worst = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Scalar row = abs_t(i, i);
      Scalar factor = 1;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        factor *= t;
        row += abs_t(i, j) * factor;
      }
      worst = std::max(worst, row);
    }
    return worst;
  };

  Scalar t = 1;
  if (n > 1 && scaled_norm(t) > target) {
    const Scalar t_min =
        std::pow(Scalar(kContractionConditionCap), -Scalar(1) / static_cast<Scalar>(n - 1));
    if (scaled_norm(t_min) > target) {
      throw NumericError("contraction_norm: required weight exceeds condition cap 1e12");
    }
    Scalar lo = std::log(t_min);
    Scalar hi = 0;
    for (int it = 0; it < 100; ++it) {
      const Scalar mid = (lo + hi) / 2;
      if (scaled_norm(std::exp(mid)) <= target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    t = std::exp(lo);
  }

  VectorX<Complex> d(n);
  VectorX<Complex> d_inv(n);
  Scalar power = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i) = Complex(1 / power, 0);
    d_inv(i) = Complex(power, 0);
    power *= t;
  }

  WeightedNorm<Scalar> out;
  out.weight = d.asDiagonal() * U.adjoint();
  out.weight_inverse = U * d_inv.asDiagonal();
  out.condition_number = 1 / std::pow(t, static_cast<Scalar>(n - 1));
  out.attained_norm = out.matrix_norm(m);
  if (!(out.attained_norm <= rho + epsilon)) {
    throw NumericError("contraction_norm: rounding prevented reaching the requested bound");
  }
  return out;
}

constexpr double kAsymmetryTolerance = 1e-10;

/// Symmetric part (S + Sᵀ)/2 after checking relative asymmetry is within 1e-10.
template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(s, "symmetrized");
  detail::require_finite(s, "symmetrized");
  const Scalar scale = std::max(infinity_norm(s), std::numeric_limits<Scalar>::min());
  const MatrixX<Scalar> skew = s - s.transpose();
  if (infinity_norm(skew) > Scalar(kAsymmetryTolerance) * scale) {
    throw std::invalid_argument("symmetrized: matrix is not symmetric within relative 1e-10");
  }
  return (s + s.transpose()) / Scalar(2);
}

/// Eigenvalues of the symmetrized matrix, ascending.
template <typename Derived>
VectorX<typename Derived::Scalar> symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(symmetrized(s), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericError("symmetric_eigenvalues: solver did not converge");
  }
  return solver.eigenvalues();
}

/// True iff every eigenvalue of (S + Sᵀ)/2 is below −tol. A negative tol
/// selects the default 1e-10·‖S‖_∞.
template <typename Derived>
bool is_negative_definite(const Eigen::MatrixBase<Derived>& s,
                          typename Derived::Scalar tol = -1) {
  using Scalar = typename Derived::Scalar;
  if (tol < Scalar(0)) tol = Scalar(1e-10) * infinity_norm(s);
  return symmetric_eigenvalues(s).maxCoeff() < -tol;
}

template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& s,
                          typename Derived::Scalar tol = -1) {
  return is_negative_definite((-s).eval(), tol);
}

}  // namespace iterlearn
