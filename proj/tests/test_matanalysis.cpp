#include <gtest/gtest.h>

#include <sstream>

#include "iterlearn/matanalysis.hpp"
#include "iterlearn/matrix_io.hpp"
#include "oracles.hpp"

using namespace iterlearn;

namespace {

std::vector<oracle::cd> as_vector(const Eigen::VectorXcd& v) {
  return std::vector<oracle::cd>(v.data(), v.data() + v.size());
}

}  // namespace

TEST(Eigenvalues, IdentityHasUnitEigenvalues) {
  const auto ev = eigenvalues(Eigen::MatrixXd::Identity(3, 3));
  ASSERT_EQ(ev.size(), 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_EQ(ev(i).real(), 1.0);
    EXPECT_EQ(ev(i).imag(), 0.0);
  }
}

TEST(Eigenvalues, PurelyImaginaryPair) {
  Eigen::MatrixXd m(2, 2);
  m << 0, 1, -0.25, 0;
  const auto ev = as_vector(eigenvalues(m));
  EXPECT_LT(oracle::matched_distance({{0, 0.5}, {0, -0.5}}, ev), 1e-12);
}

TEST(Eigenvalues, BenchmarkStateMatrixMatchesPolynomialRoots) {
  Eigen::MatrixXd a0(3, 3);
  a0 << 0.72, 0, 0, 1, -1.04, -0.81, 0, 0.81, 0;
  const auto expected = oracle::eigenvalues(a0);
  const auto ev = as_vector(eigenvalues(a0));
  EXPECT_LT(oracle::matched_distance(expected, ev), 1e-9 * std::max(1.0, infinity_norm(a0)));
}

TEST(Eigenvalues, RandomMatricesMatchPolynomialRoots) {
  oracle::Random rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 4);
    const Eigen::MatrixXd m = rng.matrix(n, n, 2.0);
    const double tol = 1e-9 * std::max(1.0, infinity_norm(m));
    EXPECT_LT(oracle::matched_distance(oracle::eigenvalues(m), as_vector(eigenvalues(m))), tol)
        << m;
  }
}

TEST(Eigenvalues, RejectsNonSquareAndNonFinite) {
  EXPECT_THROW(eigenvalues(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
  m(0, 1) = std::nan("");
  EXPECT_THROW(eigenvalues(m), std::invalid_argument);
}

TEST(SpectralRadius, TrivialCases) {
  EXPECT_EQ(spectral_radius(Eigen::MatrixXd::Identity(4, 4)), 1.0);
  EXPECT_DOUBLE_EQ(spectral_radius(Eigen::Vector2d(0.5, -0.8).asDiagonal().toDenseMatrix()), 0.8);
  Eigen::MatrixXd nil(2, 2);
  nil << 0, 1, 0, 0;
  EXPECT_EQ(spectral_radius(nil), 0.0);
}

TEST(SpectralRadius, BoundedByEveryInducedNorm) {
  oracle::Random rng(2);
  for (int trial = 0; trial < 120; ++trial) {
    const int n = rng.integer(1, 8);
    const Eigen::MatrixXd m = rng.matrix(n, n, rng.uniform(0.1, 3.0));
    const double rho = spectral_radius(m);
    for (NormKind kind : {NormKind::one, NormKind::infinity, NormKind::two}) {
      EXPECT_LE(rho, induced_norm(m, kind) * (1 + 1e-12));
    }
  }
}

TEST(SpectralRadius, BlockUpperTriangularTakesMaxOfBlocks) {
  oracle::Random rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = rng.integer(1, 4);
    const int c = rng.integer(1, 4);
    const Eigen::MatrixXd A = rng.matrix(a, a);
    const Eigen::MatrixXd C = rng.matrix(c, c);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a + c, a + c);
    m.topLeftCorner(a, a) = A;
    m.topRightCorner(a, c) = rng.matrix(a, c);
    m.bottomRightCorner(c, c) = C;
    EXPECT_NEAR(spectral_radius(m), std::max(spectral_radius(A), spectral_radius(C)), 1e-8);
  }
}

TEST(SpectralRadius, SimilarityInvariance) {
  oracle::Random rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.integer(1, 6);
    const Eigen::MatrixXd m = rng.matrix(n, n);
    const Eigen::MatrixXd t = Eigen::MatrixXd::Identity(n, n) + 0.3 * rng.matrix(n, n);
    const Eigen::MatrixXd similar = t * m * t.inverse();
    EXPECT_NEAR(spectral_radius(similar), spectral_radius(m), 1e-7);
  }
}

TEST(InducedNorm, SmallCases) {
  Eigen::MatrixXd m(2, 2);
  m << 1, -2, 3, 4;
  EXPECT_EQ(induced_norm(m, NormKind::infinity), 7.0);
  EXPECT_EQ(induced_norm(m, NormKind::one), 6.0);
  EXPECT_DOUBLE_EQ(induced_norm(Eigen::Vector2d(3, -4).asDiagonal().toDenseMatrix(), NormKind::two), 4.0);
}

TEST(ContractionNorm, AlreadyContractiveScalarMatrix) {
  const auto w = contraction_norm((0.5 * Eigen::MatrixXd::Identity(3, 3)).eval(), 0.1);
  EXPECT_NEAR(w.attained_norm, 0.5, 1e-15);
}

TEST(ContractionNorm, NilpotentJordanBlock) {
  Eigen::MatrixXd m(2, 2);
  m << 0, 1, 0, 0;
  const auto w = contraction_norm(m, 0.1);
  EXPECT_LE(w.attained_norm, 0.1);
  EXPECT_NEAR(w.matrix_norm(m), w.attained_norm, 1e-15);
}

TEST(ContractionNorm, RandomMatrixWithKnownRadius) {
  oracle::Random rng(5);
  const Eigen::MatrixXd m = rng.with_radius(4, 0.9);
  const auto w = contraction_norm(m, 0.05);
  EXPECT_LE(w.attained_norm, 0.95);
  EXPECT_LE(w.matrix_norm(m), 0.95);
  EXPECT_GE(w.attained_norm, spectral_radius(m) - 1e-12);
}

TEST(ContractionNorm, WeightedVectorNormBoundsIteration) {
  oracle::Random rng(6);
  const Eigen::MatrixXd m = rng.with_radius(5, 0.8);
  const auto w = contraction_norm(m, 0.1);
  Eigen::VectorXd x = rng.vector(5);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd next = m * x;
    EXPECT_LE(w.vector_norm(next), w.attained_norm * w.vector_norm(x) * (1 + 1e-10) + 1e-300);
    x = next;
  }
}

TEST(ContractionNorm, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(contraction_norm(Eigen::MatrixXd::Identity(2, 2), 0.0), std::invalid_argument);
}

TEST(ContractionNorm, DefectiveBlockBeyondConditionCapFails) {
  // A large Jordan-like chain needs scaling far beyond the cap for tiny epsilon.
  const int n = 8;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) m(i, i + 1) = 1e3;
  EXPECT_THROW(contraction_norm(m, 1e-6), NumericError);
}

TEST(Definiteness, TrivialCases) {
  EXPECT_TRUE(is_negative_definite((-Eigen::MatrixXd::Identity(3, 3)).eval(), 0.0));
  EXPECT_FALSE(is_negative_definite(Eigen::MatrixXd::Identity(3, 3), 0.0));
  Eigen::MatrixXd m(2, 2);
  m << -1, 2, 2, -1;
  EXPECT_FALSE(is_negative_definite(m, 0.0));
}

TEST(Definiteness, AsymmetryBeyondThresholdIsAnError) {
  Eigen::MatrixXd m(2, 2);
  m << -1, 0.5, 0, -1;
  EXPECT_THROW(is_negative_definite(m, 0.0), std::invalid_argument);
  m(1, 0) = 0.5 + 1e-14;
  EXPECT_TRUE(is_negative_definite(m, 0.0));
}

TEST(Definiteness, DefaultToleranceScalesWithNorm) {
  Eigen::MatrixXd m = -Eigen::MatrixXd::Identity(2, 2);
  m(1, 1) = -1e-12;
  EXPECT_TRUE(is_negative_definite(m, 0.0));
  EXPECT_FALSE(is_negative_definite(m));
}

TEST(Rank, FullRowRank) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 0, 0, 0, 1, 0;
  EXPECT_TRUE(has_full_row_rank(m));
  m.row(1) = m.row(0);
  EXPECT_FALSE(has_full_row_rank(m));
  EXPECT_FALSE(has_full_row_rank(Eigen::MatrixXd::Identity(3, 2)));
}

TEST(MatrixText, RoundTripsExactly) {
  oracle::Random rng(7);
  Eigen::MatrixXd m = rng.matrix(3, 4, 1e3);
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = -2.5e-300;
  m(2, 3) = 0.1;
  std::stringstream ss;
  write_matrix(ss, m);
  const Eigen::MatrixXd back = read_matrix(ss);
  ASSERT_EQ(back.rows(), 3);
  ASSERT_EQ(back.cols(), 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_EQ(back.data()[i], m.data()[i]);
}

TEST(MatrixText, RejectsMalformedInput) {
  std::stringstream short_row("2 2\n1 2\n3\n");
  EXPECT_THROW(read_matrix(short_row), ParseError);
  std::stringstream bad_header("x 2\n");
  EXPECT_THROW(read_matrix(bad_header), ParseError);
  std::stringstream not_number("1 1\nabc\n");
  EXPECT_THROW(read_matrix(not_number), ParseError);
}

TEST(MatrixText, FormatsSeventeenDigits) {
  EXPECT_EQ(format_decimal(0.1), "0.10000000000000001");
  EXPECT_EQ(format_decimal(1.0), "1");
}
