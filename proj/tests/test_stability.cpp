#include <gtest/gtest.h>

#include "iterlearn/learner.hpp"
#include "iterlearn/matanalysis.hpp"
#include "iterlearn/stability.hpp"
#include "oracles.hpp"

using namespace iterlearn;

namespace {

Eigen::MatrixXd eye(Eigen::Index n) { return Eigen::MatrixXd::Identity(n, n); }
Eigen::MatrixXd zeros(Eigen::Index r, Eigen::Index c) { return Eigen::MatrixXd::Zero(r, c); }

Eigen::MatrixXd blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                       const Eigen::MatrixXd& d) {
  Eigen::MatrixXd m(a.rows() + c.rows(), a.cols() + b.cols());
  m << a, b, c, d;
  return m;
}

// Extended-system pieces written out by hand.
struct Pieces {
  Eigen::MatrixXd Abar, Cbar, F, Lbar;
};

Pieces pieces(Eigen::Index p, const ObserverGain& g) {
  Pieces s;
  s.Abar = blocks(eye(p), eye(p), zeros(p, p), eye(p));
  s.Cbar = blocks(eye(p), zeros(p, p), zeros(0, p), zeros(0, p));
  s.F = blocks(zeros(p, p), eye(p), zeros(0, p), zeros(0, p));
  s.Lbar = blocks(g.L1, zeros(p, 0), g.L2, zeros(p, 0));
  return s;
}

struct Instance {
  Eigen::MatrixXd P0;
  GainSet gains;
  StructuredUncertainty structure;
};

Instance random_instance(oracle::Random& rng, int p, double phi_scale) {
  Instance in;
  const int m = rng.integer(p, p + 1);
  in.P0 = rng.full_row_rank(p, m);
  in.gains.K = rng.uniform(0.3, 0.8) * synth_H_pseudo(in.P0);
  in.gains.H = synth_H_pseudo(in.P0);
  in.gains.Hbar = synth_Hbar(in.P0, in.gains.K);
  in.gains.observer = ObserverGain::diagonal(p, rng.uniform(0.6, 0.95), rng.uniform(0.05, 0.2));
  const int q = rng.integer(1, 2);
  const int r = rng.integer(1, 2);
  in.structure.phi1 = rng.matrix(p, q, phi_scale);
  in.structure.phi2 = rng.matrix(r, m, phi_scale);
  return in;
}

LmiProblem problem_for(LmiId id, const Instance& in) {
  return LmiProblem{id, in.P0, in.structure, in.gains};
}

// Largest eigenvalue of X + τaᵀa + τ⁻¹bᵀb, the Schur complement of the LMI.
double schur_oracle(LmiId id, const Instance& in, const LmiCertificate& cert) {
  const Eigen::Index p = in.P0.rows();
  const auto s = pieces(p, *in.gains.observer);
  const Eigen::MatrixXd& K = in.gains.K;
  const Eigen::MatrixXd obs = s.Abar - s.Lbar * s.Cbar;
  Eigen::MatrixXd M0;
  Eigen::MatrixXd G;
  Eigen::MatrixXd a = zeros(in.structure.r(), 6 * p);
  a.leftCols(p) = in.structure.phi2 * K;
  if (id == LmiId::eq44) {
    M0 = blocks(eye(p) - in.P0 * K, -in.P0 * *in.gains.H * s.F, zeros(2 * p, p), obs);
    G = blocks(-eye(p), zeros(p, 0), s.Cbar.transpose(), zeros(2 * p, 0));
    a.block(0, p, a.rows(), 2 * p) = in.structure.phi2 * *in.gains.H * s.F;
  } else {
    M0 = blocks(eye(p) - in.P0 * K, *in.gains.Hbar * s.F, zeros(2 * p, p), obs);
    G = blocks(-eye(p), zeros(p, 0), -s.Lbar, zeros(2 * p, 0));
  }
  const Eigen::MatrixXd Q = cert.Q();
  const Eigen::MatrixXd X = blocks(-Q, M0.transpose() * Q, Q * M0, -Q);
  Eigen::MatrixXd b = zeros(in.structure.q(), 6 * p);
  b.rightCols(3 * p) = (Q * G * in.structure.phi1).transpose();
  const Eigen::MatrixXd schur = X + cert.tau * a.transpose() * a + (1 / cert.tau) * b.transpose() * b;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (schur + schur.transpose())).eigenvalues().maxCoeff();
}

Eigen::MatrixXd random_pd(oracle::Random& rng, Eigen::Index n) {
  const Eigen::MatrixXd a = rng.matrix(n, n);
  return a * a.transpose() + 0.1 * eye(n);
}

}  // namespace

TEST(Conditions, NamesRoundTrip) {
  for (ConditionId id : {ConditionId::eq04, ConditionId::eq17, ConditionId::eq41, ConditionId::eq48,
                         ConditionId::eq62, ConditionId::eq95, ConditionId::eq102}) {
    EXPECT_EQ(condition_from_string(to_string(id)), id);
  }
  EXPECT_THROW(condition_from_string("eq99"), std::invalid_argument);
}

TEST(Conditions, ScalarFeedbackCondition) {
  const auto plant = TransferPlant::exact(eye(1));
  const auto es = build_extended(1, eye(1));
  GainSet g;
  g.K = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const auto ok = check_condition(ConditionId::eq04, plant, g, es);
  EXPECT_DOUBLE_EQ(ok.rho, 0.5);
  EXPECT_TRUE(ok.holds);
  EXPECT_EQ(ok.matrix_dim, 1);
  g.K(0, 0) = 2.5;
  const auto bad = check_condition(ConditionId::eq04, plant, g, es);
  EXPECT_DOUBLE_EQ(bad.rho, 1.5);
  EXPECT_FALSE(bad.holds);
  g.K(0, 0) = 2.0;
  EXPECT_FALSE(check_condition(ConditionId::eq04, plant, g, es).holds);
}

TEST(Conditions, ObserverConditionMatchesReferenceRadius) {
  GainSet g;
  g.K = eye(1);
  g.observer = ObserverGain::diagonal(1, 0.9, 0.1);
  const auto r = check_condition(ConditionId::eq17, TransferPlant::exact(eye(1)), g, build_extended(1, eye(1)));
  EXPECT_NEAR(r.rho, 0.8702, 1e-4);
  EXPECT_EQ(r.matrix_dim, 2);
}

TEST(Conditions, CoupledConditionsDecoupleWithoutModelError) {
  oracle::Random rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int p = rng.integer(1, 3);
    const auto in = random_instance(rng, p, 0.1);
    const auto plant = TransferPlant::exact(in.P0);
    const auto es = build_extended(p, in.P0);
    const double feedback = spectral_radius((eye(p) - in.P0 * in.gains.K).eval());
    const double observer = check_observer_condition(es, *in.gains.observer).rho;
    const double expected = std::max(feedback, observer);
    EXPECT_NEAR(check_condition(ConditionId::eq41, plant, in.gains, es).rho, expected, 1e-7);
    EXPECT_NEAR(check_condition(ConditionId::eq62, plant, in.gains, es).rho, expected, 1e-7);
    EXPECT_NEAR(check_condition(ConditionId::eq102, plant, in.gains, es, in.P0).rho, expected, 1e-7);
    EXPECT_EQ(check_condition(ConditionId::eq41, plant, in.gains, es).matrix_dim, 3 * p);
  }
}

TEST(Conditions, MissingIngredientsAreReported) {
  GainSet g;
  g.K = eye(2);
  EXPECT_TRUE(condition_applicable(ConditionId::eq04, g, std::nullopt));
  EXPECT_FALSE(condition_applicable(ConditionId::eq17, g, std::nullopt));
  EXPECT_FALSE(condition_applicable(ConditionId::eq95, g, std::nullopt));
  EXPECT_TRUE(condition_applicable(ConditionId::eq95, g, eye(2)));
  EXPECT_THROW(condition_matrix(ConditionId::eq41, TransferPlant::exact(eye(2)), g, build_extended(2, eye(2))),
               std::invalid_argument);
}

TEST(Separation, IdentitiesHoldOnRandomInstances) {
  oracle::Random rng(2);
  for (SeparationId id : {SeparationId::eq20, SeparationId::eq30, SeparationId::eq61, SeparationId::eq76}) {
    for (int trial = 0; trial < 50; ++trial) {
      const int p = rng.integer(1, 4);
      const int m = rng.integer(p, p + 2);
      SeparationIngredients in;
      in.P0 = rng.full_row_rank(p, m);
      const bool exact = trial % 2 == 0;
      in.P = exact ? in.P0 : Eigen::MatrixXd(in.P0 + 0.1 * rng.matrix(p, m));
      in.K = rng.uniform(0.2, 1.0) * synth_H_pseudo(in.P0);
      in.H = rng.matrix(m, p);
      in.Hbar = synth_Hbar(in.P0, in.K);
      in.observer = ObserverGain{rng.matrix(p, p), rng.matrix(p, p)};
      const auto r = verify_separation(id, in);
      EXPECT_LT(r.max_residual, 1e-10) << to_string(id);
      if (id == SeparationId::eq76) {
        EXPECT_EQ(r.block_upper_triangular, exact);
      } else {
        EXPECT_TRUE(r.block_upper_triangular) << to_string(id);
      }
    }
  }
}

TEST(Lyapunov, MatchesKroneckerSolution) {
  oracle::Random rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = rng.integer(1, 6);
    const Eigen::MatrixXd a = rng.with_radius(n, rng.uniform(0.1, 0.95));
    const Eigen::MatrixXd q = random_pd(rng, n);
    const Eigen::MatrixXd x = solve_discrete_lyapunov(a, q);
    const Eigen::MatrixXd expected = oracle::lyapunov_kronecker(a, q);
    EXPECT_LE(infinity_norm((x - expected).eval()), 1e-8 * std::max(1.0, infinity_norm(expected)));
    EXPECT_LE(infinity_norm((a.transpose() * x * a - x + q).eval()), 1e-9 * std::max(1.0, infinity_norm(x)));
  }
}

TEST(Lyapunov, RejectsUnstableMatrix) {
  EXPECT_THROW(solve_discrete_lyapunov((1.01 * eye(2)).eval(), eye(2)), NumericError);
}

TEST(LmiVerify, RejectsInvalidCertificates) {
  oracle::Random rng(4);
  const auto in = random_instance(rng, 1, 0.1);
  const auto problem = problem_for(LmiId::eq44, in);
  EXPECT_THROW(lmi_verify(problem, LmiCertificate::from_Q(eye(3), 0.0)), std::invalid_argument);
  EXPECT_THROW(lmi_verify(problem, LmiCertificate::from_Q(eye(3), -1.0)), std::invalid_argument);
  Eigen::MatrixXd indefinite = eye(3);
  indefinite(2, 2) = -1;
  EXPECT_THROW(lmi_verify(problem, LmiCertificate::from_Q(indefinite, 1.0)), std::invalid_argument);
}

TEST(LmiVerify, LyapunovCertificateWithoutUncertainty) {
  oracle::Random rng(5);
  for (LmiId id : {LmiId::eq44, LmiId::eq65, LmiId::eq101}) {
    for (int p = 1; p <= 2; ++p) {
      auto in = random_instance(rng, p, 0.0);
      const auto problem = problem_for(id, in);
      const Eigen::MatrixXd M0 = lmi_nominal_matrix(problem);
      const Eigen::MatrixXd Q = oracle::lyapunov_kronecker(M0, eye(3 * p));
      EXPECT_TRUE(lmi_verify(problem, LmiCertificate::from_Q(Q, 1.0))) << to_string(id);
    }
  }
}

TEST(LmiVerify, AssembledMatrixIsSymmetricWithExpectedSize) {
  oracle::Random rng(6);
  const auto in = random_instance(rng, 2, 0.3);
  const auto problem = problem_for(LmiId::eq44, in);
  const auto cert = LmiCertificate::from_Q(random_pd(rng, 6), 0.7);
  const Eigen::MatrixXd S = assemble_lmi(problem, cert);
  EXPECT_EQ(S.rows(), 12 + in.structure.q() + in.structure.r());
  EXPECT_EQ(S, S.transpose());
}

TEST(LmiVerify, AgreesWithSchurComplementOracle) {
  oracle::Random rng(7);
  int compared = 0;
  int accepted = 0;
  for (LmiId id : {LmiId::eq44, LmiId::eq65}) {
    for (int trial = 0; trial < 200; ++trial) {
      const int p = rng.integer(1, 2);
      const auto in = random_instance(rng, p, rng.uniform(0.0, 0.4));
      const auto problem = problem_for(id, in);
      const Eigen::MatrixXd M0 = lmi_nominal_matrix(problem);
      Eigen::MatrixXd Q = oracle::lyapunov_kronecker(M0, random_pd(rng, 3 * p));
      Q /= Q.norm();
      const auto cert = LmiCertificate::from_Q(Q, std::pow(10.0, rng.uniform(-2, 2)));
      const double lambda = schur_oracle(id, in, cert);
      if (std::abs(lambda) < 1e-6) continue;
      ++compared;
      const bool verified = lmi_verify(problem, cert);
      accepted += verified;
      EXPECT_EQ(verified, lambda < 0) << to_string(id) << " lambda=" << lambda;
    }
  }
  EXPECT_GT(compared, 300);
  EXPECT_GT(accepted, 0);
  EXPECT_LT(accepted, compared);
}

TEST(LmiVerify, UnstableNominalRejectsRandomCertificates) {
  oracle::Random rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = rng.integer(1, 2);
    auto in = random_instance(rng, p, 0.1);
    in.gains.K = 2.5 * synth_H_pseudo(in.P0);
    in.gains.Hbar = synth_Hbar(in.P0, in.gains.K);
    in.gains.H = in.gains.K * *in.gains.Hbar;
    const auto problem = problem_for(LmiId::eq44, in);
    ASSERT_GE(spectral_radius(lmi_nominal_matrix(problem)), 1.0);
    EXPECT_FALSE(lmi_verify(problem, LmiCertificate::from_Q(random_pd(rng, 3 * p), rng.uniform(0.01, 10))));
  }
}

TEST(LmiSearch, FindsCertificatesForSmallUncertainty) {
  oracle::Random rng(9);
  for (LmiId id : {LmiId::eq44, LmiId::eq65, LmiId::eq101}) {
    for (int p = 1; p <= 2; ++p) {
      const auto in = random_instance(rng, p, 0.02);
      const auto problem = problem_for(id, in);
      const auto cert = lmi_search(problem);
      ASSERT_TRUE(cert.has_value()) << to_string(id) << " p=" << p;
      EXPECT_TRUE(lmi_verify(problem, *cert));
      EXPECT_GT(cert->tau, 0);
      EXPECT_TRUE(theorem_implication_check(problem, *cert, 50, 17));
    }
  }
}

TEST(LmiSearch, ReturnsNothingForUnstableNominal) {
  oracle::Random rng(10);
  auto in = random_instance(rng, 2, 0.02);
  in.gains.K = 2.5 * synth_H_pseudo(in.P0);
  in.gains.Hbar = synth_Hbar(in.P0, in.gains.K);
  in.gains.H = in.gains.K * *in.gains.Hbar;
  EXPECT_FALSE(lmi_search(problem_for(LmiId::eq44, in)).has_value());
}

TEST(LmiImplication, InvalidCertificateIsAnError) {
  oracle::Random rng(11);
  const auto in = random_instance(rng, 1, 0.1);
  EXPECT_THROW(theorem_implication_check(problem_for(LmiId::eq44, in), LmiCertificate::from_Q(eye(3), 1.0), 10, 0),
               std::invalid_argument);
}

TEST(Necessity, FailedFeedbackConditionPreventsConvergence) {
  oracle::Random rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const int p = rng.integer(1, 3);
    const Eigen::MatrixXd P = rng.full_row_rank(p, p + 1);
    SimulationConfig cfg;
    cfg.plant = TransferPlant::exact(P);
    cfg.target = rng.vector(p);
    cfg.uncertainty = UncertaintyModel{ZeroUncertainty{}, p};
    cfg.gains.K = rng.matrix(p + 1, p, 3.0);
    cfg.iterations = 5000;
    const auto report = check_condition(ConditionId::eq04, cfg.plant, cfg.gains, build_extended(p, P));
    if (report.rho < 1.05) continue;
    const auto trace = run(cfg);
    for (const auto& r : trace.records) EXPECT_GE(r.err_inf, 1e-6);
  }
}
