#include "iterlearn/stability.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "iterlearn/matanalysis.hpp"

namespace iterlearn {

namespace {

Eigen::MatrixXd blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                       const Eigen::MatrixXd& d) {
  Eigen::MatrixXd out(a.rows() + c.rows(), a.cols() + b.cols());
  out << a, b, c, d;
  return out;
}

Eigen::MatrixXd eye(Eigen::Index n) { return Eigen::MatrixXd::Identity(n, n); }

const ObserverGain& require_observer(const GainSet& gains, const char* who) {
  if (!gains.observer) throw std::invalid_argument(std::string(who) + " requires observer gains");
  return *gains.observer;
}

const Eigen::MatrixXd& require_H(const GainSet& gains, const char* who) {
  if (!gains.H) throw std::invalid_argument(std::string(who) + " requires H");
  return *gains.H;
}

const Eigen::MatrixXd& require_Hbar(const GainSet& gains, const char* who) {
  if (!gains.Hbar) throw std::invalid_argument(std::string(who) + " requires Hbar");
  return *gains.Hbar;
}

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  }
}

}  // namespace

std::string_view to_string(ConditionId id) {
  switch (id) {
    case ConditionId::eq04:
      return "eq04";
    case ConditionId::eq17:
      return "eq17";
    case ConditionId::eq41:
      return "eq41";
    case ConditionId::eq48:
      return "eq48";
    case ConditionId::eq62:
      return "eq62";
    case ConditionId::eq95:
      return "eq95";
    case ConditionId::eq102:
      return "eq102";
  }
  return "unknown";
}

ConditionId condition_from_string(std::string_view name) {
  for (ConditionId id : {ConditionId::eq04, ConditionId::eq17, ConditionId::eq41, ConditionId::eq48,
                         ConditionId::eq62, ConditionId::eq95, ConditionId::eq102}) {
    if (to_string(id) == name) return id;
  }
  throw std::invalid_argument("unknown condition '" + std::string(name) + "'");
}

bool condition_applicable(ConditionId id, const GainSet& gains,
                          const std::optional<Eigen::MatrixXd>& surrogate) {
  switch (id) {
    case ConditionId::eq04:
    case ConditionId::eq48:
      return true;
    case ConditionId::eq17:
      return gains.observer.has_value();
    case ConditionId::eq41:
      return gains.observer && gains.H;
    case ConditionId::eq62:
      return gains.observer && gains.Hbar;
    case ConditionId::eq95:
      return surrogate.has_value();
    case ConditionId::eq102:
      return gains.observer && gains.Hbar && surrogate;
  }
  return false;
}

Eigen::MatrixXd condition_matrix(ConditionId id, const TransferPlant& plant, const GainSet& gains,
                                 const ExtendedSystem& es,
                                 const std::optional<Eigen::MatrixXd>& surrogate) {
  const Eigen::Index p = plant.outputs();
  if (es.p != p) throw std::invalid_argument("condition_matrix: extended system has wrong p");
  if (gains.K.rows() != plant.inputs() || gains.K.cols() != p) {
    throw std::invalid_argument("condition_matrix: K must be m×p");
  }
  const Eigen::MatrixXd P = plant.true_matrix();
  const Eigen::MatrixXd& K = gains.K;
  const Eigen::MatrixXd I = eye(p);
  switch (id) {
    case ConditionId::eq04:
      return I - P * K;
    case ConditionId::eq48:
      return I - plant.nominal() * K;
    case ConditionId::eq95:
      if (!surrogate) throw std::invalid_argument("eq95 requires a surrogate");
      require_same_shape(*surrogate, P, "eq95");
      return I - *surrogate * K;
    case ConditionId::eq17:
      return observer_transition(es, require_observer(gains, "eq17"));
    case ConditionId::eq41: {
      const auto& L = require_observer(gains, "eq41");
      const auto& H = require_H(gains, "eq41");
      const Eigen::MatrixXd& Pd = plant.delta();
      const Eigen::MatrixXd Ct = es.Cbar.transpose();
      return blocks(I - P * K, -P * H * es.F, Ct * Pd * K,
                    observer_transition(es, L) + Ct * Pd * H * es.F);
    }
    case ConditionId::eq62: {
      const auto& L = require_observer(gains, "eq62");
      const auto& Hbar = require_Hbar(gains, "eq62");
      return blocks(I - P * K, Hbar * es.F, -L.stacked() * plant.delta() * K,
                    observer_transition(es, L));
    }
    case ConditionId::eq102: {
      const auto& L = require_observer(gains, "eq102");
      const auto& Hbar = require_Hbar(gains, "eq102");
      if (!surrogate) throw std::invalid_argument("eq102 requires a surrogate");
      require_same_shape(*surrogate, P, "eq102");
      return blocks(I - P * K, Hbar * es.F, L.stacked() * (*surrogate - P) * K,
                    observer_transition(es, L));
    }
  }
  throw std::invalid_argument("condition_matrix: unknown condition");
}

ConditionReport check_condition(ConditionId id, const TransferPlant& plant, const GainSet& gains,
                                const ExtendedSystem& es,
                                const std::optional<Eigen::MatrixXd>& surrogate) {
  const Eigen::MatrixXd m = condition_matrix(id, plant, gains, es, surrogate);
  ConditionReport out;
  out.id = id;
  out.rho = spectral_radius(m);
  out.holds = out.rho < 1.0;
  out.matrix_dim = m.rows();
  return out;
}

std::string_view to_string(SeparationId id) {
  switch (id) {
    case SeparationId::eq20:
      return "eq20";
    case SeparationId::eq30:
      return "eq30";
    case SeparationId::eq61:
      return "eq61";
    case SeparationId::eq76:
      return "eq76";
  }
  return "unknown";
}

SeparationResult verify_separation(SeparationId id, const SeparationIngredients& in) {
  const Eigen::Index p = in.P.rows();
  const Eigen::MatrixXd I = eye(p);
  const bool nominal_based = id == SeparationId::eq61 || id == SeparationId::eq76;
  const ExtendedSystem es = build_extended(p, nominal_based ? in.P0 : in.P);
  const Eigen::MatrixXd& Ab = es.Abar;
  const Eigen::MatrixXd& Bb = es.Bbar;
  const Eigen::MatrixXd& Cb = es.Cbar;
  const Eigen::MatrixXd& F = es.F;
  const Eigen::MatrixXd Lb = in.observer.stacked();
  const Eigen::MatrixXd obs = observer_transition(es, in.observer);
  const Eigen::MatrixXd& K = in.K;

  Eigen::MatrixXd M;
  Eigen::MatrixXd T;
  Eigen::MatrixXd T_inv;
  Eigen::MatrixXd rhs;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2 * p, p);
  const Eigen::MatrixXd I2 = eye(2 * p);
  switch (id) {
    case SeparationId::eq20: {
      Eigen::MatrixXd Kbar(K.rows(), 2 * p);
      Kbar << K, in.H;
      M = blocks(I, -in.P * Kbar, Lb, Ab - Lb * Cb - Bb * Kbar);
      rhs = blocks(I - in.P * K, -in.P * Kbar, Z, obs);
      T = blocks(I, Z.transpose(), -Cb.transpose(), I2);
      T_inv = blocks(I, Z.transpose(), Cb.transpose(), I2);
      break;
    }
    case SeparationId::eq30: {
      M = blocks(I - in.P * K, -in.P * in.H * F, Lb - Bb * K, Ab - Lb * Cb - Bb * in.H * F);
      rhs = blocks(I - in.P * K, -in.P * in.H * F, Z, obs);
      T = blocks(I, Z.transpose(), -Cb.transpose(), I2);
      T_inv = blocks(I, Z.transpose(), Cb.transpose(), I2);
      break;
    }
    case SeparationId::eq61: {
      const Eigen::MatrixXd KH = K * in.Hbar;
      M = blocks(I - in.P0 * K, -in.P0 * KH * F, Lb - Bb * K, Ab - Lb * Cb - Bb * KH * F);
      rhs = blocks(I - in.P0 * K, -in.P0 * KH * F, Z, obs);
      T = blocks(I, Z.transpose(), -Cb.transpose(), I2);
      T_inv = blocks(I, Z.transpose(), Cb.transpose(), I2);
      break;
    }
    case SeparationId::eq76: {
      const Eigen::MatrixXd B0K = Bb * K;
      const Eigen::MatrixXd Pd = in.P - in.P0;
      M = blocks(I - in.P * K, in.Hbar * F, (B0K - Lb) * in.P * K, Ab - Lb * Cb - B0K * in.Hbar * F);
      rhs = blocks(I - in.P * K, in.Hbar * F, -Lb * Pd * K, obs);
      T = blocks(I, Z.transpose(), B0K, I2);
      T_inv = blocks(I, Z.transpose(), -B0K, I2);
      break;
    }
  }
  if (infinity_norm((T * T_inv - eye(3 * p)).eval()) != 0.0) {
    throw NumericError("verify_separation: transformation inverse is inexact");
  }
  const Eigen::MatrixXd similar = T * M * T_inv;
  SeparationResult out;
  out.max_residual = infinity_norm((similar - rhs).eval());
  out.block_upper_triangular = infinity_norm(similar.bottomLeftCorner(2 * p, p).eval()) < 1e-10;
  return out;
}

std::string_view to_string(LmiId id) {
  switch (id) {
    case LmiId::eq44:
      return "eq44";
    case LmiId::eq65:
      return "eq65";
    case LmiId::eq101:
      return "eq101";
  }
  return "unknown";
}

Eigen::MatrixXd LmiCertificate::Q() const {
  return blocks(Q11, Q21.transpose(), Q21, Q22);
}

LmiCertificate LmiCertificate::from_Q(const Eigen::MatrixXd& Q, double tau) {
  if (Q.rows() != Q.cols() || Q.rows() % 3 != 0) {
    throw std::invalid_argument("LmiCertificate::from_Q: Q must be 3p×3p");
  }
  const Eigen::Index p = Q.rows() / 3;
  const Eigen::MatrixXd S = symmetrized(Q);
  return {S.topLeftCorner(p, p), S.bottomLeftCorner(2 * p, p), S.bottomRightCorner(2 * p, 2 * p),
          tau};
}

namespace {

struct LmiParts {
  Eigen::Index p = 0;
  ExtendedSystem es;
  Eigen::MatrixXd M0;
};

LmiParts lmi_parts(const LmiProblem& problem) {
  const Eigen::Index p = problem.nominal.rows();
  const Eigen::Index m = problem.nominal.cols();
  problem.structure.validate(p, m);
  problem.gains.validate(p, m);
  LmiParts parts;
  parts.p = p;
  parts.es = build_extended(p, problem.nominal);
  const auto& L = require_observer(problem.gains, "lmi");
  const Eigen::MatrixXd upper = eye(p) - problem.nominal * problem.gains.K;
  const Eigen::MatrixXd coupling =
      problem.id == LmiId::eq44
          ? Eigen::MatrixXd(-problem.nominal * require_H(problem.gains, "eq44") * parts.es.F)
          : Eigen::MatrixXd(require_Hbar(problem.gains, "eq65/eq101") * parts.es.F);
  parts.M0 = blocks(upper, coupling, Eigen::MatrixXd::Zero(2 * p, p),
                    observer_transition(parts.es, L));
  return parts;
}

}  // namespace

Eigen::MatrixXd lmi_nominal_matrix(const LmiProblem& problem) { return lmi_parts(problem).M0; }

Eigen::MatrixXd assemble_lmi(const LmiProblem& problem, const LmiCertificate& cert) {
  const LmiParts parts = lmi_parts(problem);
  const Eigen::Index p = parts.p;
  const Eigen::Index n = 3 * p;
  const Eigen::MatrixXd& phi1 = problem.structure.phi1;
  const Eigen::MatrixXd& phi2 = problem.structure.phi2;
  const Eigen::Index q = problem.structure.q();
  const Eigen::Index r = problem.structure.r();
  if (cert.Q11.rows() != p || cert.Q11.cols() != p || cert.Q21.rows() != 2 * p ||
      cert.Q21.cols() != p || cert.Q22.rows() != 2 * p || cert.Q22.cols() != 2 * p) {
    throw std::invalid_argument("assemble_lmi: certificate blocks have wrong dimensions");
  }
  const Eigen::MatrixXd Q = cert.Q();
  const double tau = cert.tau;
  const Eigen::MatrixXd& K = problem.gains.K;
  const Eigen::MatrixXd& Cb = parts.es.Cbar;
  const Eigen::MatrixXd& F = parts.es.F;

  // Lower block triangle over block sizes [p, 2p, p, 2p, r, q].
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * n + r + q, 2 * n + r + q);
  S.block(0, 0, n, n) = -Q;
  S.block(n, 0, n, n) = Q * parts.M0;
  S.block(n, n, n, n) = -Q;
  S.block(2 * n, 0, r, p) = tau * phi2 * K;
  Eigen::MatrixXd g1;
  Eigen::MatrixXd g2;
  if (problem.id == LmiId::eq44) {
    S.block(2 * n, p, r, 2 * p) = tau * phi2 * *problem.gains.H * F;
    g1 = phi1.transpose() * (Cb * cert.Q21 - cert.Q11);
    g2 = phi1.transpose() * (Cb * cert.Q22 - cert.Q21.transpose());
  } else {
    const Eigen::MatrixXd Lt = problem.gains.observer->stacked().transpose();
    g1 = phi1.transpose() * (-cert.Q11 - Lt * cert.Q21);
    g2 = phi1.transpose() * (-cert.Q21.transpose() - Lt * cert.Q22);
  }
  S.block(2 * n, 2 * n, r, r) = -tau * eye(r);
  S.block(2 * n + r, n, q, p) = g1;
  S.block(2 * n + r, n + p, q, 2 * p) = g2;
  S.block(2 * n + r, 2 * n + r, q, q) = -tau * eye(q);
  S.triangularView<Eigen::StrictlyUpper>() = S.transpose().triangularView<Eigen::StrictlyUpper>();
  return S;
}

bool lmi_verify(const LmiProblem& problem, const LmiCertificate& cert) {
  if (!(cert.tau > 0) || !std::isfinite(cert.tau)) {
    throw std::invalid_argument("lmi_verify: tau must be positive");
  }
  const Eigen::MatrixXd Q = cert.Q();
  if (!Q.allFinite() || !is_positive_definite(Q, 0.0)) {
    throw std::invalid_argument("lmi_verify: Q must be symmetric positive definite");
  }
  const Eigen::MatrixXd S = assemble_lmi(problem, cert);
  return is_negative_definite(S, 1e-9 * infinity_norm(S));
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  detail::require_square(A, "solve_discrete_lyapunov");
  if (Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw std::invalid_argument("solve_discrete_lyapunov: Q must match A");
  }
  if (!(spectral_radius(A) < 1.0)) {
    throw NumericError("solve_discrete_lyapunov: A must be Schur stable");
  }
  Eigen::MatrixXd X = Q;
  Eigen::MatrixXd Ak = A;
  for (int it = 0; it < 100; ++it) {
    const Eigen::MatrixXd increment = Ak.transpose() * X * Ak;
    X += increment;
    if (!X.allFinite()) break;
    if (infinity_norm(increment) <= 1e-17 * infinity_norm(X)) return (X + X.transpose()) / 2;
    Ak = Ak * Ak;
  }
  throw NumericError("solve_discrete_lyapunov: doubling did not converge");
}

std::optional<LmiCertificate> lmi_search(const LmiProblem& problem, int budget) {
  if (budget < 1) throw std::invalid_argument("lmi_search: budget must be at least 1");
  const LmiParts parts = lmi_parts(problem);
  const Eigen::Index p = parts.p;
  if (!(spectral_radius(parts.M0) < 1.0)) return std::nullopt;

  constexpr int kTauPoints = 25;
  const double weights[] = {1.0, 1e-1, 1e1, 1e-2, 1e2, 1e-3, 1e3};
  int used = 0;
  for (double w : weights) {
    Eigen::VectorXd diag = Eigen::VectorXd::Ones(3 * p);
    diag.head(p).setConstant(w);
    Eigen::MatrixXd Q;
    try {
      Q = solve_discrete_lyapunov(parts.M0, diag.asDiagonal().toDenseMatrix());
    } catch (const NumericError&) {
      return std::nullopt;
    }
    Q /= induced_norm(Q, NormKind::two);
    if (!is_positive_definite(Q, 0.0)) continue;
    for (int i = 0; i < kTauPoints; ++i) {
      if (used >= budget) return std::nullopt;
      ++used;
      const double tau = std::pow(10.0, -4.0 + 8.0 * i / (kTauPoints - 1));
      LmiCertificate cert = LmiCertificate::from_Q(Q, tau);
      if (lmi_verify(problem, cert)) return cert;
    }
  }
  return std::nullopt;
}

bool theorem_implication_check(const LmiProblem& problem, const LmiCertificate& cert, int samples,
                               std::uint64_t seed) {
  if (!lmi_verify(problem, cert)) {
    throw std::invalid_argument("theorem_implication_check: certificate does not pass lmi_verify");
  }
  const Eigen::Index p = problem.nominal.rows();
  const ExtendedSystem es = build_extended(p, problem.nominal);
  const StructuredUncertainty& s = problem.structure;
  for (int i = 0; i < samples; ++i) {
    const Eigen::MatrixXd delta = sample_structured_delta(s, seed + static_cast<std::uint64_t>(i));
    const TransferPlant plant(problem.nominal, delta);
    ConditionReport report;
    switch (problem.id) {
      case LmiId::eq44:
        report = check_condition(ConditionId::eq41, plant, problem.gains, es);
        break;
      case LmiId::eq65:
        report = check_condition(ConditionId::eq62, plant, problem.gains, es);
        break;
      case LmiId::eq101:
        report = check_condition(ConditionId::eq102, plant, problem.gains, es, problem.nominal);
        break;
    }
    if (!report.holds) return false;
  }
  return true;
}

}  // namespace iterlearn
