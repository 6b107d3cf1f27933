#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "iterlearn/learner.hpp"
#include "iterlearn/observer.hpp"
#include "iterlearn/plant.hpp"

namespace iterlearn {

/// Spectral-radius conditions, named after the displays they come from.
enum class ConditionId { eq04, eq17, eq41, eq48, eq62, eq95, eq102 };

std::string_view to_string(ConditionId id);
ConditionId condition_from_string(std::string_view name);

struct ConditionReport {
  ConditionId id = ConditionId::eq04;
  double rho = 0;
  bool holds = false;
  Eigen::Index matrix_dim = 0;
};

/// Assembles the block matrix of a condition:
///   eq04  I − PK                     eq48  I − P₀K
///   eq17  Ā − L̄C̄                     eq95  I − P̃₀K
///   eq41  [[I − PK, −PHF], [C̄ᵀP_δK, Ā − L̄C̄ + C̄ᵀP_δHF]]
///   eq62  [[I − PK, H̄F], [−L̄P_δK, Ā − L̄C̄]]
///   eq102 [[I − PK, H̄F], [L̄(P̃₀ − P)K, Ā − L̄C̄]]
/// with P the true plant. Throws std::invalid_argument when an ingredient the
/// condition needs is missing.
Eigen::MatrixXd condition_matrix(ConditionId id, const TransferPlant& plant, const GainSet& gains,
                                 const ExtendedSystem& es,
                                 const std::optional<Eigen::MatrixXd>& surrogate = std::nullopt);

ConditionReport check_condition(ConditionId id, const TransferPlant& plant, const GainSet& gains,
                                const ExtendedSystem& es,
                                const std::optional<Eigen::MatrixXd>& surrogate = std::nullopt);

/// Whether every ingredient for `id` is present.
bool condition_applicable(ConditionId id, const GainSet& gains,
                          const std::optional<Eigen::MatrixXd>& surrogate);

// Separation-principle similarity identities.

enum class SeparationId { eq20, eq30, eq61, eq76 };

std::string_view to_string(SeparationId id);

struct SeparationIngredients {
  /// True plant P.
  Eigen::MatrixXd P;
  /// Nominal P₀ (eq61, eq76).
  Eigen::MatrixXd P0;
  Eigen::MatrixXd K;
  /// eq20, eq30.
  Eigen::MatrixXd H;
  /// eq61, eq76.
  Eigen::MatrixXd Hbar;
  ObserverGain observer;
};

struct SeparationResult {
  double max_residual = 0;
  bool block_upper_triangular = false;
};

/// ‖T M T⁻¹ − R‖_∞ for the closed-loop matrix M, transformation T and
/// right-hand side R of an identity, and whether the lower-left block of
/// T M T⁻¹ is below 1e-10.
SeparationResult verify_separation(SeparationId id, const SeparationIngredients& in);

// LMI certificates.

enum class LmiId { eq44, eq65, eq101 };

std::string_view to_string(LmiId id);

/// Q = [[Q11, Q21ᵀ], [Q21, Q22]] > 0 and τ > 0.
struct LmiCertificate {
  Eigen::MatrixXd Q11;
  Eigen::MatrixXd Q21;
  Eigen::MatrixXd Q22;
  double tau = 0;

  Eigen::MatrixXd Q() const;
  static LmiCertificate from_Q(const Eigen::MatrixXd& Q, double tau);
};

/// Data for an LMI: `nominal` is P₀ for eq44/eq65 and P̃₀ for eq101, and
/// `structure` holds Φ₁, Φ₂ (or Φ̃₁, Φ̃₂). eq44 needs gains.H; eq65 and eq101
/// need gains.Hbar. All need observer gains.
struct LmiProblem {
  LmiId id = LmiId::eq44;
  Eigen::MatrixXd nominal;
  StructuredUncertainty structure;
  GainSet gains;
};

/// The nominal closed-loop block matrix of the LMI:
///   eq44  M₀ = [[I − P₀K, −P₀HF], [0, Ā − L̄C̄]]
///   eq65, eq101  𝓜₀ = [[I − P₀K, H̄F], [0, Ā − L̄C̄]]
Eigen::MatrixXd lmi_nominal_matrix(const LmiProblem& problem);

/// The symmetric 6×6-block LMI matrix, stars filled by transposition.
Eigen::MatrixXd assemble_lmi(const LmiProblem& problem, const LmiCertificate& cert);

/// Throws std::invalid_argument on τ ≤ 0 or Q not positive definite.
/// Otherwise returns whether the LMI matrix is negative definite with
/// tolerance 1e-9·‖S‖_∞.
bool lmi_verify(const LmiProblem& problem, const LmiCertificate& cert);

/// X with AᵀXA − X = −Q, by squaring (Smith doubling). Throws NumericError
/// unless ρ(A) < 1.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// Heuristic: Lyapunov seed on the nominal block matrix, τ over a log grid
/// in [1e-4, 1e4], then reweighted seeds. At most `budget` verifications.
std::optional<LmiCertificate> lmi_search(const LmiProblem& problem, int budget = 100);

/// For `samples` contractions Σ, forms P_δ = Φ₁ΣΦ₂ and checks eq41 (for
/// eq44) or eq62 / eq102 (for eq65 / eq101). Throws std::invalid_argument if
/// the certificate does not pass lmi_verify.
bool theorem_implication_check(const LmiProblem& problem, const LmiCertificate& cert, int samples,
                               std::uint64_t seed);

}  // namespace iterlearn
