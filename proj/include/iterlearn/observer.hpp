#pragma once

#include <vector>

#include <Eigen/Dense>

namespace iterlearn {

/// Extended iteration-domain state space over X̄ = (E, D):
///   Ā = [[I, I], [0, I]],  B̄ = [P_used; 0],  C̄ = [I, 0],  F = [0, I].
///
/// P_used selects the ESO variant: the true P (nominal design), P₀ (robust
/// redesign), or a surrogate P̃₀ (model-free design).
struct ExtendedSystem {
  Eigen::Index p = 0;
  Eigen::MatrixXd Abar;
  Eigen::MatrixXd Bbar;
  Eigen::MatrixXd Cbar;
  Eigen::MatrixXd F;
  Eigen::MatrixXd P_used;
};

ExtendedSystem build_extended(Eigen::Index p, const Eigen::MatrixXd& P_used);

struct ObserverGain {
  Eigen::MatrixXd L1;
  Eigen::MatrixXd L2;

  static ObserverGain diagonal(Eigen::Index p, double l1, double l2);
  /// L̄ = [L1; L2].
  Eigen::MatrixXd stacked() const;
  Eigen::Index p() const { return L1.rows(); }
};

struct ObserverState {
  Eigen::VectorXd e_hat;
  Eigen::VectorXd d_hat;

  static ObserverState zero(Eigen::Index p);
  Eigen::VectorXd stacked() const;
};

/// Ā − L̄C̄.
Eigen::MatrixXd observer_transition(const ExtendedSystem& es, const ObserverGain& gains);

/// One ESO update X̂' = (Ā − L̄C̄) X̂ + B̄ Ū + L̄ E, evaluated blockwise:
///   Ê' = (I − L1) Ê + D̂ + P_used Ū + L1 E
///   D̂' = −L2 Ê + D̂ + L2 E
ObserverState eso_step(const ExtendedSystem& es, const ObserverGain& gains,
                       const ObserverState& state, const Eigen::VectorXd& ubar_k,
                       const Eigen::VectorXd& e_k);

struct ObserverCondition {
  bool holds = false;
  double rho = 0;
};

ObserverCondition check_observer_condition(const ExtendedSystem& es, const ObserverGain& gains);

/// X̃_{k+1} = (Ā − L̄C̄) X̃_k + D̄_k for k < horizon; returns X̃_0 .. X̃_horizon.
std::vector<Eigen::VectorXd> simulate_observation_error(const ExtendedSystem& es,
                                                        const ObserverGain& gains,
                                                        const Eigen::VectorXd& x_tilde_0,
                                                        const std::vector<Eigen::VectorXd>& driving,
                                                        long horizon);

/// D̄_k = −Fᵀ Δ²N_k for k = 0..count−1, from N_0..N_{count+1}.
std::vector<Eigen::VectorXd> observation_driving(const ExtendedSystem& es,
                                                 const std::vector<Eigen::VectorXd>& n_sequence);

/// [C; CA; ...; CA^{n−1}].
Eigen::MatrixXd observability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);
/// [B, AB, ..., A^{n−1}B].
Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace iterlearn
