#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "iterlearn/observer.hpp"
#include "iterlearn/plant.hpp"

namespace iterlearn {

enum class LawMode { p_type, eso_full_state, eso_mixed, eso_robust, eso_model_free };

std::string_view to_string(LawMode mode);
/// Throws std::invalid_argument for unknown names.
LawMode law_mode_from_string(std::string_view name);

/// Whether the mode runs an ESO at all.
bool uses_observer(LawMode mode);

struct LearningLaw {
  LawMode mode = LawMode::p_type;
  /// P̃₀, model-free mode only.
  std::optional<Eigen::MatrixXd> surrogate;

  /// Throws std::invalid_argument when the model-free mode lacks a
  /// full-row-rank surrogate of shape p×m.
  void validate(Eigen::Index p, Eigen::Index m) const;
};

struct GainSet {
  Eigen::MatrixXd K;
  std::optional<Eigen::MatrixXd> H;
  std::optional<Eigen::MatrixXd> Hbar;
  std::optional<ObserverGain> observer;

  /// Shape checks against a p×m plant, plus H = K·H̄ when both are given.
  void validate(Eigen::Index p, Eigen::Index m) const;
};

/// H = Pᵀ(PPᵀ)⁻¹. Throws std::invalid_argument unless the smallest singular
/// value of P exceeds 1e-10 times the largest.
Eigen::MatrixXd synth_H_pseudo(const Eigen::MatrixXd& P);

/// H̄ = (P_used K)⁻¹. Throws std::invalid_argument if P_used K is singular.
Eigen::MatrixXd synth_Hbar(const Eigen::MatrixXd& P_used, const Eigen::MatrixXd& K);

/// The matrix the ESO injects for a mode: true P, P₀ or P̃₀.
Eigen::MatrixXd injected_matrix(LawMode mode, const TransferPlant& plant,
                                const std::optional<Eigen::MatrixXd>& surrogate);

struct SimulationConfig {
  TransferPlant plant = TransferPlant::exact(Eigen::MatrixXd::Identity(1, 1));
  Eigen::VectorXd target;
  UncertaintyModel uncertainty;
  GainSet gains;
  LearningLaw law;
  long iterations = 1;
  /// Empty means zero.
  Eigen::VectorXd u0;
  /// Empty means zero.
  ObserverState observer0;
  std::uint64_t seed = 0;

  void validate() const;
};

constexpr double kDivergenceCap = 1e12;

struct IterationRecord {
  long k = 0;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  Eigen::VectorXd e;
  Eigen::VectorXd ubar;
  /// X̂_k, the estimate used to form U_{k+1}. Empty for p_type.
  ObserverState estimate;
  /// Ground-truth aggregate the observer targets: D_k, D_k + P_δŪ_k or
  /// D_k + (P − P̃₀)Ū_k depending on the mode. Always D_k for p_type.
  Eigen::VectorXd aggregate;
  double err_inf = 0;
  double err_2 = 0;
  double u_norm = 0;
  double ubar_norm = 0;
  /// ‖(E_k − Ê_k, aggregate − D̂_k)‖_∞, NaN without an observer.
  double obs_err_norm = 0;
};

struct IterationTrace {
  LawMode mode = LawMode::p_type;
  std::vector<IterationRecord> records;
  bool diverged = false;
  /// Index of the last recorded iteration, −1 if none.
  long last_finite_k = -1;
};

IterationTrace run(const SimulationConfig& config);

struct StabilityProfile {
  double sup_error = 0;
  double tail_error = 0;
  long tail_window = 0;
  /// tail / β^ess_ΔN, absent when that estimate is below 1e-14.
  std::optional<double> ratio_dn;
  /// tail / β^ess_Δ²N, absent when that estimate is below 1e-14.
  std::optional<double> ratio_d2n;
  std::string classification;
};

constexpr double kConvergedError = 1e-10;

/// Empirical boundedness and attractiveness of ‖E_k‖_∞ over a trace.
///
/// Classification: "diverged"; "superattractive_consistent" when the tail
/// error vanishes although ΔN does not; "converged" when both vanish;
/// otherwise "bounded". tail_window <= 0 selects default_tail_window.
StabilityProfile estimate_stability_profile(const IterationTrace& trace, const DiffStats& stats1,
                                            const DiffStats& stats2, long tail_window = 0);

void write_trace_csv(std::ostream& out, const IterationTrace& trace);
inline constexpr std::string_view kTraceCsvHeader =
    "k,err_inf,err_2,u_norm,ubar_norm,obs_err_norm,diverged";

}  // namespace iterlearn
