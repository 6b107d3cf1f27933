#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace iterlearn {

/// The iteration-domain data map Y = (P₀ + P_δ) U + N.
class TransferPlant {
 public:
  /// beta_delta < 0 means "use ‖delta‖₂". Throws std::invalid_argument on
  /// shape mismatch, non-finite entries, or ‖delta‖₂ > beta_delta.
  TransferPlant(Eigen::MatrixXd nominal, Eigen::MatrixXd delta, double beta_delta = -1);

  /// Plant with no model uncertainty.
  static TransferPlant exact(Eigen::MatrixXd p);

  const Eigen::MatrixXd& nominal() const { return nominal_; }
  const Eigen::MatrixXd& delta() const { return delta_; }
  double beta_delta() const { return beta_delta_; }
  Eigen::MatrixXd true_matrix() const { return nominal_ + delta_; }

  Eigen::Index outputs() const { return nominal_.rows(); }
  Eigen::Index inputs() const { return nominal_.cols(); }

 private:
  Eigen::MatrixXd nominal_;
  Eigen::MatrixXd delta_;
  double beta_delta_;
};

/// P_δ = Φ₁ Σ Φ₂ with ‖Σ‖₂ ≤ 1; Φ₁ is p×q, Φ₂ is r×m.
struct StructuredUncertainty {
  Eigen::MatrixXd phi1;
  Eigen::MatrixXd phi2;

  Eigen::Index q() const { return phi1.cols(); }
  Eigen::Index r() const { return phi2.rows(); }
  /// Throws std::invalid_argument unless Φ₁ has p rows and Φ₂ has m columns.
  void validate(Eigen::Index p, Eigen::Index m) const;
};

/// Deterministic q×r matrix with entries uniform in [−1, 1], scaled down to
/// unit two-norm when it exceeds one.
Eigen::MatrixXd sample_contraction(Eigen::Index q, Eigen::Index r, std::uint64_t seed);

Eigen::MatrixXd sample_structured_delta(const StructuredUncertainty& s, std::uint64_t seed);

// Iteration-varying uncertainty N_k.

struct ZeroUncertainty {};
struct ConstantUncertainty {
  Eigen::VectorXd value;
};
/// N_k = k · slope.
struct RampUncertainty {
  Eigen::VectorXd slope;
};
/// Every coordinate equals amplitude · Σ_{i=0}^{k} sin(rate·i) / (i+1)^decay.
struct CumulativeSineUncertainty {
  double rate = 1.0 / 200.0;
  double decay = 0.5;
  double amplitude = 1.0;
};
/// Explicit N_0, N_1, ...; indices past the end repeat the last entry.
struct TableUncertainty {
  std::vector<Eigen::VectorXd> values;
};
/// Entries uniform in [−bound, bound], a pure function of (seed, k).
struct SeededBoundedUncertainty {
  double bound = 0;
  std::uint64_t seed = 0;
};

struct UncertaintyModel {
  using Kind = std::variant<ZeroUncertainty, ConstantUncertainty, RampUncertainty,
                            CumulativeSineUncertainty, TableUncertainty, SeededBoundedUncertainty>;
  Kind kind;
  Eigen::Index dimension = 1;

  /// Throws std::invalid_argument if vectors do not match `dimension` or
  /// parameters are non-finite.
  void validate() const;
};

Eigen::VectorXd generate_N(const UncertaintyModel& model, long k);

/// N_0 .. N_{count-1}; linear time for the cumulative sine.
std::vector<Eigen::VectorXd> generate_N_sequence(const UncertaintyModel& model, long count);

/// Forward difference of order `order` applied to a sequence.
std::vector<Eigen::VectorXd> forward_difference(const std::vector<Eigen::VectorXd>& seq, int order);

/// Empirical estimates of β_{ΔⁱN} (over the horizon) and its limsup (over
/// the last `tail_window` differences).
struct DiffStats {
  int order = 0;
  double sup_bound = 0;
  double tail_bound = 0;
  long horizon = 0;
  long tail_window = 0;
};

long default_tail_window(long horizon);

/// Differences ΔⁱN_k for k ∈ [0, horizon − order], so only N_0..N_horizon are
/// used. tail_window <= 0 selects default_tail_window(horizon).
DiffStats diff_stats(const UncertaintyModel& model, int order, long horizon, long tail_window = 0);

// Lifted ILC systems.

struct ZeroInitialState {};
struct FixedInitialState {
  Eigen::VectorXd value;
};
/// x_k(0) entries uniform in [−bound, bound], a pure function of (seed, k).
struct SeededInitialState {
  double bound = 0;
  std::uint64_t seed = 0;
};
using InitialStatePolicy = std::variant<ZeroInitialState, FixedInitialState, SeededInitialState>;

/// x(t+1) = A x(t) + B u(t) + w(t), y(t) = C x(t) + v(t) over t = 0..T.
struct LiftedIlcSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  int horizon = 1;
  InitialStatePolicy x0_policy = ZeroInitialState{};

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  /// Shape checks plus the full-row-rank requirement on CB.
  void validate() const;
  Eigen::VectorXd initial_state(long k) const;
};

/// Y = P U + Q W + V + S x(0) with U = [u(0); ...; u(T−1)], W likewise,
/// V = [v(1); ...; v(T)], Y = [y(1); ...; y(T)].
struct LiftedMatrices {
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd S;
};

LiftedMatrices lift_ilc(const LiftedIlcSystem& sys);

/// Direct time-domain rollout of one iteration.
Eigen::VectorXd simulate_time_domain(const LiftedIlcSystem& sys, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& x0);

/// M₀ ∘ (1 + fraction·ξ) with ξ uniform in [−1, 1] per element; zero entries stay zero.
Eigen::MatrixXd perturb_elementwise(const Eigen::MatrixXd& m0, double fraction, std::uint64_t seed,
                                    std::uint64_t stream = 0);

/// Uniform [−1, 1) samples from a splitmix-seeded xoroshiro128+; identical across
/// standard library implementations. `stream` decorrelates uses of one seed.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed, std::uint64_t stream = 0);
  double next();
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd vector(Eigen::Index n);

 private:
  std::uint64_t state_[2];
  std::uint64_t next_bits();
};

}  // namespace iterlearn
