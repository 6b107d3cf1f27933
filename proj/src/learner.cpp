#include "iterlearn/learner.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "iterlearn/matanalysis.hpp"
#include "iterlearn/matrix_io.hpp"

namespace iterlearn {

namespace {

constexpr double kRankTolerance = 1e-10;

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(what + " must be " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw std::invalid_argument(what + " has non-finite entries");
}

double norm_inf(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace

std::string_view to_string(LawMode mode) {
  switch (mode) {
    case LawMode::p_type:
      return "p_type";
    case LawMode::eso_full_state:
      return "eso_full_state";
    case LawMode::eso_mixed:
      return "eso_mixed";
    case LawMode::eso_robust:
      return "eso_robust";
    case LawMode::eso_model_free:
      return "eso_model_free";
  }
  return "unknown";
}

LawMode law_mode_from_string(std::string_view name) {
  for (LawMode m : {LawMode::p_type, LawMode::eso_full_state, LawMode::eso_mixed,
                    LawMode::eso_robust, LawMode::eso_model_free}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown law mode '" + std::string(name) + "'");
}

bool uses_observer(LawMode mode) { return mode != LawMode::p_type; }

void LearningLaw::validate(Eigen::Index p, Eigen::Index m) const {
  if (mode != LawMode::eso_model_free) return;
  if (!surrogate) throw std::invalid_argument("eso_model_free requires a surrogate matrix");
  require_shape(*surrogate, p, m, "surrogate");
  if (!has_full_row_rank(*surrogate, kRankTolerance)) {
    throw std::invalid_argument("surrogate must have full row rank");
  }
}

void GainSet::validate(Eigen::Index p, Eigen::Index m) const {
  require_shape(K, m, p, "K");
  if (H) require_shape(*H, m, p, "H");
  if (Hbar) require_shape(*Hbar, p, p, "Hbar");
  if (observer) {
    require_shape(observer->L1, p, p, "L1");
    require_shape(observer->L2, p, p, "L2");
  }
  if (H && Hbar) {
    const Eigen::MatrixXd expected = K * *Hbar;
    const double scale = std::max(1.0, infinity_norm(expected));
    if (infinity_norm((*H - expected).eval()) > 1e-10 * scale) {
      throw std::invalid_argument("H must equal K·Hbar when both are given");
    }
  }
}

Eigen::MatrixXd synth_H_pseudo(const Eigen::MatrixXd& P) {
  if (P.size() == 0 || !P.allFinite()) throw std::invalid_argument("synth_H_pseudo: invalid P");
  if (!has_full_row_rank(P, kRankTolerance)) {
    throw std::invalid_argument("synth_H_pseudo: P must have full row rank");
  }
  const Eigen::MatrixXd gram = P * P.transpose();
  return P.transpose() * gram.ldlt().solve(Eigen::MatrixXd::Identity(P.rows(), P.rows()));
}

Eigen::MatrixXd synth_Hbar(const Eigen::MatrixXd& P_used, const Eigen::MatrixXd& K) {
  if (P_used.cols() != K.rows() || P_used.rows() != K.cols()) {
    throw std::invalid_argument("synth_Hbar: P_used K must be square");
  }
  const Eigen::MatrixXd pk = P_used * K;
  if (!pk.allFinite() || numerical_rank(pk, kRankTolerance) < pk.rows()) {
    throw std::invalid_argument("synth_Hbar: P_used K is singular");
  }
  return pk.partialPivLu().inverse();
}

Eigen::MatrixXd injected_matrix(LawMode mode, const TransferPlant& plant,
                                const std::optional<Eigen::MatrixXd>& surrogate) {
  switch (mode) {
    case LawMode::p_type:
    case LawMode::eso_full_state:
    case LawMode::eso_mixed:
      return plant.true_matrix();
    case LawMode::eso_robust:
      return plant.nominal();
    case LawMode::eso_model_free:
      if (!surrogate) throw std::invalid_argument("eso_model_free requires a surrogate matrix");
      return *surrogate;
  }
  return plant.true_matrix();
}

void SimulationConfig::validate() const {
  const Eigen::Index p = plant.outputs();
  const Eigen::Index m = plant.inputs();
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (target.size() != p) throw std::invalid_argument("target must have p entries");
  if (!target.allFinite()) throw std::invalid_argument("target has non-finite entries");
  if (u0.size() != 0 && u0.size() != m) throw std::invalid_argument("u0 must have m entries");
  if (uncertainty.dimension != p) throw std::invalid_argument("uncertainty dimension must be p");
  uncertainty.validate();
  law.validate(p, m);
  gains.validate(p, m);
  switch (law.mode) {
    case LawMode::p_type:
      break;
    case LawMode::eso_full_state:
    case LawMode::eso_mixed:
      if (!gains.H) throw std::invalid_argument(std::string(to_string(law.mode)) + " requires H");
      break;
    case LawMode::eso_robust:
    case LawMode::eso_model_free:
      if (!gains.Hbar) {
        throw std::invalid_argument(std::string(to_string(law.mode)) + " requires Hbar");
      }
      break;
  }
  if (uses_observer(law.mode)) {
    if (!gains.observer) {
      throw std::invalid_argument(std::string(to_string(law.mode)) + " requires observer gains");
    }
    const bool empty = observer0.e_hat.size() == 0 && observer0.d_hat.size() == 0;
    if (!empty && (observer0.e_hat.size() != p || observer0.d_hat.size() != p)) {
      throw std::invalid_argument("observer initial state must have p entries per block");
    }
  }
}

IterationTrace run(const SimulationConfig& config) {
  config.validate();
  const Eigen::Index p = config.plant.outputs();
  const Eigen::Index m = config.plant.inputs();
  const LawMode mode = config.law.mode;
  const Eigen::MatrixXd P = config.plant.true_matrix();
  const Eigen::MatrixXd& K = config.gains.K;
  const bool observe = uses_observer(mode);

  std::optional<ExtendedSystem> es;
  Eigen::MatrixXd compensation;  // KH̄ for the robust and model-free laws
  if (observe) {
    es = build_extended(p, injected_matrix(mode, config.plant, config.law.surrogate));
    if (mode == LawMode::eso_robust || mode == LawMode::eso_model_free) {
      compensation = K * *config.gains.Hbar;
    }
  }
  // Ground-truth aggregate offset: 𝒟 − D = P_δŪ (robust), 𝔻 − D = (P − P̃₀)Ū (model-free).
  std::optional<Eigen::MatrixXd> aggregate_error;
  if (mode == LawMode::eso_robust) aggregate_error = config.plant.delta();
  if (mode == LawMode::eso_model_free) aggregate_error = P - *config.law.surrogate;

  const auto n_seq = generate_N_sequence(config.uncertainty, config.iterations + 1);

  IterationTrace trace;
  trace.mode = mode;
  trace.records.reserve(static_cast<std::size_t>(config.iterations));

  Eigen::VectorXd u = config.u0.size() == 0 ? Eigen::VectorXd::Zero(m) : config.u0;
  ObserverState state;
  if (observe) {
    state = config.observer0.e_hat.size() == 0 ? ObserverState::zero(p) : config.observer0;
  }

  for (long k = 0; k < config.iterations; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.u = u;
    rec.y = P * u + n_seq[static_cast<std::size_t>(k)];
    rec.e = config.target - rec.y;

    Eigen::VectorXd u_next;
    switch (mode) {
      case LawMode::p_type:
        u_next = u + K * rec.e;
        break;
      case LawMode::eso_full_state:
        u_next = u + K * state.e_hat + *config.gains.H * state.d_hat;
        break;
      case LawMode::eso_mixed:
        u_next = u + K * rec.e + *config.gains.H * state.d_hat;
        break;
      case LawMode::eso_robust:
      case LawMode::eso_model_free:
        u_next = u + K * rec.e + compensation * state.d_hat;
        break;
    }
    rec.ubar = u - u_next;

    rec.aggregate = n_seq[static_cast<std::size_t>(k)] - n_seq[static_cast<std::size_t>(k + 1)];
    if (aggregate_error) rec.aggregate += *aggregate_error * rec.ubar;

    rec.err_inf = norm_inf(rec.e);
    rec.err_2 = rec.e.norm();
    rec.u_norm = norm_inf(rec.u);
    rec.ubar_norm = norm_inf(rec.ubar);
    if (observe) {
      rec.estimate = state;
      rec.obs_err_norm = std::max(norm_inf(rec.e - state.e_hat), norm_inf(rec.aggregate - state.d_hat));
    } else {
      rec.obs_err_norm = std::numeric_limits<double>::quiet_NaN();
    }

    const bool finite = rec.y.allFinite() && rec.ubar.allFinite() && rec.aggregate.allFinite();
    const bool blown = !u_next.allFinite() || norm_inf(u_next) > kDivergenceCap;
    if (finite) {
      trace.records.push_back(std::move(rec));
      trace.last_finite_k = k;
    }
    if (!finite || blown) {
      trace.diverged = true;
      break;
    }

    if (observe) {
      state = eso_step(*es, *config.gains.observer, state, trace.records.back().ubar,
                       trace.records.back().e);
      if (!state.e_hat.allFinite() || !state.d_hat.allFinite()) {
        trace.diverged = true;
        break;
      }
    }
    u = std::move(u_next);
  }
  return trace;
}

StabilityProfile estimate_stability_profile(const IterationTrace& trace, const DiffStats& stats1,
                                            const DiffStats& stats2, long tail_window) {
  const long n = static_cast<long>(trace.records.size());
  const long w = tail_window > 0 ? tail_window : default_tail_window(n);
  if (n <= w) {
    throw std::invalid_argument("estimate_stability_profile: trace must be longer than the tail window");
  }
  StabilityProfile out;
  out.tail_window = w;
  for (long k = 0; k < n; ++k) {
    const double err = trace.records[static_cast<std::size_t>(k)].err_inf;
    out.sup_error = std::max(out.sup_error, err);
    if (k >= n - w) out.tail_error = std::max(out.tail_error, err);
  }
  constexpr double kTiny = 1e-14;
  if (stats1.tail_bound >= kTiny) out.ratio_dn = out.tail_error / stats1.tail_bound;
  if (stats2.tail_bound >= kTiny) out.ratio_d2n = out.tail_error / stats2.tail_bound;

  if (trace.diverged) {
    out.classification = "diverged";
  } else if (out.tail_error < kConvergedError) {
    out.classification = stats1.tail_bound >= kTiny ? "superattractive_consistent" : "converged";
  } else {
    out.classification = "bounded";
  }
  return out;
}

void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
  out << kTraceCsvHeader << '\n';
  const std::size_t n = trace.records.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = trace.records[i];
    const bool flag = trace.diverged && i + 1 == n;
    out << r.k << ',' << format_decimal(r.err_inf) << ',' << format_decimal(r.err_2) << ','
        << format_decimal(r.u_norm) << ',' << format_decimal(r.ubar_norm) << ','
        << format_decimal(r.obs_err_norm) << ',' << (flag ? 1 : 0) << '\n';
  }
}

}  // namespace iterlearn
