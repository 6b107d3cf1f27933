#include "iterlearn/observer.hpp"

#include <stdexcept>
#include <string>

#include "iterlearn/matanalysis.hpp"

namespace iterlearn {

ExtendedSystem build_extended(Eigen::Index p, const Eigen::MatrixXd& P_used) {
  if (p < 1) throw std::invalid_argument("build_extended: p must be positive");
  if (P_used.rows() != p || P_used.cols() < 1) {
    throw std::invalid_argument("build_extended: P_used must have p = " + std::to_string(p) +
                                " rows");
  }
  const Eigen::Index m = P_used.cols();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  ExtendedSystem es;
  es.p = p;
  es.P_used = P_used;
  es.Abar = Eigen::MatrixXd::Zero(2 * p, 2 * p);
  es.Abar.topLeftCorner(p, p) = I;
  es.Abar.topRightCorner(p, p) = I;
  es.Abar.bottomRightCorner(p, p) = I;
  es.Bbar = Eigen::MatrixXd::Zero(2 * p, m);
  es.Bbar.topRows(p) = P_used;
  es.Cbar = Eigen::MatrixXd::Zero(p, 2 * p);
  es.Cbar.leftCols(p) = I;
  es.F = Eigen::MatrixXd::Zero(p, 2 * p);
  es.F.rightCols(p) = I;
  return es;
}

ObserverGain ObserverGain::diagonal(Eigen::Index p, double l1, double l2) {
  return {l1 * Eigen::MatrixXd::Identity(p, p), l2 * Eigen::MatrixXd::Identity(p, p)};
}

Eigen::MatrixXd ObserverGain::stacked() const {
  Eigen::MatrixXd out(L1.rows() + L2.rows(), L1.cols());
  out << L1, L2;
  return out;
}

ObserverState ObserverState::zero(Eigen::Index p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
}

Eigen::VectorXd ObserverState::stacked() const {
  Eigen::VectorXd out(e_hat.size() + d_hat.size());
  out << e_hat, d_hat;
  return out;
}

namespace {

void check_gains(const ExtendedSystem& es, const ObserverGain& gains) {
  const Eigen::Index p = es.p;
  if (gains.L1.rows() != p || gains.L1.cols() != p || gains.L2.rows() != p ||
      gains.L2.cols() != p) {
    throw std::invalid_argument("observer gains must be p×p with p = " + std::to_string(p));
  }
}

}  // namespace

Eigen::MatrixXd observer_transition(const ExtendedSystem& es, const ObserverGain& gains) {
  check_gains(es, gains);
  return es.Abar - gains.stacked() * es.Cbar;
}

ObserverState eso_step(const ExtendedSystem& es, const ObserverGain& gains,
                       const ObserverState& state, const Eigen::VectorXd& ubar_k,
                       const Eigen::VectorXd& e_k) {
  check_gains(es, gains);
  const Eigen::Index p = es.p;
  if (state.e_hat.size() != p || state.d_hat.size() != p || e_k.size() != p ||
      ubar_k.size() != es.P_used.cols()) {
    throw std::invalid_argument("eso_step: dimension mismatch");
  }
  ObserverState next;
  next.e_hat = state.e_hat - gains.L1 * state.e_hat + state.d_hat + es.P_used * ubar_k +
               gains.L1 * e_k;
  next.d_hat = -gains.L2 * state.e_hat + state.d_hat + gains.L2 * e_k;
  return next;
}

ObserverCondition check_observer_condition(const ExtendedSystem& es, const ObserverGain& gains) {
  ObserverCondition out;
  out.rho = spectral_radius(observer_transition(es, gains));
  out.holds = out.rho < 1.0;
  return out;
}

std::vector<Eigen::VectorXd> simulate_observation_error(const ExtendedSystem& es,
                                                        const ObserverGain& gains,
                                                        const Eigen::VectorXd& x_tilde_0,
                                                        const std::vector<Eigen::VectorXd>& driving,
                                                        long horizon) {
  const Eigen::MatrixXd transition = observer_transition(es, gains);
  if (x_tilde_0.size() != 2 * es.p) {
    throw std::invalid_argument("simulate_observation_error: initial error must have 2p entries");
  }
  if (horizon < 0 || static_cast<long>(driving.size()) < horizon) {
    throw std::invalid_argument("simulate_observation_error: driving sequence shorter than horizon");
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(x_tilde_0);
  for (long k = 0; k < horizon; ++k) {
    const auto& d = driving[static_cast<std::size_t>(k)];
    if (d.size() != 2 * es.p) {
      throw std::invalid_argument("simulate_observation_error: driving vectors must have 2p entries");
    }
    out.push_back(transition * out.back() + d);
  }
  return out;
}

std::vector<Eigen::VectorXd> observation_driving(const ExtendedSystem& es,
                                                 const std::vector<Eigen::VectorXd>& n_sequence) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t k = 0; k + 2 < n_sequence.size(); ++k) {
    const Eigen::VectorXd d2 = n_sequence[k + 2] - 2.0 * n_sequence[k + 1] + n_sequence[k];
    if (d2.size() != es.p) throw std::invalid_argument("observation_driving: N has wrong dimension");
    out.push_back(-es.F.transpose() * d2);
  }
  return out;
}

Eigen::MatrixXd observability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd out(n * C.rows(), n);
  Eigen::MatrixXd block = C;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleRows(i * C.rows(), C.rows()) = block;
    block = block * A;
  }
  return out;
}

Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd out(n, n * B.cols());
  Eigen::MatrixXd block = B;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleCols(i * B.cols(), B.cols()) = block;
    block = A * block;
  }
  return out;
}

}  // namespace iterlearn
