#include "iterlearn/plant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "iterlearn/matanalysis.hpp"

namespace iterlearn {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_dimension(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(n) +
                                ", got " + std::to_string(v.size()));
  }
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

}  // namespace

// xoroshiro128+ seeded through splitmix64.
UniformSource::UniformSource(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0xD1B54A32D192ED03ULL);
  state_[0] = splitmix64(x);
  state_[1] = splitmix64(x);
  if (state_[0] == 0 && state_[1] == 0) state_[1] = 1;
}

std::uint64_t UniformSource::next_bits() {
  const std::uint64_t s0 = state_[0];
  std::uint64_t s1 = state_[1];
  const std::uint64_t result = s0 + s1;
  s1 ^= s0;
  state_[0] = ((s0 << 24) | (s0 >> 40)) ^ s1 ^ (s1 << 16);
  state_[1] = (s1 << 37) | (s1 >> 27);
  return result;
}

double UniformSource::next() {
  const double unit = static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  return 2.0 * unit - 1.0;
}

Eigen::MatrixXd UniformSource::matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = next();
  return m;
}

Eigen::VectorXd UniformSource::vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = next();
  return v;
}

TransferPlant::TransferPlant(Eigen::MatrixXd nominal, Eigen::MatrixXd delta, double beta_delta)
    : nominal_(std::move(nominal)), delta_(std::move(delta)), beta_delta_(beta_delta) {
  if (nominal_.size() == 0) throw std::invalid_argument("TransferPlant: empty nominal matrix");
  if (nominal_.rows() != delta_.rows() || nominal_.cols() != delta_.cols()) {
    throw std::invalid_argument("TransferPlant: nominal and delta dimensions differ");
  }
  if (!nominal_.allFinite() || !delta_.allFinite()) {
    throw std::invalid_argument("TransferPlant: non-finite entries");
  }
  const double delta_norm = induced_norm(delta_, NormKind::two);
  if (beta_delta_ < 0) {
    beta_delta_ = delta_norm;
  } else if (delta_norm > beta_delta_ * (1 + 1e-12) + 1e-300) {
    throw std::invalid_argument("TransferPlant: ‖delta‖₂ exceeds beta_delta");
  }
}

TransferPlant TransferPlant::exact(Eigen::MatrixXd p) {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  return TransferPlant(std::move(p), std::move(zero), 0.0);
}

void StructuredUncertainty::validate(Eigen::Index p, Eigen::Index m) const {
  if (phi1.rows() != p || phi2.cols() != m || phi1.cols() < 1 || phi2.rows() < 1) {
    throw std::invalid_argument("StructuredUncertainty: Φ₁ must be p×q and Φ₂ r×m");
  }
  if (!phi1.allFinite() || !phi2.allFinite()) {
    throw std::invalid_argument("StructuredUncertainty: non-finite entries");
  }
}

Eigen::MatrixXd sample_contraction(Eigen::Index q, Eigen::Index r, std::uint64_t seed) {
  UniformSource source(seed, 0x5167);
  Eigen::MatrixXd sigma = source.matrix(q, r);
  const double norm = induced_norm(sigma, NormKind::two);
  if (norm > 1.0) sigma /= norm;
  // Rounding in the division can leave the norm a few ulps above one.
  while (induced_norm(sigma, NormKind::two) > 1.0) sigma *= 1.0 - 1e-15;
  return sigma;
}

Eigen::MatrixXd sample_structured_delta(const StructuredUncertainty& s, std::uint64_t seed) {
  return s.phi1 * sample_contraction(s.q(), s.r(), seed) * s.phi2;
}

void UncertaintyModel::validate() const {
  if (dimension < 1) throw std::invalid_argument("UncertaintyModel: dimension must be positive");
  std::visit(overloaded{
                 [](const ZeroUncertainty&) {},
                 [&](const ConstantUncertainty& c) {
                   require_dimension(c.value, dimension, "constant uncertainty");
                 },
                 [&](const RampUncertainty& r) {
                   require_dimension(r.slope, dimension, "ramp uncertainty");
                 },
                 [](const CumulativeSineUncertainty& c) {
                   if (!std::isfinite(c.rate) || !std::isfinite(c.decay) ||
                       !std::isfinite(c.amplitude)) {
                     throw std::invalid_argument("cumulative sine: non-finite parameter");
                   }
                 },
                 [&](const TableUncertainty& t) {
                   if (t.values.empty()) throw std::invalid_argument("table uncertainty: empty");
                   for (const auto& v : t.values) require_dimension(v, dimension, "table uncertainty");
                 },
                 [](const SeededBoundedUncertainty& s) {
                   if (!(s.bound >= 0) || !std::isfinite(s.bound)) {
                     throw std::invalid_argument("seeded uncertainty: bound must be finite, >= 0");
                   }
                 },
             },
             kind);
}

namespace {

double cumulative_sine_term(const CumulativeSineUncertainty& c, long i) {
  return std::sin(c.rate * static_cast<double>(i)) /
         std::pow(static_cast<double>(i + 1), c.decay);
}

}  // namespace

Eigen::VectorXd generate_N(const UncertaintyModel& model, long k) {
  if (k < 0) throw std::invalid_argument("generate_N: k must be non-negative");
  const Eigen::Index p = model.dimension;
  return std::visit(
      overloaded{
          [&](const ZeroUncertainty&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(p); },
          [&](const ConstantUncertainty& c) -> Eigen::VectorXd { return c.value; },
          [&](const RampUncertainty& r) -> Eigen::VectorXd {
            return static_cast<double>(k) * r.slope;
          },
          [&](const CumulativeSineUncertainty& c) -> Eigen::VectorXd {
            double sum = 0;
            for (long i = 0; i <= k; ++i) sum += cumulative_sine_term(c, i);
            return Eigen::VectorXd::Constant(p, c.amplitude * sum);
          },
          [&](const TableUncertainty& t) -> Eigen::VectorXd {
            const auto idx = std::min<std::size_t>(static_cast<std::size_t>(k), t.values.size() - 1);
            return t.values[idx];
          },
          [&](const SeededBoundedUncertainty& s) -> Eigen::VectorXd {
            UniformSource source(s.seed, static_cast<std::uint64_t>(k) + 1);
            return s.bound * source.vector(p);
          },
      },
      model.kind);
}

std::vector<Eigen::VectorXd> generate_N_sequence(const UncertaintyModel& model, long count) {
  std::vector<Eigen::VectorXd> out;
  if (count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  if (const auto* c = std::get_if<CumulativeSineUncertainty>(&model.kind)) {
    double sum = 0;
    for (long k = 0; k < count; ++k) {
      sum += cumulative_sine_term(*c, k);
      out.push_back(Eigen::VectorXd::Constant(model.dimension, c->amplitude * sum));
    }
    return out;
  }
  for (long k = 0; k < count; ++k) out.push_back(generate_N(model, k));
  return out;
}

std::vector<Eigen::VectorXd> forward_difference(const std::vector<Eigen::VectorXd>& seq,
                                                int order) {
  std::vector<Eigen::VectorXd> cur = seq;
  for (int o = 0; o < order; ++o) {
    if (cur.size() < 2) return {};
    std::vector<Eigen::VectorXd> next;
    next.reserve(cur.size() - 1);
    for (std::size_t k = 0; k + 1 < cur.size(); ++k) next.push_back(cur[k + 1] - cur[k]);
    cur = std::move(next);
  }
  return cur;
}

long default_tail_window(long horizon) { return std::max<long>(50, horizon / 10); }

DiffStats diff_stats(const UncertaintyModel& model, int order, long horizon, long tail_window) {
  if (order < 0 || order > 2) throw std::invalid_argument("diff_stats: order must be 0, 1 or 2");
  if (tail_window <= 0) tail_window = default_tail_window(horizon);
  if (horizon <= tail_window) {
    throw std::invalid_argument("diff_stats: horizon must exceed the tail window");
  }
  const auto diffs = forward_difference(generate_N_sequence(model, horizon + 1), order);
  DiffStats stats;
  stats.order = order;
  stats.horizon = horizon;
  stats.tail_window = tail_window;
  const long n = static_cast<long>(diffs.size());
  const long tail_start = std::max<long>(0, n - tail_window);
  for (long k = 0; k < n; ++k) {
    const double norm = diffs[static_cast<std::size_t>(k)].lpNorm<Eigen::Infinity>();
    stats.sup_bound = std::max(stats.sup_bound, norm);
    if (k >= tail_start) stats.tail_bound = std::max(stats.tail_bound, norm);
  }
  return stats;
}

void LiftedIlcSystem::validate() const {
  if (A.rows() != A.cols() || A.rows() < 1) throw std::invalid_argument("ILC system: A must be square");
  if (B.rows() != A.rows() || B.cols() < 1) throw std::invalid_argument("ILC system: B must be n_s×n_i");
  if (C.cols() != A.rows() || C.rows() < 1) throw std::invalid_argument("ILC system: C must be n_o×n_s");
  if (horizon < 1) throw std::invalid_argument("ILC system: horizon must be >= 1");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite()) {
    throw std::invalid_argument("ILC system: non-finite entries");
  }
  if (!has_full_row_rank(C * B)) throw std::invalid_argument("ILC system: CB must have full row rank");
  if (const auto* f = std::get_if<FixedInitialState>(&x0_policy)) {
    require_dimension(f->value, A.rows(), "ILC system x0");
  }
}

Eigen::VectorXd LiftedIlcSystem::initial_state(long k) const {
  return std::visit(overloaded{
                        [&](const ZeroInitialState&) -> Eigen::VectorXd {
                          return Eigen::VectorXd::Zero(states());
                        },
                        [&](const FixedInitialState& f) -> Eigen::VectorXd { return f.value; },
                        [&](const SeededInitialState& s) -> Eigen::VectorXd {
                          UniformSource source(s.seed, 0x1000000ULL + static_cast<std::uint64_t>(k));
                          return s.bound * source.vector(states());
                        },
                    },
                    x0_policy);
}

LiftedMatrices lift_ilc(const LiftedIlcSystem& sys) {
  sys.validate();
  const Eigen::Index ns = sys.states();
  const Eigen::Index ni = sys.inputs();
  const Eigen::Index no = sys.outputs();
  const Eigen::Index T = sys.horizon;

  // c_pow[d] = C A^d
  std::vector<Eigen::MatrixXd> c_pow(static_cast<std::size_t>(T + 1));
  c_pow[0] = sys.C;
  for (Eigen::Index d = 1; d <= T; ++d) c_pow[d] = c_pow[d - 1] * sys.A;

  LiftedMatrices out;
  out.P = Eigen::MatrixXd::Zero(T * no, T * ni);
  out.Q = Eigen::MatrixXd::Zero(T * no, T * ns);
  out.S = Eigen::MatrixXd::Zero(T * no, ns);
  for (Eigen::Index i = 0; i < T; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      out.P.block(i * no, j * ni, no, ni) = c_pow[i - j] * sys.B;
      out.Q.block(i * no, j * ns, no, ns) = c_pow[i - j];
    }
    out.S.block(i * no, 0, no, ns) = c_pow[i + 1];
  }
  return out;
}

Eigen::VectorXd simulate_time_domain(const LiftedIlcSystem& sys, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& x0) {
  sys.validate();
  const Eigen::Index ns = sys.states();
  const Eigen::Index ni = sys.inputs();
  const Eigen::Index no = sys.outputs();
  const Eigen::Index T = sys.horizon;
  if (u.size() != T * ni || w.size() != T * ns || v.size() != T * no || x0.size() != ns) {
    throw std::invalid_argument("simulate_time_domain: stack dimensions do not match the horizon");
  }
  Eigen::VectorXd y(T * no);
  Eigen::VectorXd x = x0;
  for (Eigen::Index t = 0; t < T; ++t) {
    x = (sys.A * x + sys.B * u.segment(t * ni, ni) + w.segment(t * ns, ns)).eval();
    y.segment(t * no, no) = sys.C * x + v.segment(t * no, no);
  }
  return y;
}

Eigen::MatrixXd perturb_elementwise(const Eigen::MatrixXd& m0, double fraction, std::uint64_t seed,
                                    std::uint64_t stream) {
  UniformSource source(seed, 0xE1E0 + stream);
  Eigen::MatrixXd out = m0;
  for (Eigen::Index i = 0; i < m0.rows(); ++i) {
    for (Eigen::Index j = 0; j < m0.cols(); ++j) out(i, j) = m0(i, j) * (1.0 + fraction * source.next());
  }
  return out;
}

}  // namespace iterlearn
