#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "iterlearn/matanalysis.hpp"
#include "iterlearn/matrix_io.hpp"

namespace iterlearn::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

[[noreturn]] void config_fail(const std::string& what) { throw ConfigError(what); }

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) config_fail(where + ": missing \"" + key + "\"");
  return j.at(key);
}

double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) config_fail(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(where + ": expected a finite number");
  return v;
}

long as_count(const Json& j, const std::string& where) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) config_fail(where + ": expected an integer");
  return j.get<long>();
}

void check_format_version(const Json& j, const std::string& where) {
  if (j.contains("format_version") && j.at("format_version") != kFormatVersion) {
    config_fail(where + ": unsupported format_version");
  }
}

Eigen::MatrixXd diagonal_or_matrix(const Json& j, Eigen::Index n, const fs::path& base,
                                   const std::string& where) {
  if (j.is_number()) return as_number(j, where) * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd m = parse_matrix(j, base);
  if (m.rows() != n || m.cols() != n) config_fail(where + ": must be " + std::to_string(n) + "x" +
                                                  std::to_string(n));
  return m;
}

std::optional<StructuredUncertainty> parse_structure(const Json& parent, const char* key,
                                                     const fs::path& base) {
  if (!parent.contains(key)) return std::nullopt;
  const Json& j = parent.at(key);
  const std::string where = std::string("\"") + key + "\"";
  return StructuredUncertainty{parse_matrix(require(j, "phi1", where), base),
                               parse_matrix(require(j, "phi2", where), base)};
}

Eigen::VectorXd parse_target(const Json& j, Eigen::Index p) {
  if (j.is_object()) {
    const std::string kind = j.value("kind", "");
    if (kind != "sine") config_fail("target: unknown kind '" + kind + "'");
    const double amplitude = j.contains("amplitude") ? as_number(j.at("amplitude"), "target") : 1.0;
    const double rate = as_number(require(j, "rate", "target"), "target");
    Eigen::VectorXd out(p);
    for (Eigen::Index t = 0; t < p; ++t) out(t) = amplitude * std::sin(rate * static_cast<double>(t + 1));
    return out;
  }
  Eigen::VectorXd out = parse_vector(j, p);
  if (out.size() != p) config_fail("target: must have " + std::to_string(p) + " entries");
  return out;
}

Eigen::MatrixXd banded_toeplitz(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  const Json& diags = require(j, "diagonals", "banded_toeplitz");
  if (!diags.is_array() || diags.empty()) config_fail("banded_toeplitz: diagonals must be a list");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t d = 0; d < diags.size(); ++d) {
    const double v = as_number(diags[d], "banded_toeplitz");
    for (Eigen::Index i = static_cast<Eigen::Index>(d); i < rows; ++i) {
      const Eigen::Index c = i - static_cast<Eigen::Index>(d);
      if (c < cols) out(i, c) = v;
    }
  }
  return out;
}

std::string trace_file_name(LawMode mode, std::uint64_t seed) {
  return "trace_" + std::string(to_string(mode)) + "_seed" + std::to_string(seed) + ".csv";
}

Json number_or_null(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("--seeds: '" + item + "' is not a seed");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--seeds: empty list");
  return out;
}

}  // namespace

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

Eigen::MatrixXd parse_matrix(const Json& j, const fs::path& base_dir) {
  if (j.is_object()) {
    if (j.contains("file")) {
      const fs::path p = base_dir / j.at("file").get<std::string>();
      try {
        return read_matrix_file(p.string());
      } catch (const ParseError& e) {
        throw ConfigError(p.string() + ": " + e.what());
      } catch (const std::ios_base::failure& e) {
        throw IoError(p.string() + ": " + e.what());
      }
    }
    const std::string kind = j.value("kind", "");
    if (kind == "identity") {
      const long n = as_count(require(j, "size", "identity"), "identity size");
      if (n < 1) config_fail("identity: size must be positive");
      const double scale = j.contains("scale") ? as_number(j.at("scale"), "identity scale") : 1.0;
      return scale * Eigen::MatrixXd::Identity(n, n);
    }
    config_fail("matrix: expected nested array, {\"file\": ...} or {\"kind\": \"identity\"}");
  }
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    config_fail("matrix: expected a non-empty nested array");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) config_fail("matrix: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = as_number(j[r][c], "matrix entry");
  }
  return m;
}

Eigen::VectorXd parse_vector(const Json& j, Eigen::Index size) {
  if (j.is_number() && size > 0) return Eigen::VectorXd::Constant(size, as_number(j, "vector"));
  if (!j.is_array()) config_fail("vector: expected a flat array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = as_number(j[i], "vector entry");
  return v;
}

UncertaintyModel parse_uncertainty(const Json& j, Eigen::Index dimension, std::uint64_t seed) {
  UncertaintyModel model;
  model.dimension = dimension;
  const std::string kind = j.is_object() ? j.value("kind", "") : "";
  if (kind == "zero") {
    model.kind = ZeroUncertainty{};
  } else if (kind == "constant") {
    model.kind = ConstantUncertainty{parse_vector(require(j, "value", "constant"), dimension)};
  } else if (kind == "ramp") {
    model.kind = RampUncertainty{parse_vector(require(j, "slope", "ramp"), dimension)};
  } else if (kind == "cumulative_sine") {
    CumulativeSineUncertainty c;
    if (j.contains("rate")) c.rate = as_number(j.at("rate"), "cumulative_sine rate");
    if (j.contains("decay")) c.decay = as_number(j.at("decay"), "cumulative_sine decay");
    if (j.contains("amplitude")) c.amplitude = as_number(j.at("amplitude"), "cumulative_sine amplitude");
    model.kind = c;
  } else if (kind == "table") {
    const Json& values = require(j, "values", "table");
    if (!values.is_array() || values.empty()) config_fail("table: values must be a non-empty list");
    TableUncertainty t;
    for (const auto& v : values) t.values.push_back(parse_vector(v, dimension));
    model.kind = std::move(t);
  } else if (kind == "seeded_bounded") {
    SeededBoundedUncertainty s;
    s.bound = as_number(require(j, "bound", "seeded_bounded"), "seeded_bounded bound");
    s.seed = j.contains("seed") ? static_cast<std::uint64_t>(as_count(j.at("seed"), "seed")) : seed;
    model.kind = s;
  } else {
    config_fail("uncertainty: unknown kind '" + kind + "'");
  }
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("uncertainty: ") + e.what());
  }
  return model;
}

IlcSystemFile parse_ilc_system(const Json& j, const fs::path& base_dir) {
  check_format_version(j, "ILC system");
  IlcSystemFile out;
  LiftedIlcSystem& sys = out.system;
  sys.A = parse_matrix(require(j, "A", "ILC system"), base_dir);
  sys.B = parse_matrix(require(j, "B", "ILC system"), base_dir);
  sys.C = parse_matrix(require(j, "C", "ILC system"), base_dir);
  const long horizon = as_count(require(j, "horizon", "ILC system"), "horizon");
  if (horizon < 1) config_fail("ILC system: horizon must be at least 1");
  sys.horizon = static_cast<int>(horizon);
  if (j.contains("x0")) {
    const Json& x = j.at("x0");
    const std::string kind = x.is_object() ? x.value("kind", "") : "";
    if (kind == "zero") {
      sys.x0_policy = ZeroInitialState{};
    } else if (kind == "fixed") {
      sys.x0_policy = FixedInitialState{parse_vector(require(x, "value", "x0"))};
    } else if (kind == "seeded") {
      SeededInitialState s;
      s.bound = as_number(require(x, "bound", "x0"), "x0 bound");
      s.seed = x.contains("seed") ? static_cast<std::uint64_t>(as_count(x.at("seed"), "x0 seed")) : 0;
      sys.x0_policy = s;
    } else {
      config_fail("x0: unknown kind '" + kind + "'");
    }
  }
  if (j.contains("uncertainty")) out.uncertainty = j.at("uncertainty");
  try {
    sys.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ILC system: ") + e.what());
  }
  return out;
}

ExperimentConfig parse_experiment(const Json& raw, const fs::path& base_dir,
                                  const Overrides& overrides) {
  check_format_version(raw, "config");
  ExperimentConfig cfg;
  cfg.raw = raw;
  cfg.base_dir = base_dir;
  require(raw, "plant", "config");
  require(raw, "target", "config");
  const Json& laws = require(raw, "laws", "config");
  if (!laws.is_array() || laws.empty()) config_fail("config: \"laws\" must be a non-empty list");
  for (const auto& l : laws) {
    LawSpec spec;
    try {
      if (l.is_string()) {
        spec.mode = law_mode_from_string(l.get<std::string>());
      } else {
        spec.mode = law_mode_from_string(require(l, "mode", "law").get<std::string>());
        if (l.contains("gains")) spec.gain_overrides = l.at("gains");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    cfg.laws.push_back(std::move(spec));
  }
  cfg.iterations = raw.contains("iterations") ? as_count(raw.at("iterations"), "iterations") : 1;
  if (overrides.iterations) cfg.iterations = *overrides.iterations;
  if (cfg.iterations < 1) config_fail("config: iterations must be at least 1");
  if (raw.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : raw.at("seeds")) cfg.seeds.push_back(static_cast<std::uint64_t>(as_count(s, "seed")));
    if (cfg.seeds.empty()) config_fail("config: seeds must be non-empty");
  }
  if (overrides.seeds) cfg.seeds = *overrides.seeds;
  cfg.plot = raw.value("plot", true);
  // Fail early on anything seed-independent.
  instantiate(cfg, cfg.seeds.front());
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path, const Overrides& overrides) {
  return parse_experiment(read_json_file(path), path.parent_path(), overrides);
}

SeedInstance instantiate(const ExperimentConfig& config, std::uint64_t seed) {
  const Json& raw = config.raw;
  const fs::path& base = config.base_dir;
  const Json& plant = raw.at("plant");
  const std::string type = plant.value("type", "direct");
  SeedInstance inst;
  inst.seed = seed;
  std::optional<Json> uncertainty_json;
  if (raw.contains("uncertainty")) uncertainty_json = raw.at("uncertainty");

  std::optional<LiftedIlcSystem> true_system;
  std::optional<Eigen::MatrixXd> lifted_S;
  try {
    if (type == "direct") {
      const Eigen::MatrixXd nominal = parse_matrix(require(plant, "nominal", "plant"), base);
      inst.structure = parse_structure(plant, "structure", base);
      Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(nominal.rows(), nominal.cols());
      if (plant.contains("delta")) {
        delta = parse_matrix(plant.at("delta"), base);
      } else if (inst.structure) {
        inst.structure->validate(nominal.rows(), nominal.cols());
        delta = sample_structured_delta(*inst.structure, seed);
      }
      const double beta = plant.contains("beta_delta") ? as_number(plant.at("beta_delta"), "beta_delta") : -1;
      inst.plant = TransferPlant(nominal, delta, beta);
    } else if (type == "ilc") {
      IlcSystemFile file;
      if (plant.contains("system_file")) {
        const fs::path p = base / plant.at("system_file").get<std::string>();
        file = parse_ilc_system(read_json_file(p), p.parent_path());
      } else {
        file = parse_ilc_system(require(plant, "system", "plant"), base);
      }
      if (!uncertainty_json && file.uncertainty) uncertainty_json = file.uncertainty;
      const double fraction =
          plant.contains("perturbation") ? as_number(plant.at("perturbation"), "perturbation") : 0.0;
      LiftedIlcSystem truth = file.system;
      if (fraction != 0.0) {
        truth.A = perturb_elementwise(file.system.A, fraction, seed, 0);
        truth.B = perturb_elementwise(file.system.B, fraction, seed, 1);
        truth.C = perturb_elementwise(file.system.C, fraction, seed, 2);
        truth.validate();
      }
      const LiftedMatrices nominal = lift_ilc(file.system);
      const LiftedMatrices actual = lift_ilc(truth);
      inst.plant = TransferPlant(nominal.P, actual.P - nominal.P);
      inst.structure = parse_structure(plant, "structure", base);
      true_system = truth;
      lifted_S = actual.S;
    } else {
      config_fail("plant: unknown type '" + type + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }

  const Eigen::Index p = inst.plant.outputs();
  const Eigen::Index m = inst.plant.inputs();
  inst.target = parse_target(raw.at("target"), p);
  inst.uncertainty = uncertainty_json ? parse_uncertainty(*uncertainty_json, p, seed)
                                      : UncertaintyModel{ZeroUncertainty{}, p};
  if (true_system && !std::holds_alternative<ZeroInitialState>(true_system->x0_policy)) {
    const auto base_seq = generate_N_sequence(inst.uncertainty, config.iterations + 1);
    TableUncertainty table;
    for (long k = 0; k <= config.iterations; ++k) {
      table.values.push_back(base_seq[static_cast<std::size_t>(k)] + *lifted_S * true_system->initial_state(k));
    }
    inst.uncertainty = UncertaintyModel{std::move(table), p};
  }

  if (raw.contains("surrogate")) {
    const Json& s = raw.at("surrogate");
    if (s.is_object() && s.value("kind", "") == "banded_toeplitz") {
      inst.surrogate = banded_toeplitz(s, p, m);
    } else {
      inst.surrogate = parse_matrix(s, base);
    }
    if (inst.surrogate->rows() != p || inst.surrogate->cols() != m) {
      config_fail("surrogate: must be " + std::to_string(p) + "x" + std::to_string(m));
    }
  }
  inst.surrogate_structure = parse_structure(raw, "surrogate_structure", base);
  try {
    if (inst.structure) inst.structure->validate(p, m);
    if (inst.surrogate_structure) inst.surrogate_structure->validate(p, m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("structure: ") + e.what());
  }
  inst.u0 = raw.contains("u0") ? parse_vector(raw.at("u0"), m) : Eigen::VectorXd::Zero(m);
  if (inst.u0.size() != m) config_fail("u0: must have " + std::to_string(m) + " entries");
  return inst;
}

GainSet resolve_gains(const ExperimentConfig& config, const LawSpec& law,
                      const SeedInstance& instance) {
  Json spec = config.raw.value("gains", Json::object());
  for (const auto& [key, value] : law.gain_overrides.items()) spec[key] = value;
  const fs::path& base = config.base_dir;
  const Eigen::MatrixXd& P0 = instance.plant.nominal();
  const Eigen::Index p = instance.plant.outputs();
  const Eigen::Index m = instance.plant.inputs();

  auto surrogate = [&]() -> const Eigen::MatrixXd& {
    if (!instance.surrogate) config_fail("gains: directive needs a \"surrogate\"");
    return *instance.surrogate;
  };

  GainSet g;
  try {
    const Json& kj = require(spec, "K", "gains");
    if (kj.is_object() && kj.contains("kind")) {
      const std::string kind = kj.at("kind").get<std::string>();
      const double c = kj.contains("scale") ? as_number(kj.at("scale"), "K scale") : 1.0;
      if (kind == "scaled_surrogate_inverse") {
        g.K = c * synth_H_pseudo(surrogate());
      } else if (kind == "scaled_pseudo_inverse") {
        g.K = c * synth_H_pseudo(P0);
      } else {
        config_fail("K: unknown kind '" + kind + "'");
      }
    } else {
      g.K = parse_matrix(kj, base);
    }

    const bool wants_H = law.mode == LawMode::eso_full_state || law.mode == LawMode::eso_mixed;
    const bool wants_Hbar = law.mode == LawMode::eso_robust || law.mode == LawMode::eso_model_free;
    if (wants_H) {
      const Json hj = spec.value("H", Json("pseudo_inverse_H"));
      if (hj.is_string()) {
        if (hj.get<std::string>() != "pseudo_inverse_H") config_fail("H: unknown directive");
        g.H = synth_H_pseudo(P0);
      } else {
        g.H = parse_matrix(hj, base);
      }
    }
    if (wants_Hbar) {
      const Json hj = spec.value(
          "Hbar", Json(law.mode == LawMode::eso_model_free ? "hbar_from_surrogate" : "hbar_from_nominal"));
      if (hj.is_string()) {
        const std::string d = hj.get<std::string>();
        if (d == "hbar_from_surrogate") {
          g.Hbar = synth_Hbar(surrogate(), g.K);
        } else if (d == "hbar_from_nominal") {
          g.Hbar = synth_Hbar(P0, g.K);
        } else {
          config_fail("Hbar: unknown directive '" + d + "'");
        }
      } else {
        g.Hbar = diagonal_or_matrix(hj, p, base, "Hbar");
      }
    }
    if (uses_observer(law.mode)) {
      ObserverGain L = ObserverGain::diagonal(p, 0.9, 0.1);
      if (spec.contains("L1")) L.L1 = diagonal_or_matrix(spec.at("L1"), p, base, "L1");
      if (spec.contains("L2")) L.L2 = diagonal_or_matrix(spec.at("L2"), p, base, "L2");
      g.observer = L;
    }
    g.validate(p, m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("gains: ") + e.what());
  }
  return g;
}

SimulationConfig simulation_config(const ExperimentConfig& config, const LawSpec& law,
                                   const SeedInstance& instance) {
  SimulationConfig sim;
  sim.plant = instance.plant;
  sim.target = instance.target;
  sim.uncertainty = instance.uncertainty;
  sim.gains = resolve_gains(config, law, instance);
  sim.law.mode = law.mode;
  if (law.mode == LawMode::eso_model_free) {
    if (!instance.surrogate) config_fail("eso_model_free needs a \"surrogate\"");
    sim.law.surrogate = instance.surrogate;
  }
  sim.iterations = config.iterations;
  sim.u0 = instance.u0;
  sim.seed = instance.seed;
  try {
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return sim;
}

Json condition_reports(const LawSpec& law, const SeedInstance& instance, const GainSet& gains) {
  const ExtendedSystem es =
      build_extended(instance.plant.outputs(), injected_matrix(law.mode, instance.plant, instance.surrogate));
  Json out = Json::array();
  for (ConditionId id : {ConditionId::eq04, ConditionId::eq17, ConditionId::eq41, ConditionId::eq48,
                         ConditionId::eq62, ConditionId::eq95, ConditionId::eq102}) {
    if (!condition_applicable(id, gains, instance.surrogate)) continue;
    const ConditionReport r = check_condition(id, instance.plant, gains, es, instance.surrogate);
    out.push_back({{"id", std::string(to_string(id))},
                   {"rho", r.rho},
                   {"holds", r.holds},
                   {"matrix_dim", r.matrix_dim}});
  }
  return out;
}

CheckedTrace read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceCsvHeader) throw ConfigError(path.string() + ": unexpected CSV header");
  CheckedTrace out;
  out.name = path.stem().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string k;
    std::string err;
    if (!std::getline(ss, k, ',') || !std::getline(ss, err, ',')) {
      throw ConfigError(path.string() + ": malformed row");
    }
    try {
      out.err_inf.push_back(std::stod(err));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ": malformed err_inf '" + err + "'");
    }
  }
  if (out.err_inf.empty()) throw ConfigError(path.string() + ": trace has no rows");
  return out;
}

std::string render_svg(const std::vector<CheckedTrace>& traces) {
  constexpr double kFloor = 1e-16;
  constexpr double width = 800, height = 500;
  constexpr double left = 80, right = 200, top = 30, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::size_t max_len = 1;
  double lo = 0, hi = -16;
  bool first = true;
  for (const auto& t : traces) {
    max_len = std::max(max_len, t.err_inf.size());
    for (double v : t.err_inf) {
      const double l = std::log10(std::isfinite(v) ? std::max(v, kFloor) : 1e16);
      if (first || l < lo) lo = l;
      if (first || l > hi) hi = l;
      first = false;
    }
  }
  double y_min = std::floor(lo);
  double y_max = std::ceil(hi);
  if (y_max <= y_min) y_max = y_min + 1;
  const double x_max = static_cast<double>(std::max<std::size_t>(max_len - 1, 1));
  auto px = [&](double k) { return left + plot_w * k / x_max; };
  auto py = [&](double v) {
    const double l = std::log10(std::isfinite(v) ? std::max(v, kFloor) : 1e16);
    return top + plot_h * (y_max - std::clamp(l, y_min, y_max)) / (y_max - y_min);
  };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  const int decades = static_cast<int>(y_max - y_min);
  const int step = std::max(1, decades / 10);
  for (int d = static_cast<int>(y_min); d <= static_cast<int>(y_max); d += step) {
    const double y = py(std::pow(10.0, d));
    svg << "<line x1=\"" << left << "\" y1=\"" << fmt(y) << "\" x2=\"" << left + plot_w << "\" y2=\""
        << fmt(y) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">1e" << d
        << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double k = std::round(x_max * i / 5);
    svg << "<text x=\"" << fmt(px(k)) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
        << static_cast<long>(k) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">iteration k</text>\n";
  svg << "<text x=\"20\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << top + plot_h / 2 << ")\">max |E_k|</text>\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const char* color = colors[i % (sizeof colors / sizeof colors[0])];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < t.err_inf.size(); ++k) {
      if (k) svg << ' ';
      svg << fmt(px(static_cast<double>(k))) << ',' << fmt(py(t.err_inf[k]));
    }
    svg << "\"/>\n";
    const double ly = top + 15 + 18 * static_cast<double>(i);
    svg << "<line x1=\"" << left + plot_w + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 30
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 35 << "\" y=\"" << ly + 4 << "\">" << t.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

unsigned worker_count() {
  if (const char* env = std::getenv("ITERLEARN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_lift(const CommonOptions& options) {
  const IlcSystemFile file = parse_ilc_system(read_json_file(options.config), options.config.parent_path());
  const LiftedMatrices lifted = lift_ilc(file.system);
  ensure_directory(options.out);
  for (const auto& [name, m] : {std::pair{"P.txt", &lifted.P}, std::pair{"Q.txt", &lifted.Q},
                                std::pair{"S.txt", &lifted.S}}) {
    std::ostringstream text;
    write_matrix(text, *m);
    write_text_file(options.out / name, text.str());
  }
  if (!options.quiet) {
    std::cout << "P " << lifted.P.rows() << "x" << lifted.P.cols() << ", Q " << lifted.Q.rows() << "x"
              << lifted.Q.cols() << ", S " << lifted.S.rows() << "x" << lifted.S.cols() << " -> "
              << options.out.string() << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const CommonOptions& options) {
  const ExperimentConfig config = load_experiment(options.config, options.overrides);
  ensure_directory(options.out);

  struct Job {
    std::size_t law = 0;
    std::size_t seed = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    for (std::size_t l = 0; l < config.laws.size(); ++l) jobs.push_back({l, s});
  }
  std::vector<Json> rows(jobs.size());
  std::vector<CheckedTrace> plotted(jobs.size());
  std::vector<char> diverged(jobs.size(), 0);
  const long window = default_tail_window(config.iterations);

  parallel_for(jobs.size(), [&](std::size_t i) {
    const LawSpec& law = config.laws[jobs[i].law];
    const std::uint64_t seed = config.seeds[jobs[i].seed];
    const SeedInstance inst = instantiate(config, seed);
    const SimulationConfig sim = simulation_config(config, law, inst);
    const IterationTrace trace = run(sim);

    const std::string file = trace_file_name(law.mode, seed);
    std::ostringstream csv;
    write_trace_csv(csv, trace);
    write_text_file(options.out / file, csv.str());

    const long n = static_cast<long>(trace.records.size());
    double tail = 0;
    for (long k = std::max(0L, n - window); k < n; ++k) {
      tail = std::max(tail, trace.records[static_cast<std::size_t>(k)].err_inf);
    }
    Json row = {{"law", std::string(to_string(law.mode))},
                {"seed", seed},
                {"trace", file},
                {"iterations_recorded", n},
                {"diverged", trace.diverged},
                {"last_finite_k", trace.last_finite_k},
                {"initial_error", n ? number_or_null(trace.records.front().err_inf) : Json(nullptr)},
                {"final_error", n ? number_or_null(trace.records.back().err_inf) : Json(nullptr)},
                {"tail_window", window},
                {"tail_error", number_or_null(tail)}};
    if (n > window && config.iterations > window) {
      const DiffStats s1 = diff_stats(sim.uncertainty, 1, config.iterations, window);
      const DiffStats s2 = diff_stats(sim.uncertainty, 2, config.iterations, window);
      const StabilityProfile prof = estimate_stability_profile(trace, s1, s2, window);
      row["sup_error"] = number_or_null(prof.sup_error);
      row["delta_n_tail"] = s1.tail_bound;
      row["delta2_n_tail"] = s2.tail_bound;
      row["ratio_dn"] = number_or_null(prof.ratio_dn);
      row["ratio_d2n"] = number_or_null(prof.ratio_d2n);
      row["classification"] = prof.classification;
    } else {
      row["classification"] = trace.diverged ? Json("diverged") : Json(nullptr);
    }
    row["conditions"] = condition_reports(law, inst, sim.gains);
    rows[i] = std::move(row);
    diverged[i] = trace.diverged ? 1 : 0;
    plotted[i].name = fs::path(file).stem().string();
    for (const auto& r : trace.records) plotted[i].err_inf.push_back(r.err_inf);
  });

  Json summary = {{"format_version", kFormatVersion},
                  {"command", "simulate"},
                  {"iterations", config.iterations},
                  {"runs", rows}};
  const bool all_diverged = std::all_of(diverged.begin(), diverged.end(), [](char d) { return d != 0; });
  summary["all_diverged"] = all_diverged;
  write_text_file(options.out / "summary.json", summary.dump(2) + "\n");
  if (config.plot) write_text_file(options.out / "convergence.svg", render_svg(plotted));

  if (!options.quiet) {
    for (const auto& r : rows) {
      std::cout << r["law"].get<std::string>() << " seed " << r["seed"].get<std::uint64_t>()
                << ": tail error " << (r["tail_error"].is_null() ? std::string("nan") : format_decimal(r["tail_error"].get<double>()))
                << (r["diverged"].get<bool>() ? " (diverged)" : "") << "\n";
    }
  }
  return all_diverged ? kExitDiverged : kExitOk;
}

int cmd_check(const CommonOptions& options) {
  const ExperimentConfig config = load_experiment(options.config, options.overrides);
  const int budget = config.raw.contains("lmi_budget")
                         ? static_cast<int>(as_count(config.raw.at("lmi_budget"), "lmi_budget"))
                         : 100;
  if (budget < 1) config_fail("lmi_budget must be at least 1");
  const bool write_files = !options.out.empty();
  if (write_files) ensure_directory(options.out);

  Json conditions = Json::array();
  Json lmis = Json::array();
  for (std::uint64_t seed : config.seeds) {
    const SeedInstance inst = instantiate(config, seed);
    for (const LawSpec& law : config.laws) {
      const GainSet gains = resolve_gains(config, law, inst);
      conditions.push_back({{"law", std::string(to_string(law.mode))},
                            {"seed", seed},
                            {"reports", condition_reports(law, inst, gains)}});

      std::optional<LmiProblem> problem;
      if ((law.mode == LawMode::eso_mixed || law.mode == LawMode::eso_full_state) && inst.structure) {
        problem = LmiProblem{LmiId::eq44, inst.plant.nominal(), *inst.structure, gains};
      } else if (law.mode == LawMode::eso_robust && inst.structure) {
        problem = LmiProblem{LmiId::eq65, inst.plant.nominal(), *inst.structure, gains};
      } else if (law.mode == LawMode::eso_model_free && inst.surrogate_structure && inst.surrogate) {
        problem = LmiProblem{LmiId::eq101, *inst.surrogate, *inst.surrogate_structure, gains};
      }
      if (!problem) continue;
      const auto cert = lmi_search(*problem, budget);
      Json entry = {{"law", std::string(to_string(law.mode))},
                    {"seed", seed},
                    {"id", std::string(to_string(problem->id))},
                    {"budget", budget},
                    {"found", cert.has_value()}};
      if (cert) {
        entry["tau"] = cert->tau;
        entry["implication_holds"] = theorem_implication_check(*problem, *cert, 100, seed);
        if (write_files) {
          const std::string name = "certificate_" + std::string(to_string(law.mode)) + "_" +
                                   std::string(to_string(problem->id)) + "_seed" + std::to_string(seed) +
                                   ".json";
          Json cj = {{"format_version", kFormatVersion},
                     {"Q11", matrix_json(cert->Q11)},
                     {"Q21", matrix_json(cert->Q21)},
                     {"Q22", matrix_json(cert->Q22)},
                     {"tau", cert->tau}};
          write_text_file(options.out / name, cj.dump(2) + "\n");
          entry["certificate"] = name;
        }
      }
      lmis.push_back(std::move(entry));
    }
  }
  Json report = {{"format_version", kFormatVersion},
                 {"command", "check"},
                 {"conditions", conditions},
                 {"lmi", lmis}};
  const std::string text = report.dump(2) + "\n";
  if (write_files) write_text_file(options.out / "check.json", text);
  if (!options.quiet) std::cout << text;
  return kExitOk;
}

int cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out, bool quiet) {
  if (inputs.empty()) throw ConfigError("plot: at least one trace CSV is required");
  std::vector<CheckedTrace> traces;
  for (const auto& p : inputs) traces.push_back(read_trace_csv(p));
  if (out.has_parent_path()) ensure_directory(out.parent_path());
  write_text_file(out, render_svg(traces));
  if (!quiet) std::cout << "wrote " << out.string() << " (" << traces.size() << " traces)\n";
  return kExitOk;
}

int run_main(int argc, char** argv) {
  CLI::App app{"Iterative learning control with extended state observers"};
  app.require_subcommand(1);

  CommonOptions lift_opts, sim_opts, check_opts;
  std::string sim_seeds, check_seeds;
  long sim_iterations = 0, check_iterations = 0;

  auto* lift = app.add_subcommand("lift", "Lift an ILC system into P, Q and S");
  lift->add_option("--config", lift_opts.config, "ILC system JSON")->required();
  lift->add_option("--out", lift_opts.out, "Output directory")->required();
  lift->add_flag("--quiet", lift_opts.quiet);

  auto add_experiment = [](CLI::App* sub, CommonOptions& o, std::string& seeds, long& iterations,
                           bool out_required) {
    sub->add_option("--config", o.config, "Experiment config JSON")->required();
    auto* out = sub->add_option("--out", o.out, "Output directory");
    if (out_required) out->required();
    sub->add_option("--seeds", seeds, "Comma-separated seed list");
    sub->add_option("--iterations", iterations, "Override the iteration count");
    sub->add_flag("--quiet", o.quiet);
  };
  auto* simulate = app.add_subcommand("simulate", "Run learning laws and write traces");
  add_experiment(simulate, sim_opts, sim_seeds, sim_iterations, true);
  auto* check = app.add_subcommand("check", "Report stability conditions and LMI certificates");
  add_experiment(check, check_opts, check_seeds, check_iterations, false);

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  bool plot_quiet = false;
  auto* plot = app.add_subcommand("plot", "Plot trace CSVs as an SVG");
  plot->add_option("traces", plot_inputs, "Trace CSV files")->required();
  plot->add_option("--out", plot_out, "Output SVG")->required();
  plot->add_flag("--quiet", plot_quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto finish_overrides = [](CommonOptions& o, const std::string& seeds, long iterations, CLI::App* sub) {
    if (!seeds.empty()) o.overrides.seeds = parse_seed_list(seeds);
    if (sub->count("--iterations")) o.overrides.iterations = iterations;
  };

  try {
    if (*lift) return cmd_lift(lift_opts);
    if (*simulate) {
      finish_overrides(sim_opts, sim_seeds, sim_iterations, simulate);
      return cmd_simulate(sim_opts);
    }
    if (*check) {
      finish_overrides(check_opts, check_seeds, check_iterations, check);
      return cmd_check(check_opts);
    }
    if (*plot) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      return cmd_plot(inputs, plot_out, plot_quiet);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace iterlearn::cli
